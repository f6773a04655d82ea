#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "codir/envmask.hpp"
#include "codir/numerics.hpp"

namespace codir {

enum class HeadType : std::uint8_t { kCodir = 0, kBxentSingle = 1, kBxentJoint = 2 };

struct ModelConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t in_channels = 1;
  std::size_t c1 = 24;
  std::size_t c2 = 48;
  std::size_t c3 = 96;  // feature width after global average pooling
  std::size_t n_classes = 8;
  std::size_t n_envs = 48;
  HeadType head = HeadType::kCodir;

  // kCodir maps features to the n_c x n_e critic grid; baselines map to a
  // flat sigmoid head.
  std::size_t head_out = 8 * 48;

  bool operator==(const ModelConfig&) const = default;
};

// Three 3x3 same-padding conv layers (ReLU, the first two followed by 2x2
// max-pool, the last by global average pooling) and an affine head. The head
// stays linear in the pooled features, which the Fisher critic family needs.
struct Model {
  ModelConfig cfg;
  std::vector<double> conv1_w, conv1_b;
  std::vector<double> conv2_w, conv2_b;
  std::vector<double> conv3_w, conv3_b;
  std::vector<double> head_w, head_b;  // head_out x c3, head_out
  std::uint64_t revision = 0;          // bumped by every weight update
};

Model init_model(const ModelConfig& cfg, Rng& rng);
Model zeros_like(const Model& m);

// Weight tensors in declaration order; gradients and Adam moments follow the
// same order.
std::vector<std::vector<double>*> weight_tensors(Model& m);
std::vector<const std::vector<double>*> weight_tensors(const Model& m);

struct ForwardCache {
  std::size_t n_batch = 0;
  std::uint64_t model_revision = 0;
  std::vector<double> input;        // n_b * in_ch * H * W
  std::vector<double> z1, p1;       // pre-ReLU conv1, post-pool
  std::vector<std::size_t> arg1;
  std::vector<double> z2, p2;
  std::vector<std::size_t> arg2;
  std::vector<double> z3;           // pre-ReLU conv3
  std::vector<double> features;     // n_b * c3
  std::vector<double> outputs;      // n_b * head_out
};

ForwardCache forward(const Model& m, const std::vector<std::vector<float>>& batch);

// Critic grid for one image, flattened n_c * n_e (or head_out for baselines).
std::vector<double> critic_outputs(const Model& m, const std::vector<float>& image);

// Accumulates d(loss)/d(weights) for output gradients d(loss)/d(outputs).
Model backward(const Model& m, const ForwardCache& cache, const std::vector<double>& d_outputs);

struct AdamState {
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m1, m2;
};

AdamState init_adam(const Model& m, double lr = 5e-3);
void adam_step(Model& m, const Model& grads, AdamState& state);

// Checkpoint container shared by the CoDiR model and the BXENT baselines.
// Stores f32 weights plus the environment spec and run seed, so a checkpoint
// is self-sufficient for template recomputation.
struct Checkpoint {
  Model model;
  EnvironmentSpec env;
  std::uint64_t run_seed = 0;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace codir
