#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "codir/envmask.hpp"
#include "codir/net.hpp"
#include "codir/numerics.hpp"
#include "codir/synthdata.hpp"

namespace codir {

// Per-batch Fisher IPM statistics over the (n_c, n_e) grid. Means are taken
// over the whole batch (zeros from non-members included), which weights each
// sample by its label prevalence.
struct FisherBatchStats {
  Matrix e_fe;        // mean of env-masked outputs
  Matrix e_fc;        // mean of class-masked outputs
  Matrix e_fes;       // mean of squared env-masked outputs
  Matrix e_fcs;       // mean of squared class-masked outputs
  Matrix constraint;  // 1 - (0.5*e_fes + 0.5*e_fcs)
  double loss = 0.0;
};

struct LagrangeState {
  Matrix lambda;  // n_c x n_e, starts at zero
  double rho = 1e-2;

  LagrangeState() = default;
  LagrangeState(std::size_t n_classes, std::size_t n_envs, double rho_in)
      : lambda(n_classes, n_envs), rho(rho_in) {}
};

FisherBatchStats fisher_stats(const std::vector<double>& outputs, const MaskPair& masks,
                              const LagrangeState& lag);

// d(loss)/d(outputs), flattened like the outputs; lambda held constant.
std::vector<double> fisher_output_gradient(const std::vector<double>& outputs,
                                           const MaskPair& masks, const LagrangeState& lag,
                                           const FisherBatchStats& stats);

// lambda <- lambda - rho * constraint, elementwise.
void lambda_update(LagrangeState& lag, const FisherBatchStats& stats);

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  double lr = 5e-3;
  double rho = 1e-2;
  std::uint64_t seed = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double mean_abs_constraint = 0.0;
  double mean_ipm_numerator = 0.0;      // training batches
  double val_ipm_numerator = 0.0;       // full validation split
  double wall_seconds = 0.0;
  std::size_t adam_steps = 0;
  std::size_t lambda_updates = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;  // entry 0 is the pre-training evaluation
  LagrangeState lagrange;
};

// Algorithm: per batch run forward, fisher_stats, backprop of the loss with
// lambda frozen, one Adam step, then one lambda update. env_labels must be
// aligned with the dataset samples and spec.n_labels wide.
TrainResult train(Model& model, const Dataset& ds,
                  const std::vector<std::vector<std::uint8_t>>& env_labels,
                  const EnvironmentSpec& spec, const TrainConfig& cfg);

void write_train_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

// Mean over (i,j) of E_fE - E_fC evaluated over the given samples.
double ipm_numerator(const Model& model, const Dataset& ds,
                     const std::vector<std::size_t>& indices,
                     const std::vector<std::vector<std::uint8_t>>& env_labels,
                     const EnvironmentSpec& spec);

struct GradcheckReport {
  double head_err = 0.0;  // worst relative error over head weights/biases
  double conv_err = 0.0;  // worst relative error over sampled conv weights
};

// End-to-end check of d(loss)/d(weights) against central finite differences
// at 64-bit on a tiny model and fixed batch.
GradcheckReport loss_gradcheck(Model& model,
                               const std::vector<std::vector<float>>& images,
                               const std::vector<std::vector<std::uint8_t>>& class_labels,
                               const std::vector<std::vector<std::uint8_t>>& env_labels,
                               const EnvironmentSpec& spec, const LagrangeState& lag,
                               std::size_t conv_samples, Rng& rng);

}  // namespace codir
