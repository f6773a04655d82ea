#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "codir/envmask.hpp"
#include "codir/numerics.hpp"

namespace codir {

// L2-regularized logistic regression on frozen feature vectors.
struct ProbeModel {
  std::vector<double> w;
  double bias = 0.0;
  double l2 = 0.0;
};

struct ProbeConfig {
  double l2 = 1e-2;            // applied to w only, never the bias
  double grad_tol = 1e-6;      // L2 norm of the full gradient
  std::size_t max_iters = 10000;
  std::vector<double> init_w;  // empty = zeros; exposed for convexity tests
  double init_b = 0.0;
};

double probe_loss(const ProbeModel& m, const std::vector<std::vector<double>>& features,
                  const std::vector<std::uint8_t>& targets);

// Full gradient; last entry is d/d(bias).
std::vector<double> probe_gradient(const ProbeModel& m,
                                   const std::vector<std::vector<double>>& features,
                                   const std::vector<std::uint8_t>& targets);

// Full-batch gradient descent with backtracking line search, run until the
// gradient norm falls under grad_tol or max_iters is hit. Deterministic.
ProbeModel fit_probe(const std::vector<std::vector<double>>& features,
                     const std::vector<std::uint8_t>& targets, const ProbeConfig& cfg = {});

double probe_score(const ProbeModel& m, std::span<const double> features);

// Shuffled near-equal fold index lists; deterministic in (n, n_folds, seed).
std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t n_folds,
                                                 std::uint64_t seed);

struct ProbeMethodResult {
  std::string method;
  std::vector<double> fold_f1;
  double mean = 0.0;
  double stddev = 0.0;
};

// Cross-validated probe F1 for several feature sets of the same samples.
// Every method sees bitwise-identical folds.
std::vector<ProbeMethodResult> probe_experiment(
    const std::vector<std::pair<std::string, std::vector<std::vector<double>>>>& methods,
    const std::vector<std::uint8_t>& targets, std::size_t n_folds, std::uint64_t seed,
    const ProbeConfig& cfg = {});

// Guard against label leakage: an environment spec built before the holdout
// still spans the removed label column.
void check_holdout_exclusion(const EnvironmentSpec& spec, std::size_t n_context_reduced);

void write_probe_report_csv(const std::filesystem::path& path,
                            const std::vector<ProbeMethodResult>& results);

}  // namespace codir
