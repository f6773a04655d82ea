#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "codir/envmask.hpp"
#include "codir/metrics.hpp"
#include "codir/net.hpp"
#include "codir/synthdata.hpp"

namespace codir {

// Post-training artifacts: environment expectations Ebar, templates T and
// per-class decision thresholds, plus the sample ids that produced them.
struct TemplateSet {
  Matrix ebar;                     // n_c x n_e weighted environment expectations
  Matrix templates;                // n_c x n_e, Ebar minus class expectations
  std::vector<double> thresholds;  // length n_c; +/-inf sentinels allowed
  std::vector<std::size_t> template_ids;
  std::vector<std::size_t> threshold_ids;
  std::vector<std::size_t> warned_classes;  // absent from the threshold split
};

// Deterministic 2/3 template : 1/3 threshold partition of the training ids.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_template_threshold(
    const std::vector<std::size_t>& train_ids, std::uint64_t seed);

// Weighted conditional means over the template split:
//   Ebar_{i,j} = sum_k w^e_{k,j} f_{i,j}(s_k) / sum_k w^e_{k,j}
//   T_{i,j}    = Ebar_{i,j} - sum_k 1_{c_i}(s_k) f_{i,j}(s_k) / sum_k 1_{c_i}(s_k)
TemplateSet fit_templates(const Model& model, const Dataset& ds,
                          const std::vector<std::vector<std::uint8_t>>& env_labels,
                          const EnvironmentSpec& spec,
                          const std::vector<std::size_t>& template_ids);

// D = Ebar - f(s), one n_c x n_e matrix per input.
Matrix instance_rep(const Model& model, const std::vector<float>& image, const Matrix& ebar);
std::vector<Matrix> instance_reps(const Model& model, const Dataset& ds,
                                  const std::vector<std::size_t>& ids, const Matrix& ebar);

struct ThresholdFit {
  double threshold = 0.0;
  double f1 = 0.0;
};

// Exhaustive F1-optimal threshold for the rule score > t; candidates are
// +/-inf sentinels and midpoints of consecutive sorted scores. Ties pick the
// smallest threshold.
ThresholdFit best_f1_threshold(const std::vector<double>& scores,
                               const std::vector<std::uint8_t>& labels);

void fit_thresholds(const Model& model, const Dataset& ds,
                    const std::vector<std::size_t>& threshold_ids, TemplateSet& templates);

// { i : cos(D_i, T_i) > t_i }
LabelSet classify(const Matrix& d, const TemplateSet& templates);

void write_templates(const std::filesystem::path& path, const TemplateSet& ts);
TemplateSet read_templates(const std::filesystem::path& path);

// One CDIR-REP record per sample: instance representation plus its labels.
struct RepRecord {
  std::uint32_t sample_id = 0;
  Matrix d;
  std::vector<std::uint8_t> class_labels;
  std::vector<std::uint8_t> context_labels;
};

void write_reps(const std::filesystem::path& path, const std::vector<RepRecord>& reps);
std::vector<RepRecord> read_reps(const std::filesystem::path& path);

}  // namespace codir
