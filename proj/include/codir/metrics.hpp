#pragma once

#include <cstddef>
#include <vector>

namespace codir {

// Sorted list of distinct label indices.
using LabelSet = std::vector<std::size_t>;

// Example-based multi-label scores: per-sample precision/recall/F1 averaged
// over samples. Empty-set conventions: P = 1 if pred and true are both empty,
// 0 if only pred is empty; R = 1 if true is empty; F1 = 1 if both empty.
struct PrfReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<double> per_sample_precision;
  std::vector<double> per_sample_recall;
  std::vector<double> per_sample_f1;
};

PrfReport example_prf(const std::vector<LabelSet>& pred, const std::vector<LabelSet>& truth);

}  // namespace codir
