#pragma once

#include <cstdint>
#include <vector>

#include "codir/fisher.hpp"
#include "codir/metrics.hpp"
#include "codir/net.hpp"
#include "codir/synthdata.hpp"

namespace codir {

// Per-sample target bits for a sigmoid head: class labels only (single) or
// class followed by context labels (joint).
std::vector<std::uint8_t> bxent_targets(const Dataset& ds, std::size_t id, HeadType head);
std::size_t bxent_head_out(const Dataset& ds, HeadType head);

// Mean binary cross-entropy over batch and outputs, from logits.
double bce_loss(const std::vector<double>& logits, const std::vector<double>& targets);
std::vector<double> bce_output_gradient(const std::vector<double>& logits,
                                        const std::vector<double>& targets);

struct BxentEpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean training batch loss
  double val_loss = 0.0;  // full validation split
  double wall_seconds = 0.0;
};

// Same harness as the Fisher trainer — shuffled minibatches, Adam, NaN guard —
// with the loss swapped for BCE. Entry 0 of the log is the pre-training
// validation evaluation.
std::vector<BxentEpochLog> bxent_train(Model& model, const Dataset& ds, const TrainConfig& cfg);

double sigmoid(double x);

// Raw sigmoid output vector (the SEM representation).
std::vector<double> sem_representation(const Model& model, const std::vector<float>& image);

// Per-output thresholds maximizing binary F1 on the given samples; candidates
// are midpoints of sorted scores plus (0, min)/2 and (max, 1)/2 end caps, so
// fitted values stay inside (0, 1).
std::vector<double> fit_bxent_thresholds(const Model& model, const Dataset& ds,
                                         const std::vector<std::size_t>& ids);
double best_unit_threshold(const std::vector<double>& scores,
                           const std::vector<std::uint8_t>& labels);

// Class bits are the first n_classes outputs regardless of head type.
LabelSet bxent_classify(const Model& model, const std::vector<float>& image,
                        const std::vector<double>& thresholds);

// Mean SEM vector per class over the given samples (rows = classes).
Matrix sem_class_templates(const Model& model, const Dataset& ds,
                           const std::vector<std::size_t>& ids);

// Baseline analog of the class swap: subtract the c_plus template, add the
// c_minus one.
std::vector<double> sem_modify(const std::vector<double>& rep, std::size_t c_plus,
                               std::size_t c_minus, const Matrix& templates);

}  // namespace codir
