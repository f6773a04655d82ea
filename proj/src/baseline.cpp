#include "codir/baseline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace codir {

namespace {

std::vector<std::vector<float>> gather_images(const Dataset& ds,
                                              const std::vector<std::size_t>& idx) {
  std::vector<std::vector<float>> out;
  out.reserve(idx.size());
  for (std::size_t k : idx) out.push_back(ds.images[k]);
  return out;
}

std::vector<double> gather_targets(const Dataset& ds, const std::vector<std::size_t>& idx,
                                   HeadType head) {
  std::vector<double> out;
  for (std::size_t k : idx)
    for (std::uint8_t b : bxent_targets(ds, k, head)) out.push_back(b);
  return out;
}

}  // namespace

std::vector<std::uint8_t> bxent_targets(const Dataset& ds, std::size_t id, HeadType head) {
  if (head == HeadType::kBxentSingle) return ds.class_labels[id];
  if (head == HeadType::kBxentJoint) {
    std::vector<std::uint8_t> t = ds.class_labels[id];
    t.insert(t.end(), ds.context_labels[id].begin(), ds.context_labels[id].end());
    return t;
  }
  throw std::invalid_argument("bxent_targets: not a baseline head");
}

std::size_t bxent_head_out(const Dataset& ds, HeadType head) {
  if (head == HeadType::kBxentSingle) return ds.n_classes;
  if (head == HeadType::kBxentJoint) return ds.n_classes + ds.n_context;
  throw std::invalid_argument("bxent_head_out: not a baseline head");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double bce_loss(const std::vector<double>& logits, const std::vector<double>& targets) {
  if (logits.size() != targets.size() || logits.empty())
    throw std::invalid_argument("bce_loss: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double o = logits[i];
    if (std::isnan(o)) throw std::runtime_error("bce_loss: NaN logit at index " + std::to_string(i));
    // softplus(o) - y*o, with the stable branch for large |o|
    const double softplus = o > 0.0 ? o + std::log1p(std::exp(-o)) : std::log1p(std::exp(o));
    acc += softplus - targets[i] * o;
  }
  return acc / static_cast<double>(logits.size());
}

std::vector<double> bce_output_gradient(const std::vector<double>& logits,
                                        const std::vector<double>& targets) {
  std::vector<double> grad(logits.size());
  const double inv = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    grad[i] = inv * (sigmoid(logits[i]) - targets[i]);
  return grad;
}

namespace {

double eval_bce(const Model& model, const Dataset& ds, const std::vector<std::size_t>& idx) {
  double acc = 0.0;
  std::size_t total = 0;
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                  idx.begin() + static_cast<std::ptrdiff_t>(
                                                    std::min(start + chunk, idx.size())));
    auto cache = forward(model, gather_images(ds, part));
    auto targets = gather_targets(ds, part, model.cfg.head);
    acc += bce_loss(cache.outputs, targets) * static_cast<double>(part.size());
    total += part.size();
  }
  return acc / static_cast<double>(total);
}

}  // namespace

std::vector<BxentEpochLog> bxent_train(Model& model, const Dataset& ds, const TrainConfig& cfg) {
  if (model.cfg.head != HeadType::kBxentSingle && model.cfg.head != HeadType::kBxentJoint)
    throw std::invalid_argument("bxent_train: model does not carry a baseline head");
  if (model.cfg.head_out != bxent_head_out(ds, model.cfg.head))
    throw std::invalid_argument("bxent_train: head width does not match the dataset");

  const auto train_idx = ds.indices_of(Split::kTrain);
  const auto val_idx = ds.indices_of(Split::kVal);
  AdamState adam = init_adam(model, cfg.lr);
  const Rng shuffle_root = Rng(cfg.seed).child(0x42584e54);  // baseline shuffle stream

  std::vector<BxentEpochLog> log;
  BxentEpochLog initial;
  initial.val_loss = eval_bce(model, ds, val_idx);
  log.push_back(initial);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order = train_idx;
    Rng erng = shuffle_root.child(epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[erng.uniform_int(i)]);

    BxentEpochLog e;
    e.epoch = epoch;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<std::size_t> part(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() +
              static_cast<std::ptrdiff_t>(std::min(start + cfg.batch_size, order.size())));
      auto cache = forward(model, gather_images(ds, part));
      auto targets = gather_targets(ds, part, model.cfg.head);
      const double loss = bce_loss(cache.outputs, targets);
      if (std::isnan(loss)) throw std::runtime_error("bxent_train: loss diverged to NaN");
      Model grads = backward(model, cache, bce_output_gradient(cache.outputs, targets));
      adam_step(model, grads, adam);
      e.loss += loss;
      ++n_batches;
    }
    if (n_batches > 0) e.loss /= static_cast<double>(n_batches);
    e.val_loss = eval_bce(model, ds, val_idx);
    e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.push_back(e);
  }
  return log;
}

std::vector<double> sem_representation(const Model& model, const std::vector<float>& image) {
  auto out = critic_outputs(model, image);
  for (double& v : out) v = sigmoid(v);
  return out;
}

double best_unit_threshold(const std::vector<double>& scores,
                           const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("best_unit_threshold: bad inputs");
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> candidates;
  candidates.push_back(0.5 * sorted.front());  // below every score, inside (0,1)
  for (std::size_t k = 0; k + 1 < sorted.size(); ++k)
    if (sorted[k] < sorted[k + 1]) candidates.push_back(0.5 * (sorted[k] + sorted[k + 1]));
  candidates.push_back(0.5 * (sorted.back() + 1.0));  // above every score

  double best_t = candidates.front(), best_f1 = -1.0;
  for (double t : candidates) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
      const bool pred = scores[k] > t;
      if (pred && labels[k]) ++tp;
      else if (pred) ++fp;
      else if (labels[k]) ++fn;
    }
    const double f1 = (tp + fp + fn) == 0
                          ? 1.0
                          : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_t = t;  // ascending candidates keep the smallest maximizer
    }
  }
  return best_t;
}

std::vector<double> fit_bxent_thresholds(const Model& model, const Dataset& ds,
                                         const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw std::invalid_argument("fit_bxent_thresholds: empty split");
  const std::size_t m = model.cfg.head_out;
  std::vector<std::vector<double>> scores(m, std::vector<double>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto rep = sem_representation(model, ds.images[ids[k]]);
    for (std::size_t j = 0; j < m; ++j) scores[j][k] = rep[j];
  }
  std::vector<double> thresholds(m);
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<std::uint8_t> labels(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k)
      labels[k] = bxent_targets(ds, ids[k], model.cfg.head)[j];
    thresholds[j] = best_unit_threshold(scores[j], labels);
  }
  return thresholds;
}

LabelSet bxent_classify(const Model& model, const std::vector<float>& image,
                        const std::vector<double>& thresholds) {
  if (thresholds.size() != model.cfg.head_out)
    throw std::invalid_argument("bxent_classify: threshold count mismatch");
  const auto rep = sem_representation(model, image);
  LabelSet out;
  for (std::size_t i = 0; i < model.cfg.n_classes; ++i)
    if (rep[i] > thresholds[i]) out.push_back(i);
  return out;
}

Matrix sem_class_templates(const Model& model, const Dataset& ds,
                           const std::vector<std::size_t>& ids) {
  const std::size_t n_c = ds.n_classes, m = model.cfg.head_out;
  Matrix templates(n_c, m);
  std::vector<double> counts(n_c, 0.0);
  for (std::size_t id : ids) {
    const auto rep = sem_representation(model, ds.images[id]);
    for (std::size_t i = 0; i < n_c; ++i) {
      if (!ds.class_labels[id][i]) continue;
      counts[i] += 1.0;
      for (std::size_t j = 0; j < m; ++j) templates(i, j) += rep[j];
    }
  }
  for (std::size_t i = 0; i < n_c; ++i) {
    if (counts[i] == 0.0)
      throw std::runtime_error("sem_class_templates: class " + std::to_string(i) +
                               " has no member");
    for (std::size_t j = 0; j < m; ++j) templates(i, j) /= counts[i];
  }
  return templates;
}

std::vector<double> sem_modify(const std::vector<double>& rep, std::size_t c_plus,
                               std::size_t c_minus, const Matrix& templates) {
  if (rep.size() != templates.cols || c_plus >= templates.rows || c_minus >= templates.rows)
    throw std::invalid_argument("sem_modify: shape mismatch");
  std::vector<double> out = rep;
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] += templates(c_minus, j) - templates(c_plus, j);
  return out;
}

}  // namespace codir
