#include "codir/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace codir {

namespace {

double sigmoid_of(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double raw_score(const ProbeModel& m, const std::vector<double>& x) {
  double z = m.bias;
  for (std::size_t j = 0; j < m.w.size(); ++j) z += m.w[j] * x[j];
  return z;
}

void validate(const std::vector<std::vector<double>>& features,
              const std::vector<std::uint8_t>& targets) {
  if (features.size() != targets.size() || features.empty())
    throw std::invalid_argument("probe: features/targets mismatch");
  std::size_t pos = 0;
  for (std::uint8_t y : targets) pos += y;
  if (pos == 0 || pos == targets.size())
    throw std::invalid_argument("probe: targets are degenerate (single class)");
}

}  // namespace

double probe_loss(const ProbeModel& m, const std::vector<std::vector<double>>& features,
                  const std::vector<std::uint8_t>& targets) {
  double acc = 0.0;
  for (std::size_t k = 0; k < features.size(); ++k) {
    const double z = raw_score(m, features[k]);
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    acc += softplus - targets[k] * z;
  }
  acc /= static_cast<double>(features.size());
  double reg = 0.0;
  for (double w : m.w) reg += w * w;
  return acc + 0.5 * m.l2 * reg;
}

std::vector<double> probe_gradient(const ProbeModel& m,
                                   const std::vector<std::vector<double>>& features,
                                   const std::vector<std::uint8_t>& targets) {
  const std::size_t d = m.w.size();
  std::vector<double> grad(d + 1, 0.0);
  const double inv = 1.0 / static_cast<double>(features.size());
  for (std::size_t k = 0; k < features.size(); ++k) {
    const double r = inv * (sigmoid_of(raw_score(m, features[k])) - targets[k]);
    for (std::size_t j = 0; j < d; ++j) grad[j] += r * features[k][j];
    grad[d] += r;
  }
  for (std::size_t j = 0; j < d; ++j) grad[j] += m.l2 * m.w[j];
  return grad;
}

ProbeModel fit_probe(const std::vector<std::vector<double>>& features,
                     const std::vector<std::uint8_t>& targets, const ProbeConfig& cfg) {
  validate(features, targets);
  const std::size_t d = features.front().size();
  ProbeModel m;
  m.l2 = cfg.l2;
  m.w = cfg.init_w.empty() ? std::vector<double>(d, 0.0) : cfg.init_w;
  if (m.w.size() != d) throw std::invalid_argument("fit_probe: init_w dimension mismatch");
  m.bias = cfg.init_b;

  double loss = probe_loss(m, features, targets);
  double step = 1.0;
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    const auto grad = probe_gradient(m, features, targets);
    double gnorm2 = 0.0;
    for (double g : grad) gnorm2 += g * g;
    if (std::sqrt(gnorm2) <= cfg.grad_tol) break;

    // Backtracking line search with the Armijo rule.
    step = std::min(step * 2.0, 1e4);
    ProbeModel trial = m;
    double trial_loss;
    while (true) {
      for (std::size_t j = 0; j < d; ++j) trial.w[j] = m.w[j] - step * grad[j];
      trial.bias = m.bias - step * grad[d];
      trial_loss = probe_loss(trial, features, targets);
      if (trial_loss <= loss - 0.5 * step * gnorm2 || step < 1e-16) break;
      step *= 0.5;
    }
    m = trial;
    loss = trial_loss;
  }
  return m;
}

double probe_score(const ProbeModel& m, std::span<const double> features) {
  if (features.size() != m.w.size())
    throw std::invalid_argument("probe_score: dimension mismatch");
  double z = m.bias;
  for (std::size_t j = 0; j < m.w.size(); ++j) z += m.w[j] * features[j];
  return sigmoid_of(z);
}

std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t n_folds,
                                                 std::uint64_t seed) {
  if (n_folds < 2 || n_folds > n)
    throw std::invalid_argument("make_folds: need 2 <= n_folds <= n");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed).child(0x464f4c44);  // fold stream
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
  std::vector<std::vector<std::size_t>> folds(n_folds);
  for (std::size_t i = 0; i < n; ++i) folds[i % n_folds].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<ProbeMethodResult> probe_experiment(
    const std::vector<std::pair<std::string, std::vector<std::vector<double>>>>& methods,
    const std::vector<std::uint8_t>& targets, std::size_t n_folds, std::uint64_t seed,
    const ProbeConfig& cfg) {
  if (methods.empty()) throw std::invalid_argument("probe_experiment: no methods");
  const auto folds = make_folds(targets.size(), n_folds, seed);

  std::vector<ProbeMethodResult> results;
  for (const auto& [name, features] : methods) {
    if (features.size() != targets.size())
      throw std::invalid_argument("probe_experiment: method " + name + " sample count mismatch");
    ProbeMethodResult res;
    res.method = name;
    for (std::size_t f = 0; f < n_folds; ++f) {
      std::vector<std::vector<double>> train_x;
      std::vector<std::uint8_t> train_y;
      for (std::size_t g = 0; g < n_folds; ++g) {
        if (g == f) continue;
        for (std::size_t i : folds[g]) {
          train_x.push_back(features[i]);
          train_y.push_back(targets[i]);
        }
      }
      // Standardize per dimension on the training folds: the single L2
      // coefficient is meaningless when singular values sit next to unit-norm
      // factor entries.
      const std::size_t dim = train_x.front().size();
      std::vector<double> mu(dim, 0.0), sigma(dim, 0.0);
      for (const auto& x : train_x)
        for (std::size_t j = 0; j < dim; ++j) mu[j] += x[j];
      for (auto& v : mu) v /= static_cast<double>(train_x.size());
      for (const auto& x : train_x)
        for (std::size_t j = 0; j < dim; ++j) sigma[j] += (x[j] - mu[j]) * (x[j] - mu[j]);
      for (auto& v : sigma) {
        v = std::sqrt(v / static_cast<double>(train_x.size()));
        if (v < 1e-12) v = 1.0;
      }
      for (auto& x : train_x)
        for (std::size_t j = 0; j < dim; ++j) x[j] = (x[j] - mu[j]) / sigma[j];

      const ProbeModel m = fit_probe(train_x, train_y, cfg);
      double tp = 0, fp = 0, fn = 0;
      std::vector<double> z(dim);
      for (std::size_t i : folds[f]) {
        for (std::size_t j = 0; j < dim; ++j) z[j] = (features[i][j] - mu[j]) / sigma[j];
        const bool pred = probe_score(m, z) > 0.5;
        if (pred && targets[i]) tp += 1;
        else if (pred) fp += 1;
        else if (targets[i]) fn += 1;
      }
      res.fold_f1.push_back((tp + fp + fn) == 0 ? 1.0 : 2 * tp / (2 * tp + fp + fn));
    }
    for (double f1 : res.fold_f1) res.mean += f1;
    res.mean /= static_cast<double>(n_folds);
    for (double f1 : res.fold_f1) res.stddev += (f1 - res.mean) * (f1 - res.mean);
    res.stddev = std::sqrt(res.stddev / static_cast<double>(n_folds));
    results.push_back(std::move(res));
  }
  return results;
}

void check_holdout_exclusion(const EnvironmentSpec& spec, std::size_t n_context_reduced) {
  if (spec.n_labels != n_context_reduced)
    throw std::runtime_error(
        "holdout leak: environment spec spans " + std::to_string(spec.n_labels) +
        " labels but the reduced dataset has " + std::to_string(n_context_reduced));
}

void write_probe_report_csv(const std::filesystem::path& path,
                            const std::vector<ProbeMethodResult>& results) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << "method,fold,f1,mean,std\n";
  for (const auto& r : results)
    for (std::size_t f = 0; f < r.fold_f1.size(); ++f)
      os << r.method << ',' << f << ',' << r.fold_f1[f] << ',' << r.mean << ',' << r.stddev
         << '\n';
}

}  // namespace codir
