#include "codir/fisher.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace codir {

FisherBatchStats fisher_stats(const std::vector<double>& outputs, const MaskPair& masks,
                              const LagrangeState& lag) {
  const std::size_t n_b = masks.n_batch, n_c = masks.n_classes, n_e = masks.n_envs;
  if (outputs.size() != n_b * n_c * n_e)
    throw std::invalid_argument("fisher_stats: outputs do not match mask shape");
  if (lag.lambda.rows != n_c || lag.lambda.cols != n_e)
    throw std::invalid_argument("fisher_stats: lambda shape mismatch");

  FisherBatchStats s;
  s.e_fe = Matrix(n_c, n_e);
  s.e_fc = Matrix(n_c, n_e);
  s.e_fes = Matrix(n_c, n_e);
  s.e_fcs = Matrix(n_c, n_e);
  s.constraint = Matrix(n_c, n_e);

  for (std::size_t k = 0; k < n_b; ++k) {
    for (std::size_t i = 0; i < n_c; ++i)
      for (std::size_t j = 0; j < n_e; ++j) {
        const std::size_t idx = masks.at(k, i, j);
        const double o = outputs[idx];
        if (std::isnan(o))
          throw std::runtime_error("fisher_stats: NaN output at batch index " +
                                   std::to_string(k));
        const double oe = o * masks.me[idx];
        const double oc = o * masks.mc[idx];
        s.e_fe(i, j) += oe;
        s.e_fc(i, j) += oc;
        s.e_fes(i, j) += oe * oe;
        s.e_fcs(i, j) += oc * oc;
      }
  }
  const double inv = 1.0 / static_cast<double>(n_b);
  double loss = 0.0;
  for (std::size_t i = 0; i < n_c; ++i)
    for (std::size_t j = 0; j < n_e; ++j) {
      s.e_fe(i, j) *= inv;
      s.e_fc(i, j) *= inv;
      s.e_fes(i, j) *= inv;
      s.e_fcs(i, j) *= inv;
      const double c = 1.0 - (0.5 * s.e_fes(i, j) + 0.5 * s.e_fcs(i, j));
      s.constraint(i, j) = c;
      loss -= s.e_fe(i, j) - s.e_fc(i, j) + lag.lambda(i, j) * c - 0.5 * lag.rho * c * c;
    }
  s.loss = loss;
  return s;
}

std::vector<double> fisher_output_gradient(const std::vector<double>& outputs,
                                           const MaskPair& masks, const LagrangeState& lag,
                                           const FisherBatchStats& stats) {
  const std::size_t n_b = masks.n_batch, n_c = masks.n_classes, n_e = masks.n_envs;
  std::vector<double> grad(outputs.size());
  const double inv = 1.0 / static_cast<double>(n_b);
  for (std::size_t k = 0; k < n_b; ++k)
    for (std::size_t i = 0; i < n_c; ++i)
      for (std::size_t j = 0; j < n_e; ++j) {
        const std::size_t idx = masks.at(k, i, j);
        const double me = masks.me[idx], mc = masks.mc[idx];
        const double multiplier = lag.lambda(i, j) - lag.rho * stats.constraint(i, j);
        grad[idx] = -inv * (me - mc - multiplier * (me * me + mc * mc) * outputs[idx]);
      }
  return grad;
}

void lambda_update(LagrangeState& lag, const FisherBatchStats& stats) {
  if (stats.constraint.rows != lag.lambda.rows || stats.constraint.cols != lag.lambda.cols)
    throw std::invalid_argument("lambda_update: shape mismatch");
  for (std::size_t i = 0; i < lag.lambda.data.size(); ++i)
    lag.lambda.data[i] -= lag.rho * stats.constraint.data[i];
}

namespace {

std::vector<std::vector<float>> gather_images(const Dataset& ds,
                                              const std::vector<std::size_t>& idx) {
  std::vector<std::vector<float>> out;
  out.reserve(idx.size());
  for (std::size_t k : idx) out.push_back(ds.images[k]);
  return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& src, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t k : idx) out.push_back(src[k]);
  return out;
}

}  // namespace

double ipm_numerator(const Model& model, const Dataset& ds,
                     const std::vector<std::size_t>& indices,
                     const std::vector<std::vector<std::uint8_t>>& env_labels,
                     const EnvironmentSpec& spec) {
  const std::size_t n_c = model.cfg.n_classes, n_e = model.cfg.n_envs;
  Matrix sum_e(n_c, n_e), sum_c(n_c, n_e);
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    std::vector<std::size_t> part(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                  indices.begin() + static_cast<std::ptrdiff_t>(
                                                        std::min(start + chunk, indices.size())));
    auto cache = forward(model, gather_images(ds, part));
    auto masks = make_masks(gather(ds.class_labels, part), gather(env_labels, part), spec);
    for (std::size_t k = 0; k < part.size(); ++k)
      for (std::size_t i = 0; i < n_c; ++i)
        for (std::size_t j = 0; j < n_e; ++j) {
          const std::size_t idx = masks.at(k, i, j);
          sum_e(i, j) += cache.outputs[idx] * masks.me[idx];
          sum_c(i, j) += cache.outputs[idx] * masks.mc[idx];
        }
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < n_c * n_e; ++i)
    mean += (sum_e.data[i] - sum_c.data[i]) / static_cast<double>(indices.size());
  return mean / static_cast<double>(n_c * n_e);
}

TrainResult train(Model& model, const Dataset& ds,
                  const std::vector<std::vector<std::uint8_t>>& env_labels,
                  const EnvironmentSpec& spec, const TrainConfig& cfg) {
  if (env_labels.size() != ds.size())
    throw std::invalid_argument("train: env_labels not aligned with dataset");
  if (model.cfg.n_classes != ds.n_classes || model.cfg.n_envs != spec.n_envs)
    throw std::invalid_argument("train: model dims do not match dataset/spec");

  const auto train_idx = ds.indices_of(Split::kTrain);
  const auto val_idx = ds.indices_of(Split::kVal);
  TrainResult result;
  result.lagrange = LagrangeState(model.cfg.n_classes, model.cfg.n_envs, cfg.rho);
  AdamState adam = init_adam(model, cfg.lr);
  const Rng shuffle_root = Rng(cfg.seed).child(0x53484652);  // shuffle stream

  EpochLog initial;
  initial.epoch = 0;
  initial.val_ipm_numerator = ipm_numerator(model, ds, val_idx, env_labels, spec);
  result.log.push_back(initial);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order = train_idx;
    Rng erng = shuffle_root.child(epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[erng.uniform_int(i)]);

    EpochLog log;
    log.epoch = epoch;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<std::size_t> part(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() +
              static_cast<std::ptrdiff_t>(std::min(start + cfg.batch_size, order.size())));
      auto cache = forward(model, gather_images(ds, part));
      auto masks = make_masks(gather(ds.class_labels, part), gather(env_labels, part), spec);
      auto stats = fisher_stats(cache.outputs, masks, result.lagrange);
      if (std::isnan(stats.loss)) throw std::runtime_error("train: loss diverged to NaN");
      auto dout = fisher_output_gradient(cache.outputs, masks, result.lagrange, stats);
      Model grads = backward(model, cache, dout);
      adam_step(model, grads, adam);
      lambda_update(result.lagrange, stats);
      ++log.adam_steps;
      ++log.lambda_updates;
      ++n_batches;

      log.loss += stats.loss;
      double abs_c = 0.0, num = 0.0;
      for (std::size_t i = 0; i < stats.constraint.data.size(); ++i) {
        abs_c += std::abs(stats.constraint.data[i]);
        num += stats.e_fe.data[i] - stats.e_fc.data[i];
      }
      log.mean_abs_constraint += abs_c / static_cast<double>(stats.constraint.data.size());
      log.mean_ipm_numerator += num / static_cast<double>(stats.constraint.data.size());
    }
    if (n_batches > 0) {
      log.loss /= static_cast<double>(n_batches);
      log.mean_abs_constraint /= static_cast<double>(n_batches);
      log.mean_ipm_numerator /= static_cast<double>(n_batches);
    }
    log.val_ipm_numerator = ipm_numerator(model, ds, val_idx, env_labels, spec);
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
  }
  return result;
}

void write_train_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << "epoch,loss,mean_abs_constraint,mean_ipm_numerator,val_ipm_numerator,wall_seconds\n";
  for (const auto& e : log)
    os << e.epoch << ',' << e.loss << ',' << e.mean_abs_constraint << ','
       << e.mean_ipm_numerator << ',' << e.val_ipm_numerator << ',' << e.wall_seconds << '\n';
}

GradcheckReport loss_gradcheck(Model& model, const std::vector<std::vector<float>>& images,
                               const std::vector<std::vector<std::uint8_t>>& class_labels,
                               const std::vector<std::vector<std::uint8_t>>& env_labels,
                               const EnvironmentSpec& spec, const LagrangeState& lag,
                               std::size_t conv_samples, Rng& rng) {
  auto masks = make_masks(class_labels, env_labels, spec);
  auto loss_of = [&]() {
    auto cache = forward(model, images);
    return fisher_stats(cache.outputs, masks, lag).loss;
  };

  auto cache = forward(model, images);
  auto stats = fisher_stats(cache.outputs, masks, lag);
  auto dout = fisher_output_gradient(cache.outputs, masks, lag, stats);
  Model analytic = backward(model, cache, dout);

  const double h = 1e-4;
  auto rel_err_at = [&](std::vector<double>& w, const std::vector<double>& g, std::size_t i) {
    const double saved = w[i];
    w[i] = saved + h;
    const double up = loss_of();
    w[i] = saved - h;
    const double down = loss_of();
    w[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    return std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6});
  };

  GradcheckReport rep;
  for (std::size_t i = 0; i < model.head_b.size(); ++i)
    rep.head_err = std::max(rep.head_err, rel_err_at(model.head_b, analytic.head_b, i));
  for (std::size_t t = 0; t < std::min<std::size_t>(model.head_w.size(), 50); ++t) {
    const std::size_t i = rng.uniform_int(model.head_w.size());
    rep.head_err = std::max(rep.head_err, rel_err_at(model.head_w, analytic.head_w, i));
  }

  std::vector<std::pair<std::vector<double>*, std::vector<double>*>> convs = {
      {&model.conv1_w, &analytic.conv1_w},
      {&model.conv2_w, &analytic.conv2_w},
      {&model.conv3_w, &analytic.conv3_w}};
  for (std::size_t t = 0; t < conv_samples; ++t) {
    auto& [w, g] = convs[rng.uniform_int(convs.size())];
    const std::size_t i = rng.uniform_int(w->size());
    rep.conv_err = std::max(rep.conv_err, rel_err_at(*w, *g, i));
  }
  return rep;
}

}  // namespace codir
