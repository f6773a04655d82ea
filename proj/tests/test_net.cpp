#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "codir/net.hpp"

using namespace codir;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.height = 8;
  cfg.width = 8;
  cfg.c1 = 4;
  cfg.c2 = 4;
  cfg.c3 = 4;
  cfg.n_classes = 2;
  cfg.n_envs = 3;
  cfg.head_out = 6;
  return cfg;
}

std::vector<float> random_image(std::size_t n, Rng& rng) {
  std::vector<float> img(n);
  for (auto& p : img) p = static_cast<float>(rng.uniform());
  return img;
}

// Straightforward re-implementation of the forward pass using explicit
// zero-padded buffers; kept independent of the library code path.
std::vector<double> naive_forward(const Model& m, const std::vector<float>& image) {
  const auto& cfg = m.cfg;
  auto conv = [](const std::vector<double>& in, std::size_t ic, std::size_t h, std::size_t w,
                 const std::vector<double>& wts, const std::vector<double>& bias,
                 std::size_t oc) {
    const std::size_t ph = h + 2, pw = w + 2;
    std::vector<double> padded(ic * ph * pw, 0.0);
    for (std::size_t c = 0; c < ic; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          padded[c * ph * pw + (y + 1) * pw + (x + 1)] = in[c * h * w + y * w + x];
    std::vector<double> out(oc * h * w, 0.0);
    for (std::size_t o = 0; o < oc; ++o)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double acc = bias[o];
          for (std::size_t c = 0; c < ic; ++c)
            for (std::size_t ky = 0; ky < 3; ++ky)
              for (std::size_t kx = 0; kx < 3; ++kx)
                acc += wts[(o * ic + c) * 9 + ky * 3 + kx] *
                       padded[c * ph * pw + (y + ky) * pw + (x + kx)];
          out[o * h * w + y * w + x] = acc;
        }
    return out;
  };
  auto pool = [](const std::vector<double>& in, std::size_t ch, std::size_t h, std::size_t w) {
    std::vector<double> out(ch * (h / 2) * (w / 2));
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t y = 0; y < h / 2; ++y)
        for (std::size_t x = 0; x < w / 2; ++x) {
          double best = 0.0;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const double v = std::max(0.0, in[c * h * w + (2 * y + dy) * w + (2 * x + dx)]);
              best = std::max(best, v);
            }
          out[c * (h / 2) * (w / 2) + y * (w / 2) + x] = best;
        }
    return out;
  };

  std::vector<double> x(image.begin(), image.end());
  x = conv(x, cfg.in_channels, cfg.height, cfg.width, m.conv1_w, m.conv1_b, cfg.c1);
  x = pool(x, cfg.c1, cfg.height, cfg.width);
  x = conv(x, cfg.c1, cfg.height / 2, cfg.width / 2, m.conv2_w, m.conv2_b, cfg.c2);
  x = pool(x, cfg.c2, cfg.height / 2, cfg.width / 2);
  x = conv(x, cfg.c2, cfg.height / 4, cfg.width / 4, m.conv3_w, m.conv3_b, cfg.c3);
  const std::size_t area = (cfg.height / 4) * (cfg.width / 4);
  std::vector<double> feat(cfg.c3, 0.0);
  for (std::size_t c = 0; c < cfg.c3; ++c) {
    for (std::size_t i = 0; i < area; ++i) feat[c] += std::max(0.0, x[c * area + i]);
    feat[c] /= static_cast<double>(area);
  }
  std::vector<double> out(cfg.head_out);
  for (std::size_t o = 0; o < cfg.head_out; ++o) {
    out[o] = m.head_b[o];
    for (std::size_t c = 0; c < cfg.c3; ++c) out[o] += m.head_w[o * cfg.c3 + c] * feat[c];
  }
  return out;
}

}  // namespace

TEST_CASE("zero weights give the head bias") {
  Rng rng(1);
  Model m = init_model(tiny_config(), rng);
  for (auto* t : weight_tensors(m)) std::fill(t->begin(), t->end(), 0.0);
  for (std::size_t o = 0; o < m.head_b.size(); ++o) m.head_b[o] = 0.5 * double(o);
  auto out = critic_outputs(m, std::vector<float>(64, 0.3f));
  for (std::size_t o = 0; o < out.size(); ++o) CHECK(out[o] == doctest::Approx(0.5 * double(o)));
}

TEST_CASE("identical images give identical output rows") {
  Rng rng(2);
  Model m = init_model(tiny_config(), rng);
  auto img = random_image(64, rng);
  auto cache = forward(m, {img, img});
  for (std::size_t o = 0; o < m.cfg.head_out; ++o)
    CHECK(cache.outputs[o] == cache.outputs[m.cfg.head_out + o]);
}

TEST_CASE("forward matches an independent re-implementation") {
  Rng rng(0);
  Model m = init_model(tiny_config(), rng);
  auto img = random_image(64, rng);
  auto ours = critic_outputs(m, img);
  auto golden = naive_forward(m, img);
  for (std::size_t o = 0; o < ours.size(); ++o)
    CHECK(std::abs(ours[o] - golden[o]) <= 1e-6);

  ModelConfig big;
  Rng rng2(5);
  Model m2 = init_model(big, rng2);
  auto img2 = random_image(32 * 32, rng2);
  auto ours2 = critic_outputs(m2, img2);
  auto golden2 = naive_forward(m2, img2);
  for (std::size_t o = 0; o < ours2.size(); ++o)
    CHECK(std::abs(ours2[o] - golden2[o]) <= 1e-6);
}

TEST_CASE("shape mismatch throws") {
  Rng rng(3);
  Model m = init_model(tiny_config(), rng);
  CHECK_THROWS(forward(m, {std::vector<float>(63, 0.0f)}));
}

TEST_CASE("zero output gradient gives zero weight gradients") {
  Rng rng(4);
  Model m = init_model(tiny_config(), rng);
  auto cache = forward(m, {random_image(64, rng)});
  auto g = backward(m, cache, std::vector<double>(m.cfg.head_out, 0.0));
  for (auto* t : weight_tensors(g))
    for (double x : *t) CHECK(x == 0.0);
}

TEST_CASE("gradient of output sum w.r.t. head bias equals batch size") {
  Rng rng(5);
  Model m = init_model(tiny_config(), rng);
  std::vector<std::vector<float>> batch;
  for (int k = 0; k < 3; ++k) batch.push_back(random_image(64, rng));
  auto cache = forward(m, batch);
  auto g = backward(m, cache, std::vector<double>(3 * m.cfg.head_out, 1.0));
  for (double x : g.head_b) CHECK(x == doctest::Approx(3.0));
}

TEST_CASE("stale cache is rejected") {
  Rng rng(6);
  Model m = init_model(tiny_config(), rng);
  auto cache = forward(m, {random_image(64, rng)});
  AdamState s = init_adam(m);
  Model g = zeros_like(m);
  adam_step(m, g, s);
  CHECK_THROWS(backward(m, cache, std::vector<double>(m.cfg.head_out, 1.0)));
}

TEST_CASE("finite differences agree on 200 random weights") {
  Rng rng(12);
  Model m = init_model(tiny_config(), rng);
  std::vector<std::vector<float>> batch;
  for (int k = 0; k < 2; ++k) batch.push_back(random_image(64, rng));

  // loss = fixed random projection of all outputs
  std::vector<double> proj(batch.size() * m.cfg.head_out);
  for (auto& p : proj) p = 2.0 * rng.uniform() - 1.0;
  auto loss_of = [&](const Model& model) {
    auto cache = forward(model, batch);
    double acc = 0.0;
    for (std::size_t i = 0; i < cache.outputs.size(); ++i) acc += proj[i] * cache.outputs[i];
    return acc;
  };

  auto cache = forward(m, batch);
  Model analytic = backward(m, cache, proj);
  auto grads = weight_tensors(analytic);
  auto weights = weight_tensors(m);

  const double h = 1e-3;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = rng.uniform_int(weights.size());
    if (weights[t]->empty()) continue;
    const std::size_t i = rng.uniform_int(weights[t]->size());
    const double saved = (*weights[t])[i];
    (*weights[t])[i] = saved + h;
    const double up = loss_of(m);
    (*weights[t])[i] = saved - h;
    const double down = loss_of(m);
    (*weights[t])[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double an = (*grads[t])[i];
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
    worst = std::max(worst, rel);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("adam zero gradient leaves weights, bumps step") {
  Rng rng(7);
  Model m = init_model(tiny_config(), rng);
  Model before = m;
  AdamState s = init_adam(m);
  adam_step(m, zeros_like(m), s);
  CHECK(s.step == 1);
  auto wa = weight_tensors(m);
  auto wb = weight_tensors(before);
  for (std::size_t t = 0; t < wa.size(); ++t) CHECK(*wa[t] == *wb[t]);
}

TEST_CASE("adam first step with unit gradients moves by lr") {
  Rng rng(8);
  Model m = init_model(tiny_config(), rng);
  Model before = m;
  Model g = zeros_like(m);
  for (auto* t : weight_tensors(g)) std::fill(t->begin(), t->end(), 1.0);
  AdamState s = init_adam(m);
  adam_step(m, g, s);
  auto wa = weight_tensors(m);
  auto wb = weight_tensors(before);
  for (std::size_t t = 0; t < wa.size(); ++t)
    for (std::size_t i = 0; i < wa[t]->size(); ++i)
      CHECK((*wb[t])[i] - (*wa[t])[i] == doctest::Approx(s.lr).epsilon(1e-6));
}

TEST_CASE("adam steps shrink a scalar quadratic loss") {
  // Toy problem: minimize w^2 using the head bias of a bias-only model.
  Rng rng(9);
  Model m = init_model(tiny_config(), rng);
  m.head_b[0] = 1.0;
  AdamState s = init_adam(m, 0.1);
  double prev = m.head_b[0] * m.head_b[0];
  for (int it = 0; it < 2; ++it) {
    Model g = zeros_like(m);
    g.head_b[0] = 2.0 * m.head_b[0];
    adam_step(m, g, s);
    const double loss = m.head_b[0] * m.head_b[0];
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("critic head is affine in the features") {
  Rng rng(10);
  ModelConfig cfg = tiny_config();
  Model m = init_model(cfg, rng);
  std::vector<double> f1(cfg.c3), f2(cfg.c3);
  for (auto& x : f1) x = rng.uniform();
  for (auto& x : f2) x = rng.uniform();
  auto head = [&](const std::vector<double>& f) {
    std::vector<double> out(cfg.head_out);
    for (std::size_t o = 0; o < cfg.head_out; ++o) {
      out[o] = m.head_b[o];
      for (std::size_t c = 0; c < cfg.c3; ++c) out[o] += m.head_w[o * cfg.c3 + c] * f[c];
    }
    return out;
  };
  const double alpha = 0.37;
  std::vector<double> mix(cfg.c3);
  for (std::size_t c = 0; c < cfg.c3; ++c) mix[c] = alpha * f1[c] + (1 - alpha) * f2[c];
  auto h1 = head(f1), h2 = head(f2), hm = head(mix);
  for (std::size_t o = 0; o < cfg.head_out; ++o)
    CHECK(hm[o] == doctest::Approx(alpha * h1[o] + (1 - alpha) * h2[o]).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip preserves weights, spec and seed") {
  Rng rng(11);
  Model m = init_model(tiny_config(), rng);
  Rng erng(12);
  Checkpoint ck;
  ck.model = m;
  ck.env = sample_environments(5, 3, 2, erng);
  ck.run_seed = 424242;
  const auto path = std::filesystem::temp_directory_path() / "codir_test_ck.cdmw";
  write_checkpoint(path, ck);
  Checkpoint back = read_checkpoint(path);
  CHECK(back.model.cfg == m.cfg);
  CHECK(back.env == ck.env);
  CHECK(back.run_seed == 424242);
  auto wa = weight_tensors(m);
  auto wb = weight_tensors(back.model);
  for (std::size_t t = 0; t < wa.size(); ++t)
    for (std::size_t i = 0; i < wa[t]->size(); ++i)
      CHECK((*wb[t])[i] == doctest::Approx((*wa[t])[i]).epsilon(1e-6));
  std::filesystem::remove(path);
}
