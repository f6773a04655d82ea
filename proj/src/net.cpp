#include "codir/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace codir {

namespace {

void validate_config(const ModelConfig& cfg) {
  if (cfg.height % 4 != 0 || cfg.width % 4 != 0)
    throw std::invalid_argument("ModelConfig: height and width must be divisible by 4");
  if (cfg.c1 == 0 || cfg.c2 == 0 || cfg.c3 == 0 || cfg.in_channels == 0)
    throw std::invalid_argument("ModelConfig: channel counts must be positive");
  if (cfg.head == HeadType::kCodir && cfg.head_out != cfg.n_classes * cfg.n_envs)
    throw std::invalid_argument("ModelConfig: codir head must emit n_classes*n_envs outputs");
  if (cfg.head_out == 0) throw std::invalid_argument("ModelConfig: head_out must be positive");
}

void kaiming_uniform(std::vector<double>& w, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& x : w) x = bound * (2.0 * rng.uniform() - 1.0);
}

// 3x3 same-padding convolution on one sample.
void conv3x3(const double* in, std::size_t in_ch, std::size_t h, std::size_t w,
             const double* weights, const double* bias, std::size_t out_ch, double* out) {
  for (std::size_t o = 0; o < out_ch; ++o) {
    double* plane = out + o * h * w;
    for (std::size_t i = 0; i < h * w; ++i) plane[i] = bias[o];
    for (std::size_t ic = 0; ic < in_ch; ++ic) {
      const double* src = in + ic * h * w;
      const double* k = weights + (o * in_ch + ic) * 9;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int dy = -1; dy <= 1; ++dy) {
            const long yy = static_cast<long>(y) + dy;
            if (yy < 0 || yy >= static_cast<long>(h)) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const long xx = static_cast<long>(x) + dx;
              if (xx < 0 || xx >= static_cast<long>(w)) continue;
              acc += k[(dy + 1) * 3 + (dx + 1)] * src[yy * w + xx];
            }
          }
          plane[y * w + x] += acc;
        }
      }
    }
  }
}

// Gradient of conv3x3 w.r.t. weights, bias and input.
void conv3x3_backward(const double* in, std::size_t in_ch, std::size_t h, std::size_t w,
                      const double* weights, std::size_t out_ch, const double* d_out,
                      double* d_weights, double* d_bias, double* d_in) {
  for (std::size_t o = 0; o < out_ch; ++o) {
    const double* dplane = d_out + o * h * w;
    for (std::size_t i = 0; i < h * w; ++i) d_bias[o] += dplane[i];
    for (std::size_t ic = 0; ic < in_ch; ++ic) {
      const double* src = in + ic * h * w;
      const double* k = weights + (o * in_ch + ic) * 9;
      double* dk = d_weights + (o * in_ch + ic) * 9;
      double* dsrc = d_in ? d_in + ic * h * w : nullptr;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double g = dplane[y * w + x];
          if (g == 0.0) continue;
          for (int dy = -1; dy <= 1; ++dy) {
            const long yy = static_cast<long>(y) + dy;
            if (yy < 0 || yy >= static_cast<long>(h)) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const long xx = static_cast<long>(x) + dx;
              if (xx < 0 || xx >= static_cast<long>(w)) continue;
              dk[(dy + 1) * 3 + (dx + 1)] += g * src[yy * w + xx];
              if (dsrc) dsrc[yy * w + xx] += g * k[(dy + 1) * 3 + (dx + 1)];
            }
          }
        }
      }
    }
  }
}

// ReLU + 2x2 max-pool; records the flat input index of each maximum.
void relu_maxpool(const double* z, std::size_t ch, std::size_t h, std::size_t w, double* out,
                  std::size_t* argmax) {
  const std::size_t oh = h / 2, ow = w / 2;
  for (std::size_t c = 0; c < ch; ++c) {
    const double* plane = z + c * h * w;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double best = -1.0;
        std::size_t arg = 0;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (2 * y + dy) * w + (2 * x + dx);
            const double v = plane[idx] > 0.0 ? plane[idx] : 0.0;
            if (v > best) {
              best = v;
              arg = idx;
            }
          }
        out[c * oh * ow + y * ow + x] = best;
        argmax[c * oh * ow + y * ow + x] = c * h * w + arg;
      }
  }
}

}  // namespace

Model init_model(const ModelConfig& cfg, Rng& rng) {
  validate_config(cfg);
  Model m;
  m.cfg = cfg;
  m.conv1_w.assign(cfg.c1 * cfg.in_channels * 9, 0.0);
  m.conv1_b.assign(cfg.c1, 0.0);
  m.conv2_w.assign(cfg.c2 * cfg.c1 * 9, 0.0);
  m.conv2_b.assign(cfg.c2, 0.0);
  m.conv3_w.assign(cfg.c3 * cfg.c2 * 9, 0.0);
  m.conv3_b.assign(cfg.c3, 0.0);
  m.head_w.assign(cfg.head_out * cfg.c3, 0.0);
  m.head_b.assign(cfg.head_out, 0.0);
  kaiming_uniform(m.conv1_w, cfg.in_channels * 9, rng);
  kaiming_uniform(m.conv2_w, cfg.c1 * 9, rng);
  kaiming_uniform(m.conv3_w, cfg.c2 * 9, rng);
  kaiming_uniform(m.head_w, cfg.c3, rng);
  return m;
}

Model zeros_like(const Model& m) {
  Model z = m;
  for (auto* t : weight_tensors(z)) std::fill(t->begin(), t->end(), 0.0);
  z.revision = 0;
  return z;
}

std::vector<std::vector<double>*> weight_tensors(Model& m) {
  return {&m.conv1_w, &m.conv1_b, &m.conv2_w, &m.conv2_b,
          &m.conv3_w, &m.conv3_b, &m.head_w,  &m.head_b};
}

std::vector<const std::vector<double>*> weight_tensors(const Model& m) {
  return {&m.conv1_w, &m.conv1_b, &m.conv2_w, &m.conv2_b,
          &m.conv3_w, &m.conv3_b, &m.head_w,  &m.head_b};
}

ForwardCache forward(const Model& m, const std::vector<std::vector<float>>& batch) {
  const auto& cfg = m.cfg;
  const std::size_t n_b = batch.size();
  const std::size_t h = cfg.height, w = cfg.width;
  const std::size_t h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;
  const std::size_t in_size = cfg.in_channels * h * w;

  ForwardCache c;
  c.n_batch = n_b;
  c.model_revision = m.revision;
  c.input.resize(n_b * in_size);
  c.z1.resize(n_b * cfg.c1 * h * w);
  c.p1.resize(n_b * cfg.c1 * h2 * w2);
  c.arg1.resize(c.p1.size());
  c.z2.resize(n_b * cfg.c2 * h2 * w2);
  c.p2.resize(n_b * cfg.c2 * h4 * w4);
  c.arg2.resize(c.p2.size());
  c.z3.resize(n_b * cfg.c3 * h4 * w4);
  c.features.resize(n_b * cfg.c3);
  c.outputs.resize(n_b * cfg.head_out);

  for (std::size_t k = 0; k < n_b; ++k) {
    if (batch[k].size() != in_size)
      throw std::invalid_argument("forward: image " + std::to_string(k) + " has " +
                                  std::to_string(batch[k].size()) + " values, model expects " +
                                  std::to_string(in_size));
    double* in = c.input.data() + k * in_size;
    for (std::size_t i = 0; i < in_size; ++i) in[i] = static_cast<double>(batch[k][i]);

    double* z1 = c.z1.data() + k * cfg.c1 * h * w;
    conv3x3(in, cfg.in_channels, h, w, m.conv1_w.data(), m.conv1_b.data(), cfg.c1, z1);
    double* p1 = c.p1.data() + k * cfg.c1 * h2 * w2;
    relu_maxpool(z1, cfg.c1, h, w, p1, c.arg1.data() + k * cfg.c1 * h2 * w2);

    double* z2 = c.z2.data() + k * cfg.c2 * h2 * w2;
    conv3x3(p1, cfg.c1, h2, w2, m.conv2_w.data(), m.conv2_b.data(), cfg.c2, z2);
    double* p2 = c.p2.data() + k * cfg.c2 * h4 * w4;
    relu_maxpool(z2, cfg.c2, h2, w2, p2, c.arg2.data() + k * cfg.c2 * h4 * w4);

    double* z3 = c.z3.data() + k * cfg.c3 * h4 * w4;
    conv3x3(p2, cfg.c2, h4, w4, m.conv3_w.data(), m.conv3_b.data(), cfg.c3, z3);

    double* feat = c.features.data() + k * cfg.c3;
    const double inv_area = 1.0 / static_cast<double>(h4 * w4);
    for (std::size_t ch = 0; ch < cfg.c3; ++ch) {
      double acc = 0.0;
      for (std::size_t i = 0; i < h4 * w4; ++i) {
        const double v = z3[ch * h4 * w4 + i];
        acc += v > 0.0 ? v : 0.0;
      }
      feat[ch] = acc * inv_area;
    }

    double* out = c.outputs.data() + k * cfg.head_out;
    for (std::size_t o = 0; o < cfg.head_out; ++o) {
      double acc = m.head_b[o];
      const double* row = m.head_w.data() + o * cfg.c3;
      for (std::size_t ch = 0; ch < cfg.c3; ++ch) acc += row[ch] * feat[ch];
      out[o] = acc;
      if (!std::isfinite(acc))
        throw std::runtime_error("forward: non-finite output at sample " + std::to_string(k));
    }
  }
  return c;
}

std::vector<double> critic_outputs(const Model& m, const std::vector<float>& image) {
  return forward(m, {image}).outputs;
}

Model backward(const Model& m, const ForwardCache& c, const std::vector<double>& d_outputs) {
  const auto& cfg = m.cfg;
  if (c.model_revision != m.revision)
    throw std::invalid_argument("backward: cache is stale (model was updated after forward)");
  if (d_outputs.size() != c.outputs.size())
    throw std::invalid_argument("backward: output gradient size mismatch");

  const std::size_t h = cfg.height, w = cfg.width;
  const std::size_t h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;
  Model g = zeros_like(m);

  std::vector<double> dfeat(cfg.c3);
  std::vector<double> dz3(cfg.c3 * h4 * w4);
  std::vector<double> dp2(cfg.c2 * h4 * w4);
  std::vector<double> dz2(cfg.c2 * h2 * w2);
  std::vector<double> dp1(cfg.c1 * h2 * w2);
  std::vector<double> dz1(cfg.c1 * h * w);

  for (std::size_t k = 0; k < c.n_batch; ++k) {
    const double* dout = d_outputs.data() + k * cfg.head_out;
    const double* feat = c.features.data() + k * cfg.c3;

    std::fill(dfeat.begin(), dfeat.end(), 0.0);
    for (std::size_t o = 0; o < cfg.head_out; ++o) {
      const double gout = dout[o];
      g.head_b[o] += gout;
      if (gout == 0.0) continue;
      double* wrow = g.head_w.data() + o * cfg.c3;
      const double* row = m.head_w.data() + o * cfg.c3;
      for (std::size_t ch = 0; ch < cfg.c3; ++ch) {
        wrow[ch] += gout * feat[ch];
        dfeat[ch] += gout * row[ch];
      }
    }

    const double* z3 = c.z3.data() + k * cfg.c3 * h4 * w4;
    const double inv_area = 1.0 / static_cast<double>(h4 * w4);
    for (std::size_t ch = 0; ch < cfg.c3; ++ch) {
      const double gch = dfeat[ch] * inv_area;
      for (std::size_t i = 0; i < h4 * w4; ++i)
        dz3[ch * h4 * w4 + i] = z3[ch * h4 * w4 + i] > 0.0 ? gch : 0.0;
    }

    std::fill(dp2.begin(), dp2.end(), 0.0);
    conv3x3_backward(c.p2.data() + k * cfg.c2 * h4 * w4, cfg.c2, h4, w4, m.conv3_w.data(),
                     cfg.c3, dz3.data(), g.conv3_w.data(), g.conv3_b.data(), dp2.data());

    std::fill(dz2.begin(), dz2.end(), 0.0);
    const std::size_t* arg2 = c.arg2.data() + k * cfg.c2 * h4 * w4;
    const double* z2 = c.z2.data() + k * cfg.c2 * h2 * w2;
    for (std::size_t i = 0; i < dp2.size(); ++i) {
      const std::size_t src = arg2[i];
      if (z2[src] > 0.0) dz2[src] += dp2[i];
    }

    std::fill(dp1.begin(), dp1.end(), 0.0);
    conv3x3_backward(c.p1.data() + k * cfg.c1 * h2 * w2, cfg.c1, h2, w2, m.conv2_w.data(),
                     cfg.c2, dz2.data(), g.conv2_w.data(), g.conv2_b.data(), dp1.data());

    std::fill(dz1.begin(), dz1.end(), 0.0);
    const std::size_t* arg1 = c.arg1.data() + k * cfg.c1 * h2 * w2;
    const double* z1 = c.z1.data() + k * cfg.c1 * h * w;
    for (std::size_t i = 0; i < dp1.size(); ++i) {
      const std::size_t src = arg1[i];
      if (z1[src] > 0.0) dz1[src] += dp1[i];
    }

    conv3x3_backward(c.input.data() + k * cfg.in_channels * h * w, cfg.in_channels, h, w,
                     m.conv1_w.data(), cfg.c1, dz1.data(), g.conv1_w.data(), g.conv1_b.data(),
                     nullptr);
  }
  return g;
}

AdamState init_adam(const Model& m, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto* t : weight_tensors(m)) {
    s.m1.emplace_back(t->size(), 0.0);
    s.m2.emplace_back(t->size(), 0.0);
  }
  return s;
}

void adam_step(Model& m, const Model& grads, AdamState& s) {
  auto weights = weight_tensors(m);
  auto gs = weight_tensors(grads);
  if (s.m1.size() != weights.size())
    throw std::invalid_argument("adam_step: state does not match model");
  ++s.step;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t t = 0; t < weights.size(); ++t) {
    auto& w = *weights[t];
    const auto& g = *gs[t];
    if (g.size() != w.size()) throw std::invalid_argument("adam_step: gradient shape mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) {
      s.m1[t][i] = s.beta1 * s.m1[t][i] + (1.0 - s.beta1) * g[i];
      s.m2[t][i] = s.beta2 * s.m2[t][i] + (1.0 - s.beta2) * g[i] * g[i];
      const double mhat = s.m1[t][i] / bc1;
      const double vhat = s.m2[t][i] / bc2;
      w[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
  ++m.revision;
}

namespace {

constexpr char kCkMagic[4] = {'C', 'D', 'M', 'W'};
constexpr std::uint32_t kCkVersion = 1;

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
  return value;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kCkMagic, 4);
  put<std::uint32_t>(os, kCkVersion);
  const auto& cfg = ck.model.cfg;
  put<std::uint8_t>(os, static_cast<std::uint8_t>(cfg.head));
  for (std::size_t v : {cfg.height, cfg.width, cfg.in_channels, cfg.c1, cfg.c2, cfg.c3,
                        cfg.n_classes, cfg.n_envs, cfg.head_out})
    put<std::uint32_t>(os, static_cast<std::uint32_t>(v));
  auto tensors = weight_tensors(ck.model);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto* t : tensors) put<std::uint32_t>(os, static_cast<std::uint32_t>(t->size()));
  for (const auto* t : tensors)
    for (double x : *t) put<float>(os, static_cast<float>(x));
  write_environment_spec(os, ck.env);
  put<std::uint64_t>(os, ck.run_seed);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCkMagic, 4) != 0)
    throw std::runtime_error("bad magic in checkpoint: " + path.string());
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kCkVersion)
    throw std::runtime_error("checkpoint version mismatch: " + std::to_string(version));

  Checkpoint ck;
  ModelConfig cfg;
  cfg.head = static_cast<HeadType>(get<std::uint8_t>(is, "head type"));
  cfg.height = get<std::uint32_t>(is, "height");
  cfg.width = get<std::uint32_t>(is, "width");
  cfg.in_channels = get<std::uint32_t>(is, "in_channels");
  cfg.c1 = get<std::uint32_t>(is, "c1");
  cfg.c2 = get<std::uint32_t>(is, "c2");
  cfg.c3 = get<std::uint32_t>(is, "c3");
  cfg.n_classes = get<std::uint32_t>(is, "n_classes");
  cfg.n_envs = get<std::uint32_t>(is, "n_envs");
  cfg.head_out = get<std::uint32_t>(is, "head_out");
  Rng dummy(0);
  ck.model = init_model(cfg, dummy);

  const auto n_tensors = get<std::uint32_t>(is, "tensor count");
  auto tensors = weight_tensors(ck.model);
  if (n_tensors != tensors.size())
    throw std::runtime_error("checkpoint tensor table does not match model layout");
  for (auto* t : tensors) {
    const auto len = get<std::uint32_t>(is, "tensor length");
    if (len != t->size()) throw std::runtime_error("checkpoint tensor shape mismatch");
  }
  for (auto* t : tensors)
    for (auto& x : *t) x = static_cast<double>(get<float>(is, "weight"));
  ck.env = read_environment_spec(is);
  ck.run_seed = get<std::uint64_t>(is, "run seed");
  return ck;
}

}  // namespace codir
