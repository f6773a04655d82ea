#include "codir/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace codir {

namespace {

constexpr std::size_t kGlyph = 8;
constexpr float kBackgroundBase = 0.1f;
constexpr float kBackgroundBoost = 0.2f;
constexpr float kGlyphIntensity = 0.8f;
constexpr float kGlyphDimmed = 0.55f;
constexpr float kFrameIntensity = 0.35f;
constexpr double kNoiseSigma = 0.05;
constexpr double kImplicationProb = 0.9;
constexpr double kSceneProb = 0.35;

bool glyph_pixel(std::size_t g, std::size_t r, std::size_t c) {
  const double dr = static_cast<double>(r) - 3.5;
  const double dc = static_cast<double>(c) - 3.5;
  const double rad2 = dr * dr + dc * dc;
  switch (g) {
    case 0: return r == 3 || r == 4 || c == 3 || c == 4;       // cross
    case 1: return r < 2 || r >= 6 || c < 2 || c >= 6;         // square outline
    case 2: return rad2 <= 3.5 * 3.5;                          // disk
    case 3: return r % 2 == 0;                                 // horizontal stripes
    case 4: return c % 2 == 0;                                 // vertical stripes
    case 5: return ((r / 2) + (c / 2)) % 2 == 0;               // checker
    case 6: return rad2 <= 3.5 * 3.5 && rad2 >= 2.0 * 2.0;     // ring
    case 7: return c <= r;                                     // triangle
    default: throw std::logic_error("glyph index out of range");
  }
}

void validate_spec(const DatasetSpec& spec) {
  if (spec.n_classes < 2 || spec.n_classes > 8)
    throw std::invalid_argument("DatasetSpec: n_classes must be in [2,8] (8 glyphs available)");
  if (spec.n_context != 2 * spec.n_classes + kSceneCount)
    throw std::invalid_argument("DatasetSpec: recipe requires n_context = 2*n_classes + 8, got " +
                                std::to_string(spec.n_context));
  if (spec.channels != 1) throw std::invalid_argument("DatasetSpec: recipe renders 1 channel");
  if (spec.height < kGlyph || spec.width < kGlyph)
    throw std::invalid_argument("DatasetSpec: image smaller than the 8x8 glyphs");
  if (spec.n_train == 0 || spec.n_val == 0 || spec.n_test == 0)
    throw std::invalid_argument("DatasetSpec: all split counts must be positive");
}

void render_sample(const DatasetSpec& spec, Rng rng, std::vector<float>& img,
                   std::vector<std::uint8_t>& cls, std::vector<std::uint8_t>& ctx) {
  const std::size_t h = spec.height, w = spec.width;
  img.assign(h * w, 0.0f);
  cls.assign(spec.n_classes, 0);
  ctx.assign(spec.n_context, 0);

  const std::size_t k_c = 1 + rng.uniform_int(std::min<std::uint64_t>(3, spec.n_classes));
  const auto classes = sample_without_replacement(spec.n_classes, k_c, rng);
  for (std::size_t c : classes) cls[c] = 1;

  for (std::size_t c : classes) {
    if (rng.uniform() < kImplicationProb) ctx[2 * c] = 1;
    if (rng.uniform() < kImplicationProb) ctx[2 * c + 1] = 1;
  }

  bool scene[kSceneCount];
  for (std::size_t t = 0; t < kSceneCount; ++t) {
    scene[t] = rng.uniform() < kSceneProb;
    if (scene[t]) ctx[2 * spec.n_classes + t] = 1;
  }

  const float bg = kBackgroundBase + (scene[kSceneBackground] ? kBackgroundBoost : 0.0f);
  std::fill(img.begin(), img.end(), bg);

  const float glyph_val = scene[kSceneDim] ? kGlyphDimmed : kGlyphIntensity;
  // Larger canvases get upscaled glyphs; placement retries keep the glyph
  // bounding boxes disjoint when the canvas allows it.
  const std::size_t g = std::min(h, w) >= 2 * kGlyph ? kGlyph + kGlyph / 2 : kGlyph;
  std::vector<std::pair<std::size_t, std::size_t>> placed;
  for (std::size_t c : classes) {
    std::size_t y0 = 0, x0 = 0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      y0 = rng.uniform_int(h - g + 1);
      x0 = rng.uniform_int(w - g + 1);
      bool clear = true;
      for (const auto& [py, px] : placed)
        if (y0 + g > py && py + g > y0 && x0 + g > px && px + g > x0) clear = false;
      if (clear) break;
    }
    placed.emplace_back(y0, x0);
    for (std::size_t r = 0; r < g; ++r)
      for (std::size_t col = 0; col < g; ++col)
        if (glyph_pixel(c, r * kGlyph / g, col * kGlyph / g))
          img[(y0 + r) * w + (x0 + col)] = glyph_val;
  }

  // Gradients are centered so they do not shift the image mean.
  if (scene[kSceneGradientH]) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        img[y * w + x] += 0.2f * (static_cast<float>(x) / static_cast<float>(w - 1) - 0.5f);
  }
  if (scene[kSceneGradientV]) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        img[y * w + x] += 0.2f * (static_cast<float>(y) / static_cast<float>(h - 1) - 0.5f);
  }
  if (scene[kSceneFrame]) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        if (y < 2 || y >= h - 2 || x < 2 || x >= w - 2) img[y * w + x] = kFrameIntensity;
  }
  if (scene[kSceneBlur]) {
    std::vector<float> blurred(h * w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        float acc = 0.0f;
        int count = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const long yy = static_cast<long>(y) + dy;
            const long xx = static_cast<long>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w))
              continue;
            acc += img[yy * w + xx];
            ++count;
          }
        blurred[y * w + x] = acc / static_cast<float>(count);
      }
    img.swap(blurred);
  }
  if (scene[kSceneNoise]) {
    for (auto& p : img) p += static_cast<float>(rng.normal(0.0, kNoiseSigma));
  }
  if (scene[kSceneInvert]) {
    // Inversion around the image mean keeps global brightness cues intact.
    double mean = 0.0;
    for (float p : img) mean += p;
    mean /= static_cast<double>(img.size());
    for (auto& p : img) p = static_cast<float>(2.0 * mean) - p;
  }
  for (auto& p : img) p = std::clamp(p, 0.0f, 1.0f);
}

}  // namespace

std::vector<std::size_t> Dataset::indices_of(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == s) out.push_back(i);
  return out;
}

Dataset generate(const DatasetSpec& spec) {
  validate_spec(spec);
  Dataset ds;
  ds.n_classes = spec.n_classes;
  ds.n_context = spec.n_context;
  ds.height = spec.height;
  ds.width = spec.width;
  ds.channels = spec.channels;

  const Rng root(spec.seed);
  const std::size_t counts[3] = {spec.n_train, spec.n_val, spec.n_test};
  for (std::uint8_t tag = 0; tag < 3; ++tag) {
    const Rng split_stream = root.child(tag);
    for (std::size_t i = 0; i < counts[tag]; ++i) {
      std::vector<float> img;
      std::vector<std::uint8_t> cls, ctx;
      render_sample(spec, split_stream.child(i), img, cls, ctx);
      ds.images.push_back(std::move(img));
      ds.class_labels.push_back(std::move(cls));
      ds.context_labels.push_back(std::move(ctx));
      ds.splits.push_back(static_cast<Split>(tag));
    }
  }
  return ds;
}

namespace {

constexpr char kMagic[4] = {'C', 'D', 'I', 'R'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw std::runtime_error("dataset file truncated while reading " + what);
  return value;
}

std::vector<std::uint8_t> pack_bits(const std::vector<std::uint8_t>& bits) {
  std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return out;
}

std::vector<std::uint8_t> unpack_bits(const std::vector<std::uint8_t>& bytes, std::size_t n) {
  std::vector<std::uint8_t> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) out[i] = (bytes[i / 8] >> (i % 8)) & 1u;
  return out;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.size()));
  put<std::uint16_t>(os, static_cast<std::uint16_t>(ds.height));
  put<std::uint16_t>(os, static_cast<std::uint16_t>(ds.width));
  put<std::uint16_t>(os, static_cast<std::uint16_t>(ds.channels));
  put<std::uint16_t>(os, static_cast<std::uint16_t>(ds.n_classes));
  put<std::uint16_t>(os, static_cast<std::uint16_t>(ds.n_context));
  put<std::uint8_t>(os, 3);  // split tags in use: train/val/test
  for (std::size_t k = 0; k < ds.size(); ++k) {
    os.write(reinterpret_cast<const char*>(ds.images[k].data()),
             static_cast<std::streamsize>(ds.images[k].size() * sizeof(float)));
    const auto cbytes = pack_bits(ds.class_labels[k]);
    const auto lbytes = pack_bits(ds.context_labels[k]);
    os.write(reinterpret_cast<const char*>(cbytes.data()),
             static_cast<std::streamsize>(cbytes.size()));
    os.write(reinterpret_cast<const char*>(lbytes.data()),
             static_cast<std::streamsize>(lbytes.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(ds.splits[k]));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset file: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad magic in dataset file: " + path.string());
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion)
    throw std::runtime_error("dataset version mismatch: have " + std::to_string(version) +
                             ", expected " + std::to_string(kVersion));
  const auto count = get<std::uint32_t>(is, "sample count");
  Dataset ds;
  ds.height = get<std::uint16_t>(is, "height");
  ds.width = get<std::uint16_t>(is, "width");
  ds.channels = get<std::uint16_t>(is, "channels");
  ds.n_classes = get<std::uint16_t>(is, "n_classes");
  ds.n_context = get<std::uint16_t>(is, "n_context");
  (void)get<std::uint8_t>(is, "split tag table");

  const std::size_t pixels = ds.height * ds.width * ds.channels;
  const std::size_t cbytes = (ds.n_classes + 7) / 8;
  const std::size_t lbytes = (ds.n_context + 7) / 8;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::vector<float> img(pixels);
    is.read(reinterpret_cast<char*>(img.data()),
            static_cast<std::streamsize>(pixels * sizeof(float)));
    std::vector<std::uint8_t> cb(cbytes), lb(lbytes);
    is.read(reinterpret_cast<char*>(cb.data()), static_cast<std::streamsize>(cbytes));
    is.read(reinterpret_cast<char*>(lb.data()), static_cast<std::streamsize>(lbytes));
    std::uint8_t tag = 0;
    is.read(reinterpret_cast<char*>(&tag), 1);
    if (!is)
      throw std::runtime_error("dataset file truncated at sample " + std::to_string(k) + " of " +
                               std::to_string(count));
    if (tag > 2)
      throw std::runtime_error("invalid split tag at sample " + std::to_string(k));
    for (float p : img)
      if (!std::isfinite(p))
        throw std::runtime_error("non-finite pixel at sample " + std::to_string(k));
    ds.images.push_back(std::move(img));
    ds.class_labels.push_back(unpack_bits(cb, ds.n_classes));
    ds.context_labels.push_back(unpack_bits(lb, ds.n_context));
    ds.splits.push_back(static_cast<Split>(tag));
  }
  return ds;
}

std::pair<Dataset, std::vector<std::uint8_t>> holdout_context_label(const Dataset& ds,
                                                                    std::size_t k) {
  if (k >= ds.n_context)
    throw std::out_of_range("holdout_context_label: index " + std::to_string(k) +
                            " out of range for n_context=" + std::to_string(ds.n_context));
  Dataset out = ds;
  out.n_context = ds.n_context - 1;
  std::vector<std::uint8_t> targets;
  targets.reserve(ds.size());
  for (std::size_t s = 0; s < ds.size(); ++s) {
    targets.push_back(ds.context_labels[s][k]);
    out.context_labels[s].erase(out.context_labels[s].begin() + static_cast<std::ptrdiff_t>(k));
  }
  return {std::move(out), std::move(targets)};
}

}  // namespace codir
