#include "codir/repr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

namespace codir {

namespace {

constexpr char kTemplatesMagic[4] = {'C', 'D', 'T', 'S'};
constexpr char kRepsMagic[4] = {'C', 'D', 'R', 'P'};
constexpr char kRepRecordTag[8] = {'C', 'D', 'I', 'R', '-', 'R', 'E', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw std::runtime_error("file truncated while reading " + what);
  return value;
}

void put_ids(std::ostream& os, const std::vector<std::size_t>& ids) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ids.size()));
  for (std::size_t id : ids) put<std::uint32_t>(os, static_cast<std::uint32_t>(id));
}

std::vector<std::size_t> get_ids(std::istream& is, const std::string& what) {
  const auto n = get<std::uint32_t>(is, what);
  std::vector<std::size_t> ids(n);
  for (auto& id : ids) id = get<std::uint32_t>(is, what);
  return ids;
}

std::vector<std::uint8_t> pack_bits(const std::vector<std::uint8_t>& bits) {
  std::vector<std::uint8_t> bytes((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return bytes;
}

std::vector<std::uint8_t> unpack_bits(const std::vector<std::uint8_t>& bytes, std::size_t n) {
  std::vector<std::uint8_t> bits(n);
  for (std::size_t i = 0; i < n; ++i) bits[i] = (bytes[i / 8] >> (i % 8)) & 1u;
  return bits;
}

// Binary F1 of the rule score > t; positives are label==1.
double f1_at(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
             double t) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const bool pred = scores[k] > t;
    if (pred && labels[k]) ++tp;
    else if (pred) ++fp;
    else if (labels[k]) ++fn;
  }
  if (tp == 0 && fp == 0 && fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_template_threshold(
    const std::vector<std::size_t>& train_ids, std::uint64_t seed) {
  if (train_ids.empty()) throw std::invalid_argument("split_template_threshold: no training ids");
  std::vector<std::size_t> order = train_ids;
  Rng rng = Rng(seed).child(0x54504c54);  // template/threshold split stream
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(i)]);
  const std::size_t n_templ = (2 * order.size() + 2) / 3;  // ceil(2n/3)
  std::vector<std::size_t> templ(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_templ));
  std::vector<std::size_t> thresh(order.begin() + static_cast<std::ptrdiff_t>(n_templ), order.end());
  std::sort(templ.begin(), templ.end());
  std::sort(thresh.begin(), thresh.end());
  return {std::move(templ), std::move(thresh)};
}

TemplateSet fit_templates(const Model& model, const Dataset& ds,
                          const std::vector<std::vector<std::uint8_t>>& env_labels,
                          const EnvironmentSpec& spec,
                          const std::vector<std::size_t>& template_ids) {
  if (template_ids.empty()) throw std::invalid_argument("fit_templates: empty template split");
  if (env_labels.size() != ds.size())
    throw std::invalid_argument("fit_templates: env_labels not aligned with dataset");
  const std::size_t n_c = model.cfg.n_classes, n_e = model.cfg.n_envs;

  TemplateSet ts;
  ts.ebar = Matrix(n_c, n_e);
  ts.templates = Matrix(n_c, n_e);
  ts.template_ids = template_ids;

  Matrix env_num(n_c, n_e), cls_num(n_c, n_e);
  std::vector<double> env_den(n_e, 0.0);
  std::vector<double> cls_den(n_c, 0.0);

  // Proper weighted conditional means: divide by total mask weight, not the
  // batch size (the training loss keeps its prevalence weighting separately).
  for (std::size_t id : template_ids) {
    const auto f = critic_outputs(model, ds.images[id]);
    std::vector<double> w(n_e, 0.0);
    for (std::size_t l = 0; l < spec.n_labels; ++l)
      if (env_labels[id][l])
        for (std::size_t j = 0; j < n_e; ++j) w[j] += spec.v(l, j);
    for (std::size_t j = 0; j < n_e; ++j) env_den[j] += w[j];
    for (std::size_t i = 0; i < n_c; ++i) {
      const bool member = ds.class_labels[id][i] != 0;
      if (member) cls_den[i] += 1.0;
      for (std::size_t j = 0; j < n_e; ++j) {
        const double o = f[i * n_e + j];
        env_num(i, j) += w[j] * o;
        if (member) cls_num(i, j) += o;
      }
    }
  }

  for (std::size_t j = 0; j < n_e; ++j)
    if (env_den[j] == 0.0)
      throw std::runtime_error("fit_templates: environment " + std::to_string(j) +
                               " has no weighted member in the template split");
  for (std::size_t i = 0; i < n_c; ++i)
    if (cls_den[i] == 0.0)
      throw std::runtime_error("fit_templates: class " + std::to_string(i) +
                               " has no member in the template split");

  for (std::size_t i = 0; i < n_c; ++i)
    for (std::size_t j = 0; j < n_e; ++j) {
      ts.ebar(i, j) = env_num(i, j) / env_den[j];
      ts.templates(i, j) = ts.ebar(i, j) - cls_num(i, j) / cls_den[i];
    }
  if (!ts.ebar.all_finite() || !ts.templates.all_finite())
    throw std::runtime_error("fit_templates: non-finite template entries");
  ts.thresholds.assign(n_c, std::numeric_limits<double>::infinity());
  return ts;
}

Matrix instance_rep(const Model& model, const std::vector<float>& image, const Matrix& ebar) {
  if (ebar.rows != model.cfg.n_classes || ebar.cols != model.cfg.n_envs)
    throw std::invalid_argument("instance_rep: Ebar dims do not match model");
  const auto f = critic_outputs(model, image);
  Matrix d(ebar.rows, ebar.cols);
  for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] = ebar.data[i] - f[i];
  return d;
}

std::vector<Matrix> instance_reps(const Model& model, const Dataset& ds,
                                  const std::vector<std::size_t>& ids, const Matrix& ebar) {
  std::vector<Matrix> out;
  out.reserve(ids.size());
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < ids.size(); start += chunk) {
    const std::size_t stop = std::min(start + chunk, ids.size());
    std::vector<std::vector<float>> batch;
    batch.reserve(stop - start);
    for (std::size_t k = start; k < stop; ++k) batch.push_back(ds.images[ids[k]]);
    const auto cache = forward(model, batch);
    for (std::size_t k = 0; k < batch.size(); ++k) {
      Matrix d(ebar.rows, ebar.cols);
      for (std::size_t i = 0; i < d.data.size(); ++i)
        d.data[i] = ebar.data[i] - cache.outputs[k * d.data.size() + i];
      out.push_back(std::move(d));
    }
  }
  return out;
}

ThresholdFit best_f1_threshold(const std::vector<double>& scores,
                               const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("best_f1_threshold: bad inputs");
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> candidates;
  candidates.push_back(-std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k + 1 < sorted.size(); ++k)
    if (sorted[k] < sorted[k + 1]) candidates.push_back(0.5 * (sorted[k] + sorted[k + 1]));
  candidates.push_back(std::numeric_limits<double>::infinity());

  ThresholdFit best{candidates.front(), -1.0};
  for (double t : candidates) {
    const double f1 = f1_at(scores, labels, t);
    if (f1 > best.f1) best = {t, f1};  // candidates ascend, so ties keep the smallest t
  }
  return best;
}

void fit_thresholds(const Model& model, const Dataset& ds,
                    const std::vector<std::size_t>& threshold_ids, TemplateSet& templates) {
  if (threshold_ids.empty()) throw std::invalid_argument("fit_thresholds: empty threshold split");
  const std::size_t n_c = templates.templates.rows;
  const auto reps = instance_reps(model, ds, threshold_ids, templates.ebar);

  templates.threshold_ids = threshold_ids;
  templates.thresholds.assign(n_c, 0.0);
  templates.warned_classes.clear();
  for (std::size_t i = 0; i < n_c; ++i) {
    std::vector<double> scores(reps.size());
    std::vector<std::uint8_t> labels(reps.size());
    bool any_member = false;
    for (std::size_t k = 0; k < reps.size(); ++k) {
      scores[k] = cosine(reps[k].row(i), templates.templates.row(i));
      labels[k] = ds.class_labels[threshold_ids[k]][i];
      any_member |= labels[k] != 0;
    }
    if (!any_member) {
      templates.thresholds[i] = std::numeric_limits<double>::infinity();
      templates.warned_classes.push_back(i);
      continue;
    }
    templates.thresholds[i] = best_f1_threshold(scores, labels).threshold;
  }
}

LabelSet classify(const Matrix& d, const TemplateSet& templates) {
  if (d.rows != templates.templates.rows || d.cols != templates.templates.cols)
    throw std::invalid_argument("classify: shape mismatch");
  LabelSet predicted;
  for (std::size_t i = 0; i < d.rows; ++i)
    if (cosine(d.row(i), templates.templates.row(i)) > templates.thresholds[i])
      predicted.push_back(i);
  return predicted;
}

void write_templates(const std::filesystem::path& path, const TemplateSet& ts) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kTemplatesMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ts.templates.rows));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ts.templates.cols));
  for (double v : ts.ebar.data) put(os, v);
  for (double v : ts.templates.data) put(os, v);
  for (double v : ts.thresholds) put(os, v);
  put_ids(os, ts.template_ids);
  put_ids(os, ts.threshold_ids);
  put_ids(os, ts.warned_classes);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

TemplateSet read_templates(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || !std::equal(magic, magic + 4, kTemplatesMagic))
    throw std::runtime_error("bad magic in " + path.string());
  if (get<std::uint32_t>(is, "version") != kVersion)
    throw std::runtime_error("version mismatch in " + path.string());
  const auto rows = get<std::uint32_t>(is, "rows");
  const auto cols = get<std::uint32_t>(is, "cols");
  TemplateSet ts;
  ts.ebar = Matrix(rows, cols);
  ts.templates = Matrix(rows, cols);
  ts.thresholds.resize(rows);
  for (double& v : ts.ebar.data) v = get<double>(is, "Ebar");
  for (double& v : ts.templates.data) v = get<double>(is, "T");
  for (double& v : ts.thresholds) v = get<double>(is, "thresholds");
  ts.template_ids = get_ids(is, "template ids");
  ts.threshold_ids = get_ids(is, "threshold ids");
  ts.warned_classes = get_ids(is, "warned classes");
  return ts;
}

void write_reps(const std::filesystem::path& path, const std::vector<RepRecord>& reps) {
  if (reps.empty()) throw std::invalid_argument("write_reps: nothing to write");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kRepsMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(reps.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(reps.front().d.rows));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(reps.front().d.cols));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(reps.front().class_labels.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(reps.front().context_labels.size()));
  for (const auto& r : reps) {
    os.write(kRepRecordTag, 8);
    put<std::uint32_t>(os, r.sample_id);
    for (double v : r.d.data) put<float>(os, static_cast<float>(v));
    const auto cb = pack_bits(r.class_labels);
    const auto lb = pack_bits(r.context_labels);
    os.write(reinterpret_cast<const char*>(cb.data()), static_cast<std::streamsize>(cb.size()));
    os.write(reinterpret_cast<const char*>(lb.data()), static_cast<std::streamsize>(lb.size()));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::vector<RepRecord> read_reps(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || !std::equal(magic, magic + 4, kRepsMagic))
    throw std::runtime_error("bad magic in " + path.string());
  if (get<std::uint32_t>(is, "version") != kVersion)
    throw std::runtime_error("version mismatch in " + path.string());
  const auto count = get<std::uint32_t>(is, "count");
  const auto rows = get<std::uint32_t>(is, "rows");
  const auto cols = get<std::uint32_t>(is, "cols");
  const auto n_cls = get<std::uint32_t>(is, "class width");
  const auto n_ctx = get<std::uint32_t>(is, "context width");
  std::vector<RepRecord> reps(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    char tag[8];
    is.read(tag, 8);
    if (!is || !std::equal(tag, tag + 8, kRepRecordTag))
      throw std::runtime_error("bad record tag at sample " + std::to_string(k));
    auto& r = reps[k];
    r.sample_id = get<std::uint32_t>(is, "sample id");
    r.d = Matrix(rows, cols);
    for (double& v : r.d.data) v = get<float>(is, "representation");
    std::vector<std::uint8_t> cb((n_cls + 7) / 8), lb((n_ctx + 7) / 8);
    is.read(reinterpret_cast<char*>(cb.data()), static_cast<std::streamsize>(cb.size()));
    is.read(reinterpret_cast<char*>(lb.data()), static_cast<std::streamsize>(lb.size()));
    if (!is) throw std::runtime_error("file truncated at sample " + std::to_string(k));
    r.class_labels = unpack_bits(cb, n_cls);
    r.context_labels = unpack_bits(lb, n_ctx);
  }
  return reps;
}

}  // namespace codir
