#include "codir/compose.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>

namespace codir {

namespace {

constexpr char kMagic[4] = {'C', 'D', 'C', 'K'};
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

}  // namespace

SvdResult decompose(const Matrix& d) {
  if (d.rows > d.cols)
    throw std::invalid_argument("decompose: requires n_c <= n_e, got " +
                                std::to_string(d.rows) + " x " + std::to_string(d.cols));
  return svd(d);
}

Matrix recompose_with_rows(const SvdResult& svd_of_d, const std::vector<RowEdit>& edits) {
  Matrix u = svd_of_d.u;
  for (const auto& e : edits) {
    if (e.row >= u.rows || e.values.size() != u.cols)
      throw std::invalid_argument("recompose_with_rows: bad row edit");
    std::copy(e.values.begin(), e.values.end(), u.data.begin() + static_cast<std::ptrdiff_t>(e.row * u.cols));
  }
  const std::size_t r = svd_of_d.s.size();
  Matrix out(u.rows, svd_of_d.v.cols);
  for (std::size_t k = 0; k < r; ++k)
    for (std::size_t i = 0; i < out.rows; ++i) {
      const double us = u(i, k) * svd_of_d.s[k];
      for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += us * svd_of_d.v(k, j);
    }
  return out;
}

Matrix compose_swap(const Matrix& d, std::size_t c_plus, std::size_t c_minus,
                    const TemplateSet& templates, const LabelSet& predicted) {
  if (c_plus == c_minus) throw std::invalid_argument("compose_swap: c_plus == c_minus");
  const bool has_plus = std::find(predicted.begin(), predicted.end(), c_plus) != predicted.end();
  const bool has_minus = std::find(predicted.begin(), predicted.end(), c_minus) != predicted.end();
  if (!has_plus || has_minus)
    throw std::invalid_argument("compose_swap: need c_plus predicted and c_minus absent");
  if (predicted.size() >= d.rows)
    throw std::invalid_argument("compose_swap: no unpredicted classes to average");

  const SvdResult sd = decompose(d);
  const SvdResult st = decompose(templates.templates);

  // Mean of U rows over classes the representation is not a member of.
  std::vector<double> mean_row(sd.u.cols, 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < d.rows; ++i) {
    if (std::find(predicted.begin(), predicted.end(), i) != predicted.end()) continue;
    for (std::size_t k = 0; k < sd.u.cols; ++k) mean_row[k] += sd.u(i, k);
    ++count;
  }
  for (double& v : mean_row) v /= static_cast<double>(count);

  std::vector<double> template_row(st.u.row(c_minus).begin(), st.u.row(c_minus).end());
  if (template_row.size() != sd.u.cols)
    throw std::runtime_error("compose_swap: factor width mismatch between D and T");

  return recompose_with_rows(sd, {{c_plus, mean_row}, {c_minus, template_row}});
}

CompressedRep compress(const Matrix& d, std::size_t k) {
  const std::size_t kmax = std::min(d.rows, d.cols);
  if (k < 1 || k > kmax)
    throw std::invalid_argument("compress: k must be in [1, " + std::to_string(kmax) +
                                "], got " + std::to_string(k));
  const SvdResult r = svd(d);
  CompressedRep out;
  out.k = k;
  out.u_k = Matrix(d.rows, k);
  out.s_k.assign(r.s.begin(), r.s.begin() + static_cast<std::ptrdiff_t>(k));
  out.v_k = Matrix(k, d.cols);
  for (std::size_t i = 0; i < d.rows; ++i)
    for (std::size_t c = 0; c < k; ++c) out.u_k(i, c) = r.u(i, c);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d.cols; ++j) out.v_k(c, j) = r.v(c, j);
  return out;
}

Matrix decompress(const CompressedRep& rep) {
  Matrix out(rep.u_k.rows, rep.v_k.cols);
  for (std::size_t c = 0; c < rep.k; ++c)
    for (std::size_t i = 0; i < out.rows; ++i) {
      const double us = rep.u_k(i, c) * rep.s_k[c];
      for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += us * rep.v_k(c, j);
    }
  return out;
}

double compression_ratio(std::size_t n_c, std::size_t n_e, std::size_t k) {
  return static_cast<double>(k) * static_cast<double>(n_c + n_e) /
         static_cast<double>(n_c * n_e);
}

std::size_t representation_rank(const std::vector<Matrix>& reps, std::size_t rows,
                                std::size_t cols) {
  if (reps.empty()) throw std::invalid_argument("representation_rank: empty list");
  if (rows > reps.front().rows || cols > reps.front().cols)
    throw std::invalid_argument("representation_rank: block exceeds representation shape");
  Matrix stacked(reps.size(), rows * cols);
  for (std::size_t n = 0; n < reps.size(); ++n)
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        stacked(n, i * cols + j) = reps[n](i, j);
  return effective_rank(stacked);
}

void write_compressed(const std::filesystem::path& path,
                      const std::vector<CompressedRep>& reps) {
  if (reps.empty()) throw std::invalid_argument("write_compressed: nothing to write");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(reps.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(reps.front().u_k.rows));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(reps.front().v_k.cols));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(reps.front().k));
  for (const auto& r : reps) {
    for (double v : r.u_k.data) put<float>(os, static_cast<float>(v));
    for (double v : r.s_k) put<float>(os, static_cast<float>(v));
    for (double v : r.v_k.data) put<float>(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::vector<CompressedRep> read_compressed(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || !std::equal(magic, magic + 4, kMagic))
    throw std::runtime_error("bad magic in " + path.string());
  if (get<std::uint32_t>(is, "version") != kVersion)
    throw std::runtime_error("version mismatch in " + path.string());
  const auto count = get<std::uint32_t>(is, "count");
  const auto n_c = get<std::uint32_t>(is, "rows");
  const auto n_e = get<std::uint32_t>(is, "cols");
  const auto k = get<std::uint32_t>(is, "k");
  std::vector<CompressedRep> reps(count);
  for (auto& r : reps) {
    r.k = k;
    r.u_k = Matrix(n_c, k);
    r.s_k.resize(k);
    r.v_k = Matrix(k, n_e);
    for (double& v : r.u_k.data) v = get<float>(is, "U");
    for (double& v : r.s_k) v = get<float>(is, "S");
    for (double& v : r.v_k.data) v = get<float>(is, "V");
  }
  return reps;
}

}  // namespace codir
