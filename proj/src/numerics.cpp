#include "codir/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace codir {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> d)
    : rows(r), cols(c), data(std::move(d)) {
  if (data.size() != rows * cols)
    throw std::invalid_argument("Matrix: data length " + std::to_string(data.size()) +
                                " != " + std::to_string(rows) + "x" + std::to_string(cols));
}

bool Matrix::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

double Matrix::frobenius_norm() const {
  double acc = 0.0;
  for (double x : data) acc += x * x;
  return std::sqrt(acc);
}

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

Matrix identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

namespace {

constexpr int kMaxSweeps = 60;
constexpr double kRotationTol = 1e-12;

// One-sided Jacobi on a tall (m >= n) matrix: orthogonalizes columns of w,
// accumulating the applied rotations in g (n x n), so that input = w * g^T.
void jacobi_orthogonalize(Matrix& w, Matrix& g) {
  const std::size_t m = w.rows, n = w.cols;
  // Columns whose norm fell to rounding noise stay parallel under further
  // rotations, so the relative criterion alone would never settle on
  // rank-deficient input. Anything below eps * ||A||_F is numerically zero.
  const double noise = std::numeric_limits<double>::epsilon() * w.frobenius_norm();
  const double negligible = noise * noise;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          alpha += wp * wp;
          beta += wq * wq;
          gamma += wp * wq;
        }
        if (alpha <= negligible || beta <= negligible) continue;
        if (std::abs(gamma) <= kRotationTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double gp = g(i, p), gq = g(i, q);
          g(i, p) = c * gp - s * gq;
          g(i, q) = s * gp + c * gq;
        }
      }
    }
    if (!rotated) return;
  }
  throw std::runtime_error("svd: no convergence after " + std::to_string(kMaxSweeps) +
                           " sweeps on a " + std::to_string(w.rows) + "x" +
                           std::to_string(w.cols) + " matrix");
}

// SVD of a tall matrix (rows >= cols); r = cols.
SvdResult svd_tall(const Matrix& a) {
  const std::size_t m = a.rows, n = a.cols;
  Matrix w = a;
  Matrix g = identity(n);
  jacobi_orthogonalize(w, g);

  std::vector<double> s(n);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += w(i, j) * w(i, j);
    s[j] = std::sqrt(acc);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return s[x] > s[y]; });

  SvdResult out;
  out.u = Matrix(m, n);
  out.s.resize(n);
  out.v = Matrix(n, n);
  const double tiny = std::numeric_limits<double>::min();
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.s[j] = s[src];
    if (s[src] > tiny) {
      for (std::size_t i = 0; i < m; ++i) out.u(i, j) = w(i, src) / s[src];
    }
    // input = w * g^T, so V rows are columns of g.
    for (std::size_t k = 0; k < n; ++k) out.v(j, k) = g(k, src);
  }

  // Complete zero-norm U columns to keep U orthonormal.
  for (std::size_t j = 0; j < n; ++j) {
    if (out.s[j] > tiny) continue;
    for (std::size_t cand = 0; cand < m; ++cand) {
      std::vector<double> col(m, 0.0);
      col[cand] = 1.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == j) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += out.u(i, k) * col[i];
        for (std::size_t i = 0; i < m; ++i) col[i] -= dot * out.u(i, k);
      }
      double norm = 0.0;
      for (double x : col) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 0.5) {
        for (std::size_t i = 0; i < m; ++i) out.u(i, j) = col[i] / norm;
        break;
      }
    }
  }
  return out;
}

void apply_sign_convention(SvdResult& r) {
  const std::size_t m = r.u.rows, n = r.v.cols, rank = r.s.size();
  for (std::size_t j = 0; j < rank; ++j) {
    std::size_t arg = 0;
    double best = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double a = std::abs(r.u(i, j));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (r.u(arg, j) < 0.0) {
      for (std::size_t i = 0; i < m; ++i) r.u(i, j) = -r.u(i, j);
      for (std::size_t k = 0; k < n; ++k) r.v(j, k) = -r.v(j, k);
    }
  }
}

}  // namespace

SvdResult svd(const Matrix& m) {
  if (m.rows == 0 || m.cols == 0) throw std::invalid_argument("svd: empty matrix");
  if (!m.all_finite()) throw std::invalid_argument("svd: non-finite input");

  SvdResult out;
  if (m.rows >= m.cols) {
    out = svd_tall(m);
  } else {
    // M^T = U1 S V1  =>  M = V1^T S U1^T.
    SvdResult t = svd_tall(m.transposed());
    out.s = std::move(t.s);
    out.u = t.v.transposed();
    out.v = t.u.transposed();
  }
  apply_sign_convention(out);
  return out;
}

Matrix svd_reconstruct(const SvdResult& r) {
  Matrix us = r.u;
  for (std::size_t i = 0; i < us.rows; ++i)
    for (std::size_t j = 0; j < us.cols; ++j) us(i, j) *= r.s[j];
  return matmul(us, r.v);
}

std::size_t effective_rank(const Matrix& m) {
  const SvdResult r = svd(m);
  const double tol = 0.5 * std::sqrt(static_cast<double>(m.rows + m.cols + 1)) * r.s[0] *
                     std::numeric_limits<double>::epsilon();
  std::size_t rank = 0;
  for (double x : r.s)
    if (x > tol) ++rank;
  return rank;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine: length mismatch");
  if (u.empty()) throw std::invalid_argument("cosine: empty vectors");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  nu = std::sqrt(nu);
  nv = std::sqrt(nv);
  if (nu < 1e-12 || nv < 1e-12) return 0.0;
  return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

std::vector<double> solve_spd(const Matrix& a, std::span<const double> b) {
  if (a.rows != a.cols || a.rows != b.size())
    throw std::invalid_argument("solve_spd: dimension mismatch");
  const std::size_t n = a.rows;
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = a(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      if (i == j) {
        if (acc <= 0.0) throw std::runtime_error("solve_spd: matrix not positive definite");
        l(i, i) = std::sqrt(acc);
      } else {
        l(i, j) = acc / l(j, j);
      }
    }
  }
  std::vector<double> y(n), x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = b[i];
    for (std::size_t k = 0; k < i; ++k) acc -= l(i, k) * y[k];
    y[i] = acc / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double acc = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) acc -= l(k, ii) * x[k];
    x[ii] = acc / l(ii, ii);
  }
  return x;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : state_) s = splitmix64(x);
}

Rng Rng::child(std::uint64_t label) const {
  std::uint64_t x = seed_ ^ (0xD1B54A32D192ED03ULL * (label + 1));
  return Rng(splitmix64(x));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  const std::uint64_t rem = std::numeric_limits<std::uint64_t>::max() % n;
  const std::uint64_t extra = (rem + 1 == n) ? 0 : rem + 1;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (extra != 0 && r > std::numeric_limits<std::uint64_t>::max() - extra);
  return r % n;
}

double Rng::normal(double mean, double stddev) {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return mean + stddev * cached_normal_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * 3.14159265358979323846 * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_normal_ = true;
  return mean + stddev * radius * std::cos(angle);
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  if (k == 0 || k > n)
    throw std::invalid_argument("sample_without_replacement: need 1 <= k <= n, got k=" +
                                std::to_string(k) + ", n=" + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace codir
