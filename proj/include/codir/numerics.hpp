#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace codir {

// Dense row-major matrix. All heavy linear algebra in this project runs in
// double precision; callers that persist f32 convert at the file boundary.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> d);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data.data() + r * cols, cols);
  }

  bool all_finite() const;
  double frobenius_norm() const;
  Matrix transposed() const;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix identity(std::size_t n);

struct SvdResult {
  Matrix u;              // m x r, orthonormal columns
  std::vector<double> s; // length r, descending, nonnegative
  Matrix v;              // r x n, orthonormal rows
};

// One-sided Jacobi SVD with cyclic sweeps. Deterministic; the largest-magnitude
// entry of each U column is forced nonnegative (V adjusted to match).
SvdResult svd(const Matrix& m);

// Reassemble U * diag(S) * V.
Matrix svd_reconstruct(const SvdResult& r);

// Number of singular values above 0.5*sqrt(rows+cols+1)*S[0]*eps.
std::size_t effective_rank(const Matrix& m);

// Cosine similarity; returns 0 if either vector has norm below 1e-12.
double cosine(std::span<const double> u, std::span<const double> v);

// Solve A x = b for symmetric positive definite A (Cholesky).
std::vector<double> solve_spd(const Matrix& a, std::span<const double> b);

// xoshiro256++ seeded through SplitMix64. Child streams are derived from the
// construction seed only, so they do not depend on draw order elsewhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  Rng child(std::uint64_t label) const;

  std::uint64_t next_u64();
  double uniform();                       // [0, 1)
  std::uint64_t uniform_int(std::uint64_t n); // [0, n), unbiased
  double normal(double mean = 0.0, double stddev = 1.0);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

// k distinct indices in [0, n), uniform over k-subsets, returned sorted.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

}  // namespace codir
