#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "codir/numerics.hpp"

using namespace codir;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& x : m.data) x = 2.0 * rng.uniform() - 1.0;
  return m;
}

double max_abs_offdiag_from_identity(const Matrix& m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) {
      const double want = (i == j) ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(m(i, j) - want));
    }
  return worst;
}

void check_svd_invariants(const Matrix& m, const SvdResult& r) {
  CHECK(max_abs_offdiag_from_identity(matmul(r.u.transposed(), r.u)) <= 1e-8);
  CHECK(max_abs_offdiag_from_identity(matmul(r.v, r.v.transposed())) <= 1e-8);
  for (std::size_t i = 0; i + 1 < r.s.size(); ++i) CHECK(r.s[i] >= r.s[i + 1]);
  for (double s : r.s) CHECK(s >= 0.0);
  Matrix back = svd_reconstruct(r);
  double err = 0.0;
  for (std::size_t i = 0; i < m.data.size(); ++i)
    err += (back.data[i] - m.data[i]) * (back.data[i] - m.data[i]);
  CHECK(std::sqrt(err) <= 1e-8 * std::max(1.0, m.frobenius_norm()));
}

}  // namespace

TEST_CASE("svd identity") {
  Matrix m = identity(3);
  SvdResult r = svd(m);
  for (std::size_t i = 0; i < 3; ++i) CHECK(r.s[i] == doctest::Approx(1.0).epsilon(1e-12));
  check_svd_invariants(m, r);
}

TEST_CASE("svd diagonal") {
  Matrix m(3, 3);
  m(0, 0) = 3.0;
  m(1, 1) = 2.0;
  m(2, 2) = 1.0;
  SvdResult r = svd(m);
  CHECK(r.s[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(r.s[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.s[2] == doctest::Approx(1.0).epsilon(1e-12));
  check_svd_invariants(m, r);
}

TEST_CASE("svd random 5x7 reconstructs") {
  Rng rng(42);
  Matrix m = random_matrix(5, 7, rng);
  check_svd_invariants(m, svd(m));
}

TEST_CASE("svd round-trip on 200 random shapes") {
  Rng rng(1234);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t r = 1 + rng.uniform_int(32);
    const std::size_t c = 1 + rng.uniform_int(32);
    Matrix m = random_matrix(r, c, rng);
    check_svd_invariants(m, svd(m));
  }
}

TEST_CASE("svd determinism and sign convention") {
  Rng rng(7);
  Matrix m = random_matrix(6, 4, rng);
  SvdResult a = svd(m);
  SvdResult b = svd(m);
  CHECK(a.u.data == b.u.data);
  CHECK(a.s == b.s);
  CHECK(a.v.data == b.v.data);
  for (std::size_t j = 0; j < a.s.size(); ++j) {
    double best = 0.0;
    for (std::size_t i = 0; i < a.u.rows; ++i)
      if (std::abs(a.u(i, j)) > std::abs(best)) best = a.u(i, j);
    CHECK(best >= 0.0);
  }
}

TEST_CASE("svd zero matrix") {
  Matrix m(4, 3);
  SvdResult r = svd(m);
  for (double s : r.s) CHECK(s == 0.0);
  CHECK(max_abs_offdiag_from_identity(matmul(r.u.transposed(), r.u)) <= 1e-8);
}

TEST_CASE("effective_rank basics") {
  CHECK(effective_rank(Matrix(4, 4)) == 0);
  Matrix m(3, 3);
  m(0, 0) = 1.0;
  m(1, 1) = 1e-30;
  CHECK(effective_rank(m) == 1);
}

TEST_CASE("effective_rank of factored matrix is inner dimension") {
  Rng rng(7);
  Matrix a = random_matrix(100, 30, rng);
  Matrix b = random_matrix(30, 90, rng);
  CHECK(effective_rank(matmul(a, b)) == 30);
}

TEST_CASE("effective_rank matches construction for small random factors") {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t inner = 1 + rng.uniform_int(6);
    Matrix a = random_matrix(12, inner, rng);
    Matrix b = random_matrix(inner, 10, rng);
    CHECK(effective_rank(matmul(a, b)) == inner);
  }
}

TEST_CASE("cosine basics") {
  std::vector<double> a{1, 2, 3};
  CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> e1{1, 0}, e2{0, 1};
  CHECK(cosine(e1, e2) == doctest::Approx(0.0));
  std::vector<double> p{1, 1}, q{1, -1};
  CHECK(cosine(p, q) == doctest::Approx(0.0));
  std::vector<double> z{0, 0};
  CHECK(cosine(z, e1) == 0.0);
  std::vector<double> bad{1.0};
  CHECK_THROWS(cosine(a, bad));
}

TEST_CASE("cosine symmetry and scale invariance") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> u(5), v(5);
    for (auto& x : u) x = 2.0 * rng.uniform() - 1.0;
    for (auto& x : v) x = 2.0 * rng.uniform() - 1.0;
    const double c = cosine(u, v);
    CHECK(cosine(v, u) == doctest::Approx(c).epsilon(1e-12));
    const double alpha = 0.1 + 5.0 * rng.uniform();
    std::vector<double> su = u;
    for (auto& x : su) x *= alpha;
    CHECK(std::abs(cosine(su, v) - c) <= 1e-12);
  }
}

TEST_CASE("rng determinism and child streams") {
  Rng a(17), b(17);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // Child streams depend only on the seed and label, not on draw order.
  Rng base(5);
  Rng c0 = base.child(0);
  base.next_u64();
  base.next_u64();
  Rng c0_again = base.child(0);
  CHECK(c0.next_u64() == c0_again.next_u64());
  CHECK(base.child(1).next_u64() != base.child(2).next_u64());
}

TEST_CASE("sample_without_replacement edge cases") {
  Rng rng(1);
  CHECK(sample_without_replacement(5, 5, rng) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(sample_without_replacement(1, 1, rng) == std::vector<std::size_t>{0});
  CHECK_THROWS(sample_without_replacement(3, 4, rng));
  CHECK_THROWS(sample_without_replacement(3, 0, rng));
}

TEST_CASE("sample_without_replacement is uniform over pairs") {
  Rng rng(2024);
  std::map<std::pair<std::size_t, std::size_t>, int> counts;
  const int trials = 60000;
  for (int t = 0; t < trials; ++t) {
    auto s = sample_without_replacement(6, 2, rng);
    counts[{s[0], s[1]}]++;
  }
  CHECK(counts.size() == 15);
  const double p = 1.0 / 15.0;
  const double sigma = std::sqrt(trials * p * (1.0 - p));
  for (const auto& [pair, n] : counts) {
    CHECK(std::abs(n - trials * p) <= 3.0 * sigma);
  }
}

TEST_CASE("solve_spd solves a known system") {
  Matrix a(3, 3, {4, 1, 0, 1, 3, 1, 0, 1, 2});
  std::vector<double> x_true{1.0, -2.0, 0.5};
  std::vector<double> b(3, 0.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) b[i] += a(i, j) * x_true[j];
  auto x = solve_spd(a, b);
  for (std::size_t i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(x_true[i]).epsilon(1e-10));
}
