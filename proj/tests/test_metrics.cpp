#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "codir/metrics.hpp"
#include "codir/numerics.hpp"

using namespace codir;

namespace {

// Independent re-computation using explicit set membership tests.
PrfReport oracle_prf(const std::vector<LabelSet>& pred, const std::vector<LabelSet>& truth) {
  PrfReport rep;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    std::size_t hit = 0;
    for (std::size_t x : pred[k])
      if (std::find(truth[k].begin(), truth[k].end(), x) != truth[k].end()) ++hit;
    double p, r, f;
    if (pred[k].empty() && truth[k].empty()) {
      p = r = f = 1.0;
    } else {
      p = pred[k].empty() ? 0.0 : double(hit) / double(pred[k].size());
      r = truth[k].empty() ? 1.0 : double(hit) / double(truth[k].size());
      f = 2.0 * double(hit) / double(pred[k].size() + truth[k].size());
    }
    rep.per_sample_f1.push_back(f);
    rep.precision += p;
    rep.recall += r;
    rep.f1 += f;
  }
  rep.precision /= double(pred.size());
  rep.recall /= double(pred.size());
  rep.f1 /= double(pred.size());
  return rep;
}

}  // namespace

TEST_CASE("perfect prediction") {
  std::vector<LabelSet> sets{{0, 2}, {1}, {0, 1, 3}};
  auto rep = example_prf(sets, sets);
  CHECK(rep.precision == 1.0);
  CHECK(rep.recall == 1.0);
  CHECK(rep.f1 == 1.0);
}

TEST_CASE("partial overlap arithmetic") {
  auto rep = example_prf({{0}}, {{0, 1}});
  CHECK(rep.precision == doctest::Approx(1.0));
  CHECK(rep.recall == doctest::Approx(0.5));
  CHECK(rep.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("empty-set conventions") {
  CHECK(example_prf({{}}, {{}}).f1 == 1.0);
  auto rep = example_prf({{}}, {{1}});
  CHECK(rep.precision == 0.0);
  CHECK(rep.f1 == 0.0);
  CHECK(example_prf({{1}}, {{}}).recall == 1.0);
}

TEST_CASE("length mismatch throws") {
  CHECK_THROWS(example_prf({{0}}, {}));
}

TEST_CASE("matches independent oracle on random pairs") {
  Rng rng(11);
  std::vector<LabelSet> pred, truth;
  for (int k = 0; k < 100; ++k) {
    LabelSet p, t;
    for (std::size_t lbl = 0; lbl < 6; ++lbl) {
      if (rng.uniform() < 0.4) p.push_back(lbl);
      if (rng.uniform() < 0.4) t.push_back(lbl);
    }
    pred.push_back(p);
    truth.push_back(t);
  }
  auto a = example_prf(pred, truth);
  auto b = oracle_prf(pred, truth);
  CHECK(a.precision == doctest::Approx(b.precision).epsilon(1e-12));
  CHECK(a.recall == doctest::Approx(b.recall).epsilon(1e-12));
  CHECK(a.f1 == doctest::Approx(b.f1).epsilon(1e-12));
}

TEST_CASE("adding a correct label never decreases per-sample f1") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    LabelSet p, t;
    for (std::size_t lbl = 0; lbl < 6; ++lbl) {
      if (rng.uniform() < 0.4) p.push_back(lbl);
      if (rng.uniform() < 0.4) t.push_back(lbl);
    }
    LabelSet missing;
    for (std::size_t x : t)
      if (std::find(p.begin(), p.end(), x) == p.end()) missing.push_back(x);
    if (missing.empty()) continue;
    LabelSet p2 = p;
    p2.push_back(missing[rng.uniform_int(missing.size())]);
    std::sort(p2.begin(), p2.end());
    CHECK(example_prf({p2}, {t}).f1 >= example_prf({p}, {t}).f1);
  }
}
