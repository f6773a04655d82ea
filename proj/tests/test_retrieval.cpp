#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <string>

#include "codir/retrieval.hpp"

using namespace codir;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.data) v = 2.0 * rng.uniform() - 1.0;
  return m;
}

TemplateSet random_templates(std::size_t n_c, std::size_t n_e, Rng& rng) {
  TemplateSet ts;
  ts.templates = random_matrix(n_c, n_e, rng);
  ts.ebar = Matrix(n_c, n_e);
  ts.thresholds.assign(n_c, 0.0);
  return ts;
}

}  // namespace

TEST_CASE("similarity: identical representations score 1 when rows are relevant") {
  Rng rng(1);
  auto ts = random_templates(3, 5, rng);
  ts.thresholds.assign(3, -2.0);  // every row passes the 0.75*t filter
  Matrix d = random_matrix(3, 5, rng);
  CHECK(similarity(d, d, ts) == doctest::Approx(1.0));
}

TEST_CASE("similarity: a single relevant row reduces to that row cosine") {
  Rng rng(2);
  auto ts = random_templates(3, 5, rng);
  Matrix da(3, 5), db = random_matrix(3, 5, rng);
  // Row 1 of da matches its template; the other rows anti-match.
  for (std::size_t j = 0; j < 5; ++j) {
    da(0, j) = -ts.templates(0, j);
    da(1, j) = ts.templates(1, j);
    da(2, j) = -ts.templates(2, j);
  }
  ts.thresholds.assign(3, 0.9);
  CHECK(similarity(da, db, ts) == doctest::Approx(cosine(da.row(1), db.row(1))));
}

TEST_CASE("similarity computes the relevant set on its first argument") {
  Rng rng(3);
  auto ts = random_templates(2, 4, rng);
  ts.thresholds.assign(2, 0.9);
  Matrix da(2, 4), db(2, 4);
  for (std::size_t j = 0; j < 4; ++j) {
    da(0, j) = ts.templates(0, j);   // da relevant set = {0}
    da(1, j) = -ts.templates(1, j);
    db(0, j) = -ts.templates(0, j);  // db relevant set = {1}
    db(1, j) = ts.templates(1, j);
  }
  CHECK(similarity(da, db, ts) == doctest::Approx(cosine(da.row(0), db.row(0))));
  CHECK(similarity(db, da, ts) == doctest::Approx(cosine(db.row(1), da.row(1))));
  CHECK(similarity(da, db, ts) != similarity(db, da, ts));
}

TEST_CASE("similarity: empty relevant set falls back to the all-class mean") {
  Rng rng(4);
  auto ts = random_templates(3, 5, rng);
  ts.thresholds.assign(3, 2.0);  // nothing can exceed 0.75 * 2
  Matrix da = random_matrix(3, 5, rng), db = random_matrix(3, 5, rng);
  double mean = 0.0;
  for (std::size_t c = 0; c < 3; ++c) mean += cosine(da.row(c), db.row(c)) / 3.0;
  CHECK(similarity(da, db, ts) == doctest::Approx(mean));
}

TEST_CASE("retrieve NN: duplicates rank first and a lone candidate is returned") {
  Rng rng(5);
  auto ts = random_templates(3, 6, rng);
  ts.thresholds.assign(3, -2.0);

  std::vector<RepRecord> corpus(6);
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    corpus[k].sample_id = static_cast<std::uint32_t>(k);
    corpus[k].d = random_matrix(3, 6, rng);
  }
  corpus[4].d = corpus[0].d;  // exact duplicate of the reference

  RetrievalQuery q;
  q.ref_id = 0;
  auto ranked = retrieve(q, corpus, ts);
  REQUIRE(ranked.size() == 5);
  CHECK(ranked[0] == 4);

  std::vector<RepRecord> pair{corpus[0], corpus[1]};
  CHECK(retrieve(q, pair, ts) == std::vector<std::uint32_t>{1});

  CHECK_THROWS_AS(retrieve(q, {}, ts), std::invalid_argument);
  q.ref_id = 99;
  CHECK_THROWS_AS(retrieve(q, corpus, ts), std::invalid_argument);
}

TEST_CASE("retrieve NN ranking equals a nested-loop re-computation") {
  Rng rng(6);
  auto ts = random_templates(4, 8, rng);
  ts.thresholds.assign(4, 0.1);
  std::vector<RepRecord> corpus(20);
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    corpus[k].sample_id = static_cast<std::uint32_t>(k);
    corpus[k].d = random_matrix(4, 8, rng);
  }
  RetrievalQuery q;
  q.ref_id = 7;
  auto ranked = retrieve(q, corpus, ts);

  std::vector<std::pair<double, std::uint32_t>> oracle;
  for (const auto& r : corpus) {
    if (r.sample_id == 7) continue;
    oracle.emplace_back(similarity(corpus[7].d, r.d, ts), r.sample_id);
  }
  std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  REQUIRE(ranked.size() == oracle.size());
  for (std::size_t k = 0; k < ranked.size(); ++k) CHECK(ranked[k] == oracle[k].second);
}

TEST_CASE("retrieve M-NN equals compose-then-scan brute force") {
  Rng rng(7);
  const std::size_t n_c = 4, n_e = 8;
  auto ts = random_templates(n_c, n_e, rng);
  // Reference rows 0 and 2 match their templates, rows 1 and 3 are opposed,
  // so classify predicts exactly {0, 2} at threshold 0.5.
  Matrix ref(n_c, n_e);
  for (std::size_t j = 0; j < n_e; ++j) {
    ref(0, j) = ts.templates(0, j);
    ref(1, j) = -ts.templates(1, j);
    ref(2, j) = ts.templates(2, j);
    ref(3, j) = -ts.templates(3, j);
  }
  ts.thresholds.assign(n_c, 0.5);

  std::vector<RepRecord> corpus(50);
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    corpus[k].sample_id = static_cast<std::uint32_t>(k);
    corpus[k].d = random_matrix(n_c, n_e, rng);
  }
  corpus[13].d = ref;

  RetrievalQuery q;
  q.ref_id = 13;
  q.c_plus = 0;
  q.c_minus = 1;
  q.mode = RetrievalMode::kMnn;
  auto ranked = retrieve(q, corpus, ts);

  Matrix composed = compose_swap(ref, 0, 1, ts, classify(ref, ts));
  std::vector<std::pair<double, std::uint32_t>> oracle;
  for (const auto& r : corpus) {
    if (r.sample_id == 13) continue;
    oracle.emplace_back(similarity(composed, r.d, ts), r.sample_id);
  }
  std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  REQUIRE(ranked.size() == oracle.size());
  for (std::size_t k = 0; k < ranked.size(); ++k) CHECK(ranked[k] == oracle[k].second);
}

TEST_CASE("make_queries yields valid, deterministic swap queries") {
  DatasetSpec dspec;
  dspec.n_classes = 2;
  dspec.n_context = 12;
  dspec.height = 8;
  dspec.width = 8;
  dspec.n_train = 8;
  dspec.n_val = 8;
  dspec.n_test = 64;
  Dataset ds = generate(dspec);

  auto queries = make_queries(ds, 30, 42);
  REQUIRE(queries.size() == 30);
  for (const auto& q : queries) {
    CHECK(ds.splits[q.ref_id] == Split::kTest);
    CHECK(ds.class_labels[q.ref_id][q.c_plus] == 1);
    CHECK(ds.class_labels[q.ref_id][q.c_minus] == 0);
    CHECK(q.c_plus != q.c_minus);
  }
  auto again = make_queries(ds, 30, 42);
  for (std::size_t k = 0; k < queries.size(); ++k) {
    CHECK(again[k].ref_id == queries[k].ref_id);
    CHECK(again[k].c_plus == queries[k].c_plus);
    CHECK(again[k].c_minus == queries[k].c_minus);
  }
}

namespace {

// Five hand-labelled samples used by the metric tests.
Dataset metric_dataset() {
  Dataset ds;
  ds.n_classes = 3;
  ds.n_context = 4;
  ds.height = 1;
  ds.width = 1;
  ds.channels = 1;
  const std::vector<std::vector<std::uint8_t>> classes = {
      {1, 1, 0}, {0, 1, 1}, {1, 0, 0}, {0, 0, 1}, {1, 1, 1}};
  const std::vector<std::vector<std::uint8_t>> contexts = {
      {1, 1, 0, 0}, {0, 1, 0, 0}, {1, 1, 1, 0}, {0, 0, 0, 0}, {1, 0, 0, 0}};
  ds.class_labels = classes;
  ds.context_labels = contexts;
  ds.images.assign(5, std::vector<float>(1, 0.0f));
  ds.splits.assign(5, Split::kTest);
  return ds;
}

RetrievalQuery mk(std::size_t ref, std::size_t cp, std::size_t cm) {
  RetrievalQuery q;
  q.ref_id = ref;
  q.c_plus = cp;
  q.c_minus = cm;
  q.mode = RetrievalMode::kMnn;
  return q;
}

}  // namespace

TEST_CASE("retrieval metrics trivial contributions") {
  Dataset ds = metric_dataset();
  // NN retrieved a label-identical sample; M-NN retrieved exactly the target.
  std::vector<RetrievalQuery> queries{mk(0, 0, 2)};  // target {1, 2}
  std::vector<QueryResult> results{{/*nn_top=*/0, /*mnn_top=*/1}};
  // nn_top id 0 is the reference itself here only to pin the label math.
  auto rep = retrieval_metrics(queries, results, ds);
  CHECK(rep.nn_f1 == doctest::Approx(1.0));
  CHECK(rep.mnn_f1 == doctest::Approx(1.0));
  CHECK(rep.mnn_prec == doctest::Approx(1.0));
}

TEST_CASE("retrieval metrics match hand-computed values on 10 queries") {
  Dataset ds = metric_dataset();
  std::vector<RetrievalQuery> queries = {
      mk(0, 0, 2), mk(2, 0, 1), mk(3, 2, 0), mk(1, 2, 0),
      mk(0, 1, 2), mk(2, 0, 2),
      mk(0, 0, 2), mk(2, 0, 1), mk(3, 2, 0), mk(1, 2, 0)};
  std::vector<QueryResult> results = {
      {4, 1}, {0, 1}, {1, 2}, {3, 0},
      {2, 3}, {4, 4},
      {4, 1}, {0, 1}, {1, 2}, {3, 0}};
  auto rep = retrieval_metrics(queries, results, ds);
  // Sums worked out by hand from the label table above.
  CHECK(rep.nn_f1 == doctest::Approx(203.0 / 300.0));
  CHECK(rep.mnn_f1 == doctest::Approx(0.85));
  CHECK(rep.mnn_prec == doctest::Approx(0.9));
  CHECK(rep.f1_pct == doctest::Approx(100.0 * 125.0 / 127.0));

  // Permutation invariance over query order.
  std::vector<std::size_t> perm{3, 1, 4, 0, 2, 9, 8, 7, 6, 5};
  std::vector<RetrievalQuery> q2;
  std::vector<QueryResult> r2;
  for (std::size_t k : perm) {
    q2.push_back(queries[k]);
    r2.push_back(results[k]);
  }
  auto rep2 = retrieval_metrics(q2, r2, ds);
  CHECK(rep2.nn_f1 == doctest::Approx(rep.nn_f1));
  CHECK(rep2.mnn_f1 == doctest::Approx(rep.mnn_f1));
  CHECK(rep2.mnn_prec == doctest::Approx(rep.mnn_prec));
  CHECK(rep2.f1_pct == doctest::Approx(rep.f1_pct));
}

TEST_CASE("query and report CSV writers") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto qpath = dir / "codir_test_queries.csv";
  const auto rpath = dir / "codir_test_report.csv";
  write_queries_csv(qpath, {mk(5, 1, 2)});
  RetrievalReport rep;
  rep.nn_f1 = 0.5;
  rep.mnn_f1 = 0.25;
  rep.mnn_prec = 0.75;
  rep.f1_pct = 90.0;
  write_retrieval_report_csv(rpath, rep);

  std::ifstream qs(qpath), rs(rpath);
  std::string line;
  std::getline(qs, line);
  CHECK(line == "ref_id,c_plus,c_minus");
  std::getline(qs, line);
  CHECK(line == "5,1,2");
  std::getline(rs, line);
  CHECK(line == "NN_F1,MNN_F1,MNN_PREC,F1_PCT");
  std::getline(rs, line);
  CHECK(line == "0.5,0.25,0.75,90");
  std::filesystem::remove(qpath);
  std::filesystem::remove(rpath);
}
