#include "codir/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>

namespace codir {

namespace {

LabelSet bits_to_set(const std::vector<std::uint8_t>& bits) {
  LabelSet out;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out.push_back(i);
  return out;
}

double set_f1(const LabelSet& a, const LabelSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (std::size_t x : a)
    if (std::binary_search(b.begin(), b.end(), x)) ++inter;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a.size() + b.size());
}

}  // namespace

double similarity(const Matrix& da, const Matrix& db, const TemplateSet& templates) {
  if (da.rows != db.rows || da.cols != db.cols || da.rows != templates.templates.rows)
    throw std::invalid_argument("similarity: shape mismatch");
  std::vector<std::size_t> relevant;
  for (std::size_t c = 0; c < da.rows; ++c)
    if (cosine(da.row(c), templates.templates.row(c)) > 0.75 * templates.thresholds[c])
      relevant.push_back(c);
  if (relevant.empty()) {
    relevant.resize(da.rows);
    for (std::size_t c = 0; c < da.rows; ++c) relevant[c] = c;
  }
  double acc = 0.0;
  for (std::size_t c : relevant) acc += cosine(da.row(c), db.row(c));
  return acc / static_cast<double>(relevant.size());
}

std::vector<std::uint32_t> retrieve(const RetrievalQuery& query,
                                    const std::vector<RepRecord>& corpus,
                                    const TemplateSet& templates) {
  if (corpus.empty()) throw std::invalid_argument("retrieve: empty corpus");
  const RepRecord* ref = nullptr;
  for (const auto& r : corpus)
    if (r.sample_id == query.ref_id) {
      ref = &r;
      break;
    }
  if (!ref)
    throw std::invalid_argument("retrieve: reference id " + std::to_string(query.ref_id) +
                                " not in corpus");

  Matrix probe = ref->d;
  if (query.mode == RetrievalMode::kMnn) {
    const LabelSet predicted = classify(ref->d, templates);
    probe = compose_swap(ref->d, query.c_plus, query.c_minus, templates, predicted);
  }

  std::vector<std::pair<double, std::uint32_t>> scored;
  scored.reserve(corpus.size());
  for (const auto& r : corpus) {
    if (r.sample_id == query.ref_id) continue;
    scored.emplace_back(similarity(probe, r.d, templates), r.sample_id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::uint32_t> out;
  out.reserve(scored.size());
  for (const auto& [score, id] : scored) out.push_back(id);
  return out;
}

std::vector<RetrievalQuery> make_queries(const Dataset& ds, std::size_t count,
                                         std::uint64_t seed) {
  std::vector<std::size_t> eligible;
  for (std::size_t id : ds.indices_of(Split::kTest)) {
    std::size_t present = 0;
    for (std::uint8_t b : ds.class_labels[id]) present += b;
    if (present >= 1 && present < ds.n_classes) eligible.push_back(id);
  }
  if (eligible.empty()) throw std::runtime_error("make_queries: no eligible test samples");

  Rng rng = Rng(seed).child(0x51455259);  // query stream
  std::vector<RetrievalQuery> queries;
  queries.reserve(count);
  for (std::size_t q = 0; q < count; ++q) {
    const std::size_t id = eligible[rng.uniform_int(eligible.size())];
    LabelSet present, absent;
    for (std::size_t c = 0; c < ds.n_classes; ++c)
      (ds.class_labels[id][c] ? present : absent).push_back(c);
    RetrievalQuery query;
    query.ref_id = id;
    query.c_plus = present[rng.uniform_int(present.size())];
    query.c_minus = absent[rng.uniform_int(absent.size())];
    query.mode = RetrievalMode::kMnn;
    queries.push_back(query);
  }
  return queries;
}

RetrievalReport retrieval_metrics(const std::vector<RetrievalQuery>& queries,
                                  const std::vector<QueryResult>& results, const Dataset& ds) {
  if (queries.size() != results.size() || queries.empty())
    throw std::invalid_argument("retrieval_metrics: queries/results mismatch");

  RetrievalReport rep;
  double nn_ctx = 0.0, mnn_ctx = 0.0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& query = queries[q];
    const LabelSet ref_classes = bits_to_set(ds.class_labels[query.ref_id]);
    const LabelSet ref_context = bits_to_set(ds.context_labels[query.ref_id]);

    LabelSet target = ref_classes;
    target.erase(std::remove(target.begin(), target.end(), query.c_plus), target.end());
    target.push_back(query.c_minus);
    std::sort(target.begin(), target.end());
    target.erase(std::unique(target.begin(), target.end()), target.end());

    const LabelSet nn_classes = bits_to_set(ds.class_labels[results[q].nn_top]);
    const LabelSet mnn_classes = bits_to_set(ds.class_labels[results[q].mnn_top]);
    rep.nn_f1 += set_f1(nn_classes, ref_classes);
    rep.mnn_f1 += set_f1(mnn_classes, target);

    const bool has_minus =
        std::binary_search(mnn_classes.begin(), mnn_classes.end(), query.c_minus);
    const bool has_plus =
        std::binary_search(mnn_classes.begin(), mnn_classes.end(), query.c_plus);
    if (has_minus && !has_plus) rep.mnn_prec += 1.0;

    nn_ctx += set_f1(bits_to_set(ds.context_labels[results[q].nn_top]), ref_context);
    mnn_ctx += set_f1(bits_to_set(ds.context_labels[results[q].mnn_top]), ref_context);
  }
  const double n = static_cast<double>(queries.size());
  rep.nn_f1 /= n;
  rep.mnn_f1 /= n;
  rep.mnn_prec /= n;
  rep.f1_pct = nn_ctx > 0.0 ? 100.0 * mnn_ctx / nn_ctx : 0.0;
  return rep;
}

void write_queries_csv(const std::filesystem::path& path,
                       const std::vector<RetrievalQuery>& queries) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << "ref_id,c_plus,c_minus\n";
  for (const auto& q : queries) os << q.ref_id << ',' << q.c_plus << ',' << q.c_minus << '\n';
}

void write_retrieval_report_csv(const std::filesystem::path& path,
                                const RetrievalReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << "NN_F1,MNN_F1,MNN_PREC,F1_PCT\n";
  os << report.nn_f1 << ',' << report.mnn_f1 << ',' << report.mnn_prec << ','
     << report.f1_pct << '\n';
}

}  // namespace codir
