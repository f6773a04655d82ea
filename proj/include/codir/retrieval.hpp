#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "codir/compose.hpp"
#include "codir/metrics.hpp"
#include "codir/repr.hpp"
#include "codir/synthdata.hpp"

namespace codir {

enum class RetrievalMode : std::uint8_t { kNn = 0, kMnn = 1 };

// One retrieval task: find the neighbor of a reference sample, optionally
// after swapping class c_plus (present) for c_minus (absent) in its
// representation.
struct RetrievalQuery {
  std::size_t ref_id = 0;
  std::size_t c_plus = 0;
  std::size_t c_minus = 0;
  RetrievalMode mode = RetrievalMode::kNn;
};

// Mean cosine over the rows the query-side representation da is confident
// about: { c : cos(da_c, T_c) > 0.75 * t_c }. Falls back to the mean over all
// classes when that set is empty.
double similarity(const Matrix& da, const Matrix& db, const TemplateSet& templates);

// Corpus ranking by similarity to the (possibly composed) reference; the
// reference itself is excluded and ties break toward the smaller sample id.
std::vector<std::uint32_t> retrieve(const RetrievalQuery& query,
                                    const std::vector<RepRecord>& corpus,
                                    const TemplateSet& templates);

// Seeded query construction over the test split: reference drawn from samples
// with at least one present and one absent class, c_plus uniform over present
// classes, c_minus uniform over absent ones.
std::vector<RetrievalQuery> make_queries(const Dataset& ds, std::size_t count,
                                         std::uint64_t seed);

// Top-1 neighbors of one query under both modes.
struct QueryResult {
  std::uint32_t nn_top = 0;
  std::uint32_t mnn_top = 0;
};

struct RetrievalReport {
  double nn_f1 = 0.0;    // class-set F1 of the NN top-1 vs the reference
  double mnn_f1 = 0.0;   // class-set F1 of the M-NN top-1 vs the swapped target set
  double mnn_prec = 0.0; // fraction of M-NN top-1 hits containing c_minus, lacking c_plus
  double f1_pct = 0.0;   // context-label F1 of M-NN over NN, in percent
};

RetrievalReport retrieval_metrics(const std::vector<RetrievalQuery>& queries,
                                  const std::vector<QueryResult>& results, const Dataset& ds);

void write_queries_csv(const std::filesystem::path& path,
                       const std::vector<RetrievalQuery>& queries);
void write_retrieval_report_csv(const std::filesystem::path& path,
                                const RetrievalReport& report);

}  // namespace codir
