#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "codir/metrics.hpp"
#include "codir/numerics.hpp"
#include "codir/repr.hpp"

namespace codir {

// Truncated SVD factors of one representation; stores k*(n_c + n_e + 1)
// numbers instead of n_c*n_e.
struct CompressedRep {
  std::size_t k = 0;
  Matrix u_k;                 // n_c x k
  std::vector<double> s_k;    // length k
  Matrix v_k;                 // k x n_e
};

// SVD with the shared sign convention; requires n_c <= n_e so that U rows of
// a representation and of the template matrix have equal length.
SvdResult decompose(const Matrix& d);

// Replacement rows for the U factor during composition, keyed by row index.
// Exposed so tests can drive the reconstruction path with known rows.
struct RowEdit {
  std::size_t row = 0;
  std::vector<double> values;
};

// Rebuild sum_k S[k] * outer(U~_{:,k}, V_{k,:}) after applying the row edits
// to U. With no edits this reproduces the rank-|S| reconstruction of d.
Matrix recompose_with_rows(const SvdResult& svd_of_d, const std::vector<RowEdit>& edits);

// Class swap: row c_plus of U becomes the mean of U rows over classes outside
// `predicted`; row c_minus becomes the corresponding row of T's U factor. S
// and V of the original representation are reused.
Matrix compose_swap(const Matrix& d, std::size_t c_plus, std::size_t c_minus,
                    const TemplateSet& templates, const LabelSet& predicted);

CompressedRep compress(const Matrix& d, std::size_t k);
Matrix decompress(const CompressedRep& rep);

// Stored-value fraction of a rank-k truncation relative to the dense matrix.
double compression_ratio(std::size_t n_c, std::size_t n_e, std::size_t k);

// Stacks the leading rows x cols block of each representation (flattened) and
// returns the effective rank of the resulting N x (rows*cols) matrix.
std::size_t representation_rank(const std::vector<Matrix>& reps, std::size_t rows,
                                std::size_t cols);

void write_compressed(const std::filesystem::path& path, const std::vector<CompressedRep>& reps);
std::vector<CompressedRep> read_compressed(const std::filesystem::path& path);

}  // namespace codir
