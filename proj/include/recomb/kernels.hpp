#pragma once

// Data-parallel inner loops. Every kernel in `kernels` has a serial
// counterpart in `reference` with the same signature; the reference versions
// are deliberately naive and exist for tests and the benchmark.
//
// All parallel reductions write per-row (or per-shard) partials and then sum
// them serially in index order, so results do not depend on thread count.

#include "recomb/sparse.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace recomb {

/// A tokenized document mapped to vocabulary ids (out-of-vocabulary tokens
/// already removed).
struct EncodedDoc {
  std::int32_t slice = 0;
  double weight = 1.0;
  std::vector<std::int32_t> ids;
};

struct WindowSpec {
  int window = 5;
  /// Scale each pair by 1/offset instead of counting it uniformly.
  bool harmonic_decay = false;
};

/// Fixed-width sparse codes: `sparsity` slots per signal, unused slots carry
/// atom index -1 and coefficient 0.
struct SparseCodes {
  int sparsity = 0;
  std::vector<std::int32_t> atom;
  std::vector<double> coef;

  std::size_t signals() const { return sparsity == 0 ? 0 : atom.size() / sparsity; }
};

inline constexpr std::int32_t kUnassigned = -1;

struct Assignment {
  std::vector<std::int32_t> atom;
  std::vector<double> score;
};

namespace kernels {

/// Documents are processed in fixed shards of this many documents; the shard
/// layout is independent of thread count.
inline constexpr std::size_t kShardDocs = 256;

/// Symmetric weighted co-occurrence counts, one matrix per slice. Self-pairs
/// are skipped.
std::vector<CsrMatrix> count_pairs(std::span<const EncodedDoc> docs, int n_slices, std::int32_t n,
                                   const WindowSpec& spec);

/// Y * W for sparse Y (n x n) and dense W (n x k).
Mat spmm(const CsrMatrix& y, const Mat& w);

/// ||Y - U W^T||_F^2 by materializing each residual row.
double residual_sq_dense(const CsrMatrix& y, const Mat& u, const Mat& w);

/// ||Y - U W^T||_F^2 as ||Y||^2 - 2 sum_nnz Y_ij u_i.w_j + tr(U^T U W^T W).
double residual_sq_gram(const CsrMatrix& y, const Mat& u, const Mat& w);

/// Orthogonal matching pursuit of every row of `signals` against the rows of
/// `dict` (unit-norm atoms). When `warm` is given, a signal keeps its previous
/// code whenever that code reconstructs it at least as well.
SparseCodes sparse_code(const Mat& dict, const Mat& signals, int sparsity,
                        const SparseCodes* warm = nullptr);

/// For each row of `vectors`, the index of the row of `atoms` with maximal
/// cosine similarity (lowest index on ties). Zero rows get kUnassigned.
Assignment cosine_argmax(const Mat& atoms, const Mat& vectors);

}  // namespace kernels

namespace reference {

std::vector<CsrMatrix> count_pairs(std::span<const EncodedDoc> docs, int n_slices, std::int32_t n,
                                   const WindowSpec& spec);
Mat spmm(const CsrMatrix& y, const Mat& w);
double residual_sq_dense(const CsrMatrix& y, const Mat& u, const Mat& w);
SparseCodes sparse_code(const Mat& dict, const Mat& signals, int sparsity,
                        const SparseCodes* warm = nullptr);
Assignment cosine_argmax(const Mat& atoms, const Mat& vectors);

}  // namespace reference

/// Squared reconstruction error of one signal under a code.
double code_residual_sq(const Mat& dict, const Eigen::Ref<const Vec>& signal,
                        std::span<const std::int32_t> atoms, std::span<const double> coefs);

}  // namespace recomb
