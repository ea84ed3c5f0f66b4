#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace recomb {

/// Row-major dense matrix; one word (or atom) per row.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct Triplet {
  std::int32_t row;
  std::int32_t col;
  double value;
};

/// Square sparse matrix in CSR form with sorted column indices. Symmetric
/// matrices store both triangles.
class CsrMatrix {
 public:
  CsrMatrix() = default;
  explicit CsrMatrix(std::int32_t n) : n_(n), row_ptr_(static_cast<std::size_t>(n) + 1, 0) {}

  /// Builds a symmetric matrix from upper-triangle triplets (row <= col).
  /// Each off-diagonal value is mirrored so that (i,j) and (j,i) hold the
  /// identical double. Duplicate coordinates are summed in input order.
  static CsrMatrix from_upper(std::int32_t n, std::span<const Triplet> upper);

  std::int32_t n() const { return n_; }
  std::size_t nnz() const { return col_.size(); }

  std::span<const std::int32_t> cols(std::int32_t row) const {
    return {col_.data() + row_ptr_[row], col_.data() + row_ptr_[row + 1]};
  }
  std::span<const double> values(std::int32_t row) const {
    return {val_.data() + row_ptr_[row], val_.data() + row_ptr_[row + 1]};
  }

  /// Returns 0 for structural zeros.
  double at(std::int32_t row, std::int32_t col) const;
  double row_sum(std::int32_t row) const;
  double frobenius_sq() const;
  bool is_symmetric() const;

  /// Upper-triangle entries in row-major order.
  std::vector<Triplet> upper_triplets() const;
  Mat to_dense() const;

  const std::vector<std::int64_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::int32_t>& col_index() const { return col_; }
  const std::vector<double>& value_array() const { return val_; }

  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

 private:
  std::int32_t n_ = 0;
  std::vector<std::int64_t> row_ptr_{0};
  std::vector<std::int32_t> col_;
  std::vector<double> val_;
};

}  // namespace recomb
