#include "recomb/sparse.hpp"

#include "recomb/common.hpp"

#include <algorithm>

namespace recomb {

CsrMatrix CsrMatrix::from_upper(std::int32_t n, std::span<const Triplet> upper) {
  std::vector<Triplet> full;
  full.reserve(upper.size() * 2);
  for (const auto& t : upper) {
    if (t.row < 0 || t.col < 0 || t.row >= n || t.col >= n || t.row > t.col)
      throw Error("CsrMatrix::from_upper: triplet outside upper triangle");
    full.push_back(t);
    if (t.row != t.col) full.push_back({t.col, t.row, t.value});
  }
  std::stable_sort(full.begin(), full.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });

  CsrMatrix m(n);
  m.col_.reserve(full.size());
  m.val_.reserve(full.size());
  for (std::size_t i = 0; i < full.size();) {
    const auto r = full[i].row;
    const auto c = full[i].col;
    double v = full[i].value;
    std::size_t j = i + 1;
    for (; j < full.size() && full[j].row == r && full[j].col == c; ++j) v += full[j].value;
    m.col_.push_back(c);
    m.val_.push_back(v);
    ++m.row_ptr_[static_cast<std::size_t>(r) + 1];
    i = j;
  }
  for (std::int32_t r = 0; r < n; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
  return m;
}

double CsrMatrix::at(std::int32_t row, std::int32_t col) const {
  const auto c = cols(row);
  const auto it = std::lower_bound(c.begin(), c.end(), col);
  if (it == c.end() || *it != col) return 0.0;
  return values(row)[static_cast<std::size_t>(it - c.begin())];
}

double CsrMatrix::row_sum(std::int32_t row) const {
  double s = 0.0;
  for (double v : values(row)) s += v;
  return s;
}

double CsrMatrix::frobenius_sq() const {
  double s = 0.0;
  for (double v : val_) s += v * v;
  return s;
}

bool CsrMatrix::is_symmetric() const {
  for (std::int32_t r = 0; r < n_; ++r) {
    const auto c = cols(r);
    const auto v = values(r);
    for (std::size_t i = 0; i < c.size(); ++i)
      if (at(c[i], r) != v[i]) return false;
  }
  return true;
}

std::vector<Triplet> CsrMatrix::upper_triplets() const {
  std::vector<Triplet> out;
  for (std::int32_t r = 0; r < n_; ++r) {
    const auto c = cols(r);
    const auto v = values(r);
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c[i] >= r) out.push_back({r, c[i], v[i]});
  }
  return out;
}

Mat CsrMatrix::to_dense() const {
  Mat d = Mat::Zero(n_, n_);
  for (std::int32_t r = 0; r < n_; ++r) {
    const auto c = cols(r);
    const auto v = values(r);
    for (std::size_t i = 0; i < c.size(); ++i) d(r, c[i]) = v[i];
  }
  return d;
}

}  // namespace recomb
