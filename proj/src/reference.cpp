// Serial reference versions of the kernels. Written for clarity, not speed.

#include "recomb/common.hpp"
#include "recomb/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

namespace recomb::reference {

std::vector<CsrMatrix> count_pairs(std::span<const EncodedDoc> docs, int n_slices, std::int32_t n,
                                   const WindowSpec& spec) {
  if (spec.window < 1) throw ConfigError("window must be >= 1");
  std::vector<std::map<std::pair<std::int32_t, std::int32_t>, double>> counts(n_slices);
  for (const auto& doc : docs) {
    for (std::size_t i = 0; i < doc.ids.size(); ++i)
      for (std::size_t j = i + 1; j < doc.ids.size(); ++j) {
        const std::size_t offset = j - i;
        if (offset > static_cast<std::size_t>(spec.window)) break;
        const auto a = doc.ids[i];
        const auto b = doc.ids[j];
        if (a == b) continue;
        const double w = spec.harmonic_decay ? doc.weight / static_cast<double>(offset) : doc.weight;
        counts[doc.slice][{std::min(a, b), std::max(a, b)}] += w;
      }
  }
  std::vector<CsrMatrix> out;
  for (const auto& m : counts) {
    std::vector<Triplet> upper;
    for (const auto& [key, v] : m) upper.push_back({key.first, key.second, v});
    out.push_back(CsrMatrix::from_upper(n, upper));
  }
  return out;
}

Mat spmm(const CsrMatrix& y, const Mat& w) { return y.to_dense() * w; }

double residual_sq_dense(const CsrMatrix& y, const Mat& u, const Mat& w) {
  const Mat r = y.to_dense() - u * w.transpose();
  return r.squaredNorm();
}

SparseCodes sparse_code(const Mat& dict, const Mat& signals, int sparsity, const SparseCodes* warm) {
  SparseCodes codes;
  codes.sparsity = sparsity;
  codes.atom.assign(static_cast<std::size_t>(signals.rows()) * sparsity, kUnassigned);
  codes.coef.assign(codes.atom.size(), 0.0);
  const int s = static_cast<int>(std::min<Eigen::Index>(sparsity, dict.rows()));

  for (Eigen::Index i = 0; i < signals.rows(); ++i) {
    const Vec x = signals.row(i).transpose();
    std::vector<std::int32_t> chosen;
    Vec gamma;
    Vec r = x;
    for (int step = 0; step < s; ++step) {
      if (r.squaredNorm() <= 1e-24 * std::max(1.0, x.squaredNorm())) break;
      std::int32_t best = -1;
      double best_abs = 0.0;
      for (Eigen::Index a = 0; a < dict.rows(); ++a) {
        if (std::count(chosen.begin(), chosen.end(), a) > 0) continue;
        const double c = std::abs(dict.row(a).dot(r));
        if (c > best_abs) {
          best_abs = c;
          best = static_cast<std::int32_t>(a);
        }
      }
      if (best < 0 || best_abs <= 1e-14 * std::sqrt(std::max(1.0, x.squaredNorm()))) break;
      chosen.push_back(best);
      Mat cols(dict.cols(), static_cast<Eigen::Index>(chosen.size()));
      for (std::size_t j = 0; j < chosen.size(); ++j) cols.col(static_cast<Eigen::Index>(j)) = dict.row(chosen[j]).transpose();
      gamma = cols.colPivHouseholderQr().solve(x);
      r = x - cols * gamma;
    }
    const std::size_t base = static_cast<std::size_t>(i) * sparsity;
    for (std::size_t j = 0; j < chosen.size(); ++j) {
      codes.atom[base + j] = chosen[j];
      codes.coef[base + j] = gamma(static_cast<Eigen::Index>(j));
    }
    if (warm != nullptr) {
      const std::span<const std::int32_t> wa(warm->atom.data() + base, sparsity);
      const std::span<const double> wc(warm->coef.data() + base, sparsity);
      if (code_residual_sq(dict, x, wa, wc) <= r.squaredNorm()) {
        std::copy(wa.begin(), wa.end(), codes.atom.begin() + static_cast<std::ptrdiff_t>(base));
        std::copy(wc.begin(), wc.end(), codes.coef.begin() + static_cast<std::ptrdiff_t>(base));
      }
    }
  }
  return codes;
}

Assignment cosine_argmax(const Mat& atoms, const Mat& vectors) {
  Assignment out;
  for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
    const double norm = vectors.row(i).norm();
    std::int32_t best = kUnassigned;
    double best_cos = 0.0;
    if (norm > 0.0) {
      const Vec unit = vectors.row(i).transpose() / norm;
      for (Eigen::Index a = 0; a < atoms.rows(); ++a) {
        const double an = atoms.row(a).norm();
        if (an == 0.0) continue;
        const double c = unit.dot(atoms.row(a).transpose() / an);
        if (best == kUnassigned || c > best_cos) {
          best = static_cast<std::int32_t>(a);
          best_cos = c;
        }
      }
    }
    out.atom.push_back(best);
    out.score.push_back(best_cos);
  }
  return out;
}

}  // namespace recomb::reference
