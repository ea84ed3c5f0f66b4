#include "recomb/kernels.hpp"

#include "recomb/common.hpp"
#include "recomb/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace recomb {

namespace {

/// (pair key, weight) entries; sorted and reduced per shard.
using PairList = std::vector<std::pair<std::uint64_t, double>>;

std::uint64_t pair_key(std::int32_t a, std::int32_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

void accumulate_doc(const EncodedDoc& doc, const WindowSpec& spec, PairList& into) {
  const auto& ids = doc.ids;
  const std::size_t len = ids.size();
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t stop = std::min(len, i + 1 + static_cast<std::size_t>(spec.window));
    for (std::size_t j = i + 1; j < stop; ++j) {
      if (ids[i] == ids[j]) continue;
      const double w = spec.harmonic_decay ? doc.weight / static_cast<double>(j - i) : doc.weight;
      into.emplace_back(pair_key(ids[i], ids[j]), w);
    }
  }
}

/// Sorts by key and sums equal keys left to right in their original order.
void reduce_pairs(PairList& list) {
  std::stable_sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::size_t out = 0;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (out > 0 && list[out - 1].first == list[i].first) {
      list[out - 1].second += list[i].second;
    } else {
      list[out++] = list[i];
    }
  }
  list.resize(out);
}

CsrMatrix list_to_matrix(const PairList& list, std::int32_t n) {
  std::vector<Triplet> upper;
  upper.reserve(list.size());
  for (const auto& [key, v] : list)
    upper.push_back({static_cast<std::int32_t>(key >> 32), static_cast<std::int32_t>(key & 0xffffffffu), v});
  return CsrMatrix::from_upper(n, upper);
}

void check_window(const WindowSpec& spec) {
  if (spec.window < 1) throw ConfigError("window must be >= 1");
}

double sum_in_order(const std::vector<double>& parts) {
  double s = 0.0;
  for (double p : parts) s += p;
  return s;
}

}  // namespace

double code_residual_sq(const Mat& dict, const Eigen::Ref<const Vec>& signal,
                        std::span<const std::int32_t> atoms, std::span<const double> coefs) {
  Vec r = signal;
  for (std::size_t i = 0; i < atoms.size(); ++i)
    if (atoms[i] >= 0) r -= coefs[i] * dict.row(atoms[i]).transpose();
  return r.squaredNorm();
}

namespace kernels {

std::vector<CsrMatrix> count_pairs(std::span<const EncodedDoc> docs, int n_slices, std::int32_t n,
                                   const WindowSpec& spec) {
  check_window(spec);
  const std::size_t n_shards = (docs.size() + kShardDocs - 1) / kShardDocs;
  std::vector<std::vector<PairList>> shards(n_shards, std::vector<PairList>(n_slices));

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(n_shards); ++s) {
    const std::size_t begin = static_cast<std::size_t>(s) * kShardDocs;
    const std::size_t end = std::min(docs.size(), begin + kShardDocs);
    for (std::size_t d = begin; d < end; ++d) accumulate_doc(docs[d], spec, shards[s][docs[d].slice]);
    for (auto& list : shards[s]) reduce_pairs(list);
  }

  std::vector<CsrMatrix> out(static_cast<std::size_t>(n_slices));
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < n_slices; ++t) {
    PairList merged;
    for (auto& shard : shards) {
      merged.insert(merged.end(), shard[t].begin(), shard[t].end());
      PairList{}.swap(shard[t]);
    }
    reduce_pairs(merged);
    out[static_cast<std::size_t>(t)] = list_to_matrix(merged, n);
  }
  return out;
}

Mat spmm(const CsrMatrix& y, const Mat& w) {
  const std::int32_t n = y.n();
  Mat out = Mat::Zero(n, w.cols());
#pragma omp parallel for schedule(static)
  for (std::int32_t i = 0; i < n; ++i) {
    const auto c = y.cols(i);
    const auto v = y.values(i);
    for (std::size_t e = 0; e < c.size(); ++e) out.row(i).noalias() += v[e] * w.row(c[e]);
  }
  return out;
}

double residual_sq_dense(const CsrMatrix& y, const Mat& u, const Mat& w) {
  const std::int32_t n = y.n();
  std::vector<double> parts(static_cast<std::size_t>(n), 0.0);
#pragma omp parallel for schedule(static)
  for (std::int32_t i = 0; i < n; ++i) {
    Vec row = w * u.row(i).transpose();
    const auto c = y.cols(i);
    const auto v = y.values(i);
    for (std::size_t e = 0; e < c.size(); ++e) row(c[e]) -= v[e];
    parts[i] = row.squaredNorm();
  }
  return sum_in_order(parts);
}

double residual_sq_gram(const CsrMatrix& y, const Mat& u, const Mat& w) {
  const std::int32_t n = y.n();
  std::vector<double> cross(static_cast<std::size_t>(n), 0.0);
#pragma omp parallel for schedule(static)
  for (std::int32_t i = 0; i < n; ++i) {
    const auto c = y.cols(i);
    const auto v = y.values(i);
    double s = 0.0;
    for (std::size_t e = 0; e < c.size(); ++e) s += v[e] * u.row(i).dot(w.row(c[e]));
    cross[i] = s;
  }
  const Mat gu = u.transpose() * u;
  const Mat gw = w.transpose() * w;
  return y.frobenius_sq() - 2.0 * sum_in_order(cross) + gu.cwiseProduct(gw).sum();
}

SparseCodes sparse_code(const Mat& dict, const Mat& signals, int sparsity, const SparseCodes* warm) {
  const auto n = signals.rows();
  const auto n_atoms = dict.rows();
  const int s = static_cast<int>(std::min<Eigen::Index>(sparsity, n_atoms));
  SparseCodes codes;
  codes.sparsity = sparsity;
  codes.atom.assign(static_cast<std::size_t>(n) * sparsity, kUnassigned);
  codes.coef.assign(static_cast<std::size_t>(n) * sparsity, 0.0);

#pragma omp parallel for schedule(dynamic, 64)
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec x = signals.row(i).transpose();
    const double x_sq = x.squaredNorm();
    std::vector<std::int32_t> chosen;
    Vec gamma;
    Vec r = x;
    for (int step = 0; step < s; ++step) {
      if (r.squaredNorm() <= 1e-24 * std::max(1.0, x_sq)) break;
      const Vec corr = dict * r;
      Eigen::Index best = -1;
      double best_abs = 0.0;
      for (Eigen::Index a = 0; a < n_atoms; ++a) {
        if (std::find(chosen.begin(), chosen.end(), a) != chosen.end()) continue;
        if (std::abs(corr(a)) > best_abs) {
          best_abs = std::abs(corr(a));
          best = a;
        }
      }
      if (best < 0 || best_abs <= 1e-14 * std::sqrt(std::max(1.0, x_sq))) break;
      chosen.push_back(static_cast<std::int32_t>(best));

      const auto m = static_cast<Eigen::Index>(chosen.size());
      Mat sub(m, dict.cols());
      for (Eigen::Index j = 0; j < m; ++j) sub.row(j) = dict.row(chosen[j]);
      const Mat gram = sub * sub.transpose();
      gamma = gram.ldlt().solve(sub * x);
      r = x - sub.transpose() * gamma;
    }

    const std::size_t base = static_cast<std::size_t>(i) * sparsity;
    for (std::size_t j = 0; j < chosen.size(); ++j) {
      codes.atom[base + j] = chosen[j];
      codes.coef[base + j] = gamma(static_cast<Eigen::Index>(j));
    }

    if (warm != nullptr) {
      const std::span<const std::int32_t> wa(warm->atom.data() + base, sparsity);
      const std::span<const double> wc(warm->coef.data() + base, sparsity);
      const double warm_res = code_residual_sq(dict, x, wa, wc);
      if (warm_res <= r.squaredNorm()) {
        std::copy(wa.begin(), wa.end(), codes.atom.begin() + static_cast<std::ptrdiff_t>(base));
        std::copy(wc.begin(), wc.end(), codes.coef.begin() + static_cast<std::ptrdiff_t>(base));
      }
    }
  }
  return codes;
}

Assignment cosine_argmax(const Mat& atoms, const Mat& vectors) {
  const auto n = vectors.rows();
  Assignment out;
  out.atom.assign(static_cast<std::size_t>(n), kUnassigned);
  out.score.assign(static_cast<std::size_t>(n), 0.0);
  Vec atom_norm(atoms.rows());
  for (Eigen::Index a = 0; a < atoms.rows(); ++a) atom_norm(a) = atoms.row(a).norm();

#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = vectors.row(i).norm();
    if (norm == 0.0) continue;
    std::int32_t best = kUnassigned;
    double best_cos = 0.0;
    for (Eigen::Index a = 0; a < atoms.rows(); ++a) {
      if (atom_norm(a) == 0.0) continue;
      const double c = vectors.row(i).dot(atoms.row(a)) / (norm * atom_norm(a));
      if (best == kUnassigned || c > best_cos) {
        best = static_cast<std::int32_t>(a);
        best_cos = c;
      }
    }
    out.atom[i] = best;
    out.score[i] = best_cos;
  }
  return out;
}

}  // namespace kernels
}  // namespace recomb
