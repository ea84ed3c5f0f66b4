#pragma once

// Generators and brute-force oracles shared by the unit and acceptance tests.

#include "recomb/corpus.hpp"
#include "recomb/embedding.hpp"
#include "recomb/kernels.hpp"
#include "recomb/measures.hpp"
#include "recomb/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <unistd.h>

namespace testing {

using recomb::Mat;
using recomb::Vec;

inline double uniform(std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Mat random_mat(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Mat m(rows, cols);
  std::normal_distribution<double> g(0.0, scale);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

inline Mat normalize_rows(Mat m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
  return m;
}

/// Random symmetric nonnegative sparse matrix with zero diagonal.
inline recomb::CsrMatrix random_symmetric(std::mt19937_64& rng, std::int32_t n, double density) {
  std::vector<recomb::Triplet> upper;
  for (std::int32_t i = 0; i < n; ++i)
    for (std::int32_t j = i + 1; j < n; ++j)
      if (uniform(rng) < density) upper.push_back({i, j, uniform(rng, 0.1, 3.0)});
  return recomb::CsrMatrix::from_upper(n, upper);
}

inline std::vector<recomb::PpmiMatrix> random_ppmi(std::mt19937_64& rng, int slices, std::int32_t n,
                                                   double density) {
  std::vector<recomb::PpmiMatrix> y;
  for (int t = 0; t < slices; ++t) y.push_back({t, random_symmetric(rng, n, density)});
  return y;
}

/// Training objective evaluated with dense matrices and explicit loops.
inline double dense_objective(const std::vector<recomb::PpmiMatrix>& y, const recomb::EmbeddingTensor& u,
                              double lambda, double tau) {
  double fit = 0.0, ridge = 0.0, smooth = 0.0;
  for (int t = 0; t < u.slices(); ++t) {
    const Mat yd = y[static_cast<std::size_t>(t)].values.to_dense();
    const Mat& ut = u.slice(t);
    for (Eigen::Index i = 0; i < ut.rows(); ++i) {
      for (Eigen::Index j = 0; j < ut.rows(); ++j) {
        double dot = 0.0;
        for (Eigen::Index d = 0; d < ut.cols(); ++d) dot += ut(i, d) * ut(j, d);
        fit += (yd(i, j) - dot) * (yd(i, j) - dot);
      }
      for (Eigen::Index d = 0; d < ut.cols(); ++d) {
        ridge += ut(i, d) * ut(i, d);
        if (t > 0) {
          const double diff = u.slice(t - 1)(i, d) - ut(i, d);
          smooth += diff * diff;
        }
      }
    }
  }
  return 0.5 * fit + 0.5 * lambda * ridge + 0.5 * tau * smooth;
}

/// Two planted clusters per slice plus one word that moves from cluster A to
/// cluster B at `flip_slice`. Returns (PPMI per slice, migrating word id).
/// Words [0, size) form cluster A, [size, 2*size) cluster B.
struct PlantedCorpus {
  std::vector<recomb::PpmiMatrix> y;
  std::int32_t migrant = 0;
  int size = 0;
};

inline PlantedCorpus planted_clusters(int slices, int size, int flip_slice, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PlantedCorpus pc;
  pc.size = size;
  const std::int32_t n = 2 * size + 1;
  pc.migrant = 2 * size;
  for (int t = 0; t < slices; ++t) {
    std::vector<recomb::Triplet> upper;
    auto cluster_of = [&](std::int32_t w) {
      if (w == pc.migrant) return t < flip_slice ? 0 : 1;
      return w < size ? 0 : 1;
    };
    for (std::int32_t i = 0; i < n; ++i)
      for (std::int32_t j = i + 1; j < n; ++j)
        if (cluster_of(i) == cluster_of(j)) upper.push_back({i, j, 1.0 + 0.5 * uniform(rng)});
        else if (uniform(rng) < 0.05) upper.push_back({i, j, 0.05 * uniform(rng)});
    pc.y.push_back({t, recomb::CsrMatrix::from_upper(n, upper)});
  }
  return pc;
}

inline double mean_cosine(const Mat& v, const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b) {
  double s = 0.0;
  int n = 0;
  for (auto i : a)
    for (auto j : b) {
      if (i == j) continue;
      s += recomb::cosine(v.row(i).transpose(), v.row(j).transpose());
      ++n;
    }
  return s / n;
}

/// Measure oracles written from the definitions with explicit loops.
namespace oracle {

inline double cos_dist(const Mat& v, std::int32_t a, std::int32_t b) {
  double dot = 0, na = 0, nb = 0;
  for (Eigen::Index d = 0; d < v.cols(); ++d) {
    dot += v(a, d) * v(b, d);
    na += v(a, d) * v(a, d);
    nb += v(b, d) * v(b, d);
  }
  return 1.0 - std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

inline double vec_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    dot += a[d] * b[d];
    na += a[d] * a[d];
    nb += b[d] * b[d];
  }
  return 1.0 - std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

/// Atom -> distinct words, keeping atoms with at least `min_size` words.
inline std::map<int, std::vector<std::int32_t>> modules(const std::vector<std::int32_t>& ids,
                                                        const std::vector<std::int32_t>& atom_of, int min_size) {
  std::map<int, std::vector<std::int32_t>> m;
  for (auto w : std::set<std::int32_t>(ids.begin(), ids.end()))
    if (atom_of[static_cast<std::size_t>(w)] >= 0) m[atom_of[static_cast<std::size_t>(w)]].push_back(w);
  for (auto it = m.begin(); it != m.end();) it = static_cast<int>(it->second.size()) < min_size ? m.erase(it) : std::next(it);
  return m;
}

inline std::vector<double> unit_centroid(const Mat& v, const std::vector<std::int32_t>& members) {
  std::vector<double> c(static_cast<std::size_t>(v.cols()), 0.0);
  for (auto w : members) {
    double norm = 0;
    for (Eigen::Index d = 0; d < v.cols(); ++d) norm += v(w, d) * v(w, d);
    norm = std::sqrt(norm);
    for (Eigen::Index d = 0; d < v.cols(); ++d) c[static_cast<std::size_t>(d)] += v(w, d) / norm;
  }
  for (auto& x : c) x /= static_cast<double>(members.size());
  return c;
}

inline double local(const std::vector<std::int32_t>& ids, const Mat& v, const std::vector<std::int32_t>& atom_of) {
  double s = 0;
  int n = 0;
  for (const auto& [a, m] : modules(ids, atom_of, 2))
    for (std::size_t i = 0; i < m.size(); ++i)
      for (std::size_t j = i + 1; j < m.size(); ++j) {
        s += cos_dist(v, m[i], m[j]);
        ++n;
      }
  return n ? s / n : 0.0;
}

inline double global(const std::vector<std::int32_t>& ids, const Mat& v, const std::vector<std::int32_t>& atom_of) {
  std::vector<std::vector<double>> cs;
  for (const auto& [a, m] : modules(ids, atom_of, 2)) {
    auto c = unit_centroid(v, m);
    double norm = 0;
    for (double x : c) norm += x * x;
    if (norm > 0) cs.push_back(c);
  }
  double s = 0;
  int n = 0;
  for (std::size_t i = 0; i < cs.size(); ++i)
    for (std::size_t j = i + 1; j < cs.size(); ++j) {
      s += vec_dist(cs[i], cs[j]);
      ++n;
    }
  return n ? s / n : 0.0;
}

inline double tech_app(const std::vector<std::int32_t>& ids, const Mat& v, const std::vector<std::int32_t>& atom_of,
                       const std::vector<bool>& is_tech) {
  double s = 0;
  int n = 0;
  for (const auto& [a, m] : modules(ids, atom_of, 2))
    for (auto x : m)
      for (auto y : m)
        if (is_tech[static_cast<std::size_t>(x)] && !is_tech[static_cast<std::size_t>(y)]) {
          s += cos_dist(v, x, y);
          ++n;
        }
  return n ? s / n : 0.0;
}

inline double spread(const std::vector<std::int32_t>& ids, const Mat& v, const std::vector<std::int32_t>& atom_of) {
  double total = 0;
  int used = 0;
  for (const auto& [a, m] : modules(ids, atom_of, 2)) {
    const auto c = unit_centroid(v, m);
    double norm = 0;
    for (double x : c) norm += x * x;
    if (norm == 0) continue;
    double s = 0;
    for (auto w : m) {
      std::vector<double> row(static_cast<std::size_t>(v.cols()));
      for (Eigen::Index d = 0; d < v.cols(); ++d) row[static_cast<std::size_t>(d)] = v(w, d);
      s += vec_dist(row, c);
    }
    total += s / static_cast<double>(m.size());
    ++used;
  }
  return used ? total / used : 0.0;
}

}  // namespace oracle

/// Random company book for the measure oracles: words with random vectors and
/// atoms, companies of up to `max_tokens` ids with repeats.
struct MeasureBook {
  Mat vectors;
  recomb::Assignment assignment;
  std::vector<bool> is_tech;
  std::vector<std::vector<std::int32_t>> companies;
};

inline MeasureBook measure_book(std::mt19937_64& rng, int words, int atoms, int dims, int companies, int max_tokens) {
  MeasureBook b;
  b.vectors = random_mat(rng, words, dims);
  for (int w = 0; w < words; ++w) {
    b.assignment.atom.push_back(uniform_int(rng, 0, atoms - 1));
    b.assignment.score.push_back(0.0);
    b.is_tech.push_back(uniform(rng) < 0.4);
  }
  for (int c = 0; c < companies; ++c) {
    std::vector<std::int32_t> ids;
    for (int i = uniform_int(rng, 0, max_tokens); i > 0; --i) ids.push_back(uniform_int(rng, 0, words - 1));
    b.companies.push_back(ids);
  }
  return b;
}

inline std::unordered_map<std::int32_t, recomb::ElementKind> kind_map(const std::vector<bool>& is_tech) {
  std::unordered_map<std::int32_t, recomb::ElementKind> m;
  for (std::size_t w = 0; w < is_tech.size(); ++w)
    m[static_cast<std::int32_t>(w)] = is_tech[w] ? recomb::ElementKind::technology : recomb::ElementKind::application;
  return m;
}

/// Vocabulary "w0".."w{n-1}" with unit counts in every slice.
inline recomb::Vocabulary synthetic_vocab(std::int32_t n, int slices, int first_year = 2000) {
  std::vector<std::string> words;
  std::vector<int> labels;
  for (std::int32_t i = 0; i < n; ++i) words.push_back("w" + std::to_string(i));
  for (int t = 0; t < slices; ++t) labels.push_back(first_year + t);
  return recomb::Vocabulary(words, std::vector<std::int64_t>(static_cast<std::size_t>(n), slices),
                            std::vector<std::vector<std::int64_t>>(static_cast<std::size_t>(slices),
                                                                   std::vector<std::int64_t>(static_cast<std::size_t>(n), 1)),
                            std::vector<std::int64_t>(static_cast<std::size_t>(slices), n), labels);
}

/// Training settings for the planted fixtures: modest smoothing, light ridge.
inline recomb::TrainConfig planted_train_config(double tau = 1.0) {
  recomb::TrainConfig c;
  c.k = 8;
  c.lambda = 0.1;
  c.tau = tau;
  c.gamma = 1.0;
  c.sweeps = 60;
  c.tol = 1e-7;
  c.seed = 17;
  return c;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("recomb_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace testing
