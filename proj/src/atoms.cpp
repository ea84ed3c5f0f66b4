#include "recomb/atoms.hpp"

#include "recomb/common.hpp"

#include <fmt/format.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

namespace recomb {

AtomMethod parse_atom_method(std::string_view name) {
  if (name == "ksvd") return AtomMethod::ksvd;
  if (name == "kmeans") return AtomMethod::kmeans;
  throw ConfigError(fmt::format("unknown atom method '{}'", name));
}

std::string_view to_string(AtomMethod m) { return m == AtomMethod::ksvd ? "ksvd" : "kmeans"; }

void AtomConfig::validate(std::int64_t usable_words) const {
  if (atoms < 1) throw ConfigError("atoms.K must be >= 1");
  if (sparsity < 1 || sparsity > atoms) throw ConfigError("atoms.sparsity must satisfy 1 <= s <= K");
  if (iterations < 1) throw ConfigError("atoms.iterations must be >= 1");
  if (atoms > usable_words)
    throw Error(fmt::format("K={} exceeds the number of nonzero word vectors ({})", atoms, usable_words));
}

std::vector<std::int32_t> AtomDictionary::unassigned() const {
  std::vector<std::int32_t> out;
  for (std::size_t i = 0; i < assignment.atom.size(); ++i)
    if (assignment.atom[i] == kUnassigned) out.push_back(static_cast<std::int32_t>(i));
  return out;
}

namespace {

struct Normalized {
  Mat rows;
  std::vector<std::int32_t> source;  // row -> original word id
};

Normalized normalized_nonzero(const Mat& vectors) {
  if (!vectors.allFinite()) throw Error("atom training input contains non-finite values");
  Normalized out;
  for (Eigen::Index i = 0; i < vectors.rows(); ++i)
    if (vectors.row(i).norm() > 0.0) out.source.push_back(static_cast<std::int32_t>(i));
  out.rows.resize(static_cast<Eigen::Index>(out.source.size()), vectors.cols());
  for (std::size_t r = 0; r < out.source.size(); ++r) {
    const auto row = vectors.row(out.source[r]);
    out.rows.row(static_cast<Eigen::Index>(r)) = row / row.norm();
  }
  return out;
}

std::vector<std::int32_t> sample_distinct(std::int64_t n, int count, std::mt19937_64& rng) {
  std::vector<std::int32_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < count; ++i) {
    const auto span = static_cast<std::uint64_t>(n - i);
    const auto j = static_cast<std::size_t>(i + static_cast<std::int64_t>(rng() % span));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

Mat residuals(const Mat& x, const Mat& dict, const SparseCodes& codes) {
  Mat r = x;
  const int s = codes.sparsity;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (int j = 0; j < s; ++j) {
      const auto a = codes.atom[static_cast<std::size_t>(i) * s + j];
      if (a >= 0) r.row(i) -= codes.coef[static_cast<std::size_t>(i) * s + j] * dict.row(a);
    }
  return r;
}

}  // namespace

AtomDictionary ksvd_train(const Mat& vectors, const AtomConfig& cfg) {
  const Normalized data = normalized_nonzero(vectors);
  const Mat& x = data.rows;
  cfg.validate(x.rows());
  const auto n = x.rows();
  const auto dims = x.cols();
  const int K = cfg.atoms;
  const int s = cfg.sparsity;

  std::mt19937_64 rng(cfg.seed);
  Mat dict(K, dims);
  {
    const auto pick = sample_distinct(n, K, rng);
    for (int a = 0; a < K; ++a) dict.row(a) = x.row(pick[static_cast<std::size_t>(a)]);
  }

  AtomDictionary out;
  SparseCodes codes;
  for (int it = 0; it < cfg.iterations; ++it) {
    codes = kernels::sparse_code(dict, x, s, it == 0 ? nullptr : &codes);
    Mat r = residuals(x, dict, codes);

    // Support of each atom as (signal, slot) pairs.
    std::vector<std::vector<std::pair<Eigen::Index, int>>> users(static_cast<std::size_t>(K));
    for (Eigen::Index i = 0; i < n; ++i)
      for (int j = 0; j < s; ++j) {
        const auto a = codes.atom[static_cast<std::size_t>(i) * s + j];
        if (a >= 0) users[static_cast<std::size_t>(a)].push_back({i, j});
      }

    std::vector<char> used_for_reseed(static_cast<std::size_t>(n), 0);
    for (int a = 0; a < K; ++a) {
      const auto& sup = users[static_cast<std::size_t>(a)];
      if (sup.empty()) {
        Eigen::Index worst = -1;
        double worst_err = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (used_for_reseed[i]) continue;
          const double e = r.row(i).squaredNorm();
          if (e > worst_err) {
            worst_err = e;
            worst = i;
          }
        }
        if (worst >= 0) {
          used_for_reseed[worst] = 1;
          dict.row(a) = x.row(worst);
        }
        continue;
      }

      const auto m = static_cast<Eigen::Index>(sup.size());
      Mat e(dims, m);
      for (Eigen::Index c = 0; c < m; ++c) {
        const auto [i, slot] = sup[static_cast<std::size_t>(c)];
        const double g = codes.coef[static_cast<std::size_t>(i) * s + slot];
        e.col(c) = r.row(i).transpose() + g * dict.row(a).transpose();
      }
      const Mat scatter = e * e.transpose();
      Eigen::SelfAdjointEigenSolver<Mat> eig(scatter);
      Vec dir = eig.eigenvectors().col(dims - 1);
      if (!(dir.norm() > 0.0) || !dir.allFinite()) continue;
      dir.normalize();
      Vec g = e.transpose() * dir;
      if (g.sum() < 0.0) {
        dir = -dir;
        g = -g;
      }
      dict.row(a) = dir.transpose();
      for (Eigen::Index c = 0; c < m; ++c) {
        const auto [i, slot] = sup[static_cast<std::size_t>(c)];
        codes.coef[static_cast<std::size_t>(i) * s + slot] = g(c);
        r.row(i) = e.col(c).transpose() - g(c) * dir.transpose();
      }
    }
    for (int a = 0; a < K; ++a) dict.row(a).normalize();
    out.trace.push_back(residuals(x, dict, codes).squaredNorm());
  }

  out.atoms = dict;
  out.assignment = assign_words(dict, vectors);
  return out;
}

AtomDictionary kmeans_train(const Mat& vectors, const AtomConfig& cfg) {
  const Normalized data = normalized_nonzero(vectors);
  const Mat& x = data.rows;
  cfg.validate(x.rows());
  const auto n = x.rows();
  const int K = cfg.atoms;

  std::mt19937_64 rng(cfg.seed);
  Mat centers(K, x.cols());
  {
    std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    std::vector<char> chosen(static_cast<std::size_t>(n), 0);
    auto take = [&](Eigen::Index idx, int slot) {
      chosen[idx] = 1;
      centers.row(slot) = x.row(idx);
      for (Eigen::Index i = 0; i < n; ++i)
        dist[i] = std::min(dist[i], std::max(0.0, 2.0 - 2.0 * x.row(i).dot(x.row(idx))));
    };
    take(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n)), 0);
    for (int c = 1; c < K; ++c) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!chosen[i]) total += dist[i];
      Eigen::Index pick = -1;
      if (total > 0.0) {
        const double target = static_cast<double>(rng() >> 11) * 0x1.0p-53 * total;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (chosen[i] || dist[i] == 0.0) continue;
          acc += dist[i];
          pick = i;
          if (acc > target) break;
        }
      }
      if (pick < 0)
        for (Eigen::Index i = 0; i < n && pick < 0; ++i)
          if (!chosen[i]) pick = i;
      take(pick, c);
    }
  }

  AtomDictionary out;
  Assignment assign = kernels::cosine_argmax(centers, x);
  for (int it = 0; it < cfg.iterations; ++it) {
    double distortion = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) distortion += 1.0 - assign.score[i];
    out.trace.push_back(distortion);

    Mat sums = Mat::Zero(K, x.cols());
    std::vector<std::int64_t> sizes(static_cast<std::size_t>(K), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign.atom[i]) += x.row(i);
      ++sizes[static_cast<std::size_t>(assign.atom[i])];
    }
    std::vector<char> reseeded(static_cast<std::size_t>(n), 0);
    for (int c = 0; c < K; ++c) {
      if (sizes[static_cast<std::size_t>(c)] == 0) {
        Eigen::Index far = -1;
        double worst = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i)
          if (!reseeded[i] && assign.score[i] < worst) {
            worst = assign.score[i];
            far = i;
          }
        if (far >= 0) {
          reseeded[far] = 1;
          centers.row(c) = x.row(far);
        }
        continue;
      }
      const double norm = sums.row(c).norm();
      if (norm > 0.0) centers.row(c) = sums.row(c) / norm;
    }

    Assignment next = kernels::cosine_argmax(centers, x);
    const bool stable = next.atom == assign.atom;
    assign = std::move(next);
    if (stable) break;
  }
  double distortion = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) distortion += 1.0 - assign.score[i];
  out.trace.push_back(distortion);

  out.atoms = centers;
  out.assignment = assign_words(centers, vectors);
  return out;
}

AtomDictionary train_atoms(const Mat& vectors, const AtomConfig& cfg) {
  return cfg.method == AtomMethod::ksvd ? ksvd_train(vectors, cfg) : kmeans_train(vectors, cfg);
}

Assignment assign_words(const Mat& atoms, const Mat& vectors) { return kernels::cosine_argmax(atoms, vectors); }

std::vector<std::vector<AtomMember>> atom_summary(const AtomDictionary& dict, int top_m) {
  std::vector<std::vector<AtomMember>> out(static_cast<std::size_t>(dict.size()));
  const auto& as = dict.assignment;
  for (std::size_t w = 0; w < as.atom.size(); ++w)
    if (as.atom[w] != kUnassigned)
      out[static_cast<std::size_t>(as.atom[w])].push_back({static_cast<std::int32_t>(w), as.score[w]});
  for (auto& members : out) {
    std::sort(members.begin(), members.end(), [](const AtomMember& a, const AtomMember& b) {
      return a.score != b.score ? a.score > b.score : a.word < b.word;
    });
    if (top_m >= 0 && members.size() > static_cast<std::size_t>(top_m)) members.resize(static_cast<std::size_t>(top_m));
  }
  return out;
}

void write_atoms_tsv(std::ostream& out, const AtomDictionary& dict, const std::vector<std::string>& words) {
  const auto summary = atom_summary(dict, -1);
  for (std::size_t a = 0; a < summary.size(); ++a)
    for (const auto& m : summary[a])
      out << dict.year << '\t' << a << '\t' << words.at(static_cast<std::size_t>(m.word)) << '\t'
          << fmt::format("{}", m.score) << '\n';
}

namespace {

constexpr char kAtomMagic[8] = {'R', 'C', 'M', 'B', 'A', 'T', 'M', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error("atom file truncated");
  return v;
}

}  // namespace

void AtomDictionary::write_binary(std::ostream& out) const {
  out.write(kAtomMagic, sizeof kAtomMagic);
  put<std::uint32_t>(out, 1);
  put<std::int32_t>(out, slice);
  put<std::int32_t>(out, year);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(atoms.rows()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(atoms.cols()));
  for (Eigen::Index a = 0; a < atoms.rows(); ++a)
    for (Eigen::Index d = 0; d < atoms.cols(); ++d) put<double>(out, atoms(a, d));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(assignment.atom.size()));
  for (auto a : assignment.atom) put<std::int32_t>(out, a);
  for (auto s : assignment.score) put<double>(out, s);
}

AtomDictionary AtomDictionary::read_binary(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kAtomMagic, sizeof magic) != 0)
    throw Error("not an atom dictionary file (bad magic)");
  if (get<std::uint32_t>(in) != 1) throw Error("unsupported atom file version");
  AtomDictionary d;
  d.slice = get<std::int32_t>(in);
  d.year = get<std::int32_t>(in);
  const auto K = get<std::uint32_t>(in);
  const auto k = get<std::uint32_t>(in);
  d.atoms.resize(K, k);
  for (std::uint32_t a = 0; a < K; ++a)
    for (std::uint32_t j = 0; j < k; ++j) d.atoms(a, j) = get<double>(in);
  const auto n = get<std::uint32_t>(in);
  d.assignment.atom.resize(n);
  d.assignment.score.resize(n);
  for (auto& a : d.assignment.atom) a = get<std::int32_t>(in);
  for (auto& s : d.assignment.score) s = get<double>(in);
  return d;
}

}  // namespace recomb
