#include "recomb/embedding.hpp"

#include "recomb/kernels.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

namespace recomb {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void TrainConfig::validate() const {
  if (k < 1) throw ConfigError("train.k must be >= 1");
  if (sweeps < 1) throw ConfigError("train.sweeps must be >= 1");
  for (double v : {lambda, tau, gamma})
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("train weights must be finite and >= 0");
  if (!std::isfinite(tol) || tol < 0.0) throw ConfigError("train.tol must be finite and >= 0");
}

EmbeddingTensor::EmbeddingTensor(int slices, std::int32_t words, int dims, std::vector<int> years)
    : words_(words), dims_(dims), years_(std::move(years)) {
  if (slices < 1 || words < 1 || dims < 1) throw Error("embedding dimensions must be positive");
  if (years_.empty()) {
    years_.resize(static_cast<std::size_t>(slices));
    std::iota(years_.begin(), years_.end(), 0);
  }
  if (static_cast<int>(years_.size()) != slices) throw Error("embedding: one year label per slice required");
  data_.assign(static_cast<std::size_t>(slices), Mat::Zero(words, dims));
}

int EmbeddingTensor::slice_for_year(int year) const {
  const auto it = std::find(years_.begin(), years_.end(), year);
  return it == years_.end() ? -1 : static_cast<int>(it - years_.begin());
}

bool EmbeddingTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](const Mat& m) { return m.allFinite(); });
}

namespace {

constexpr char kMagic[8] = {'R', 'C', 'M', 'B', 'E', 'M', 'B', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error("embedding file truncated");
  return v;
}

double residual_sq(const CsrMatrix& y, const Mat& u, const Mat& w) {
  return y.n() <= kDenseResidualMaxWords ? kernels::residual_sq_dense(y, u, w)
                                         : kernels::residual_sq_gram(y, u, w);
}

void check_shapes(std::span<const PpmiMatrix> y, const EmbeddingTensor& u) {
  if (static_cast<int>(y.size()) != u.slices())
    throw Error(fmt::format("dimension mismatch: {} PPMI slices vs {} embedding slices", y.size(), u.slices()));
  for (const auto& m : y)
    if (m.values.n() != u.words())
      throw Error(fmt::format("dimension mismatch: PPMI slice {} has n={}, embeddings n={}", m.slice,
                              m.values.n(), u.words()));
}

}  // namespace

void EmbeddingTensor::write_binary(std::ostream& out) const {
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(slices()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(words_));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dims_));
  for (int y : years_) put<std::int32_t>(out, y);
  std::vector<float> row(static_cast<std::size_t>(dims_));
  for (const auto& m : data_)
    for (std::int32_t i = 0; i < words_; ++i) {
      for (int d = 0; d < dims_; ++d) row[d] = static_cast<float>(m(i, d));
      out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
}

EmbeddingTensor EmbeddingTensor::read_binary(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw Error("not an embedding file (bad magic)");
  if (get<std::uint32_t>(in) != kVersion) throw Error("unsupported embedding file version");
  const auto T = get<std::uint32_t>(in);
  const auto n = get<std::uint32_t>(in);
  const auto k = get<std::uint32_t>(in);
  std::vector<int> years;
  for (std::uint32_t t = 0; t < T; ++t) years.push_back(get<std::int32_t>(in));
  EmbeddingTensor e(static_cast<int>(T), static_cast<std::int32_t>(n), static_cast<int>(k), std::move(years));
  std::vector<float> row(k);
  for (std::uint32_t t = 0; t < T; ++t)
    for (std::uint32_t i = 0; i < n; ++i) {
      if (!in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(k * sizeof(float))))
        throw Error("embedding file truncated");
      for (std::uint32_t d = 0; d < k; ++d) e.slice(static_cast<int>(t))(i, d) = row[d];
    }
  return e;
}

void EmbeddingTensor::write_tsv(std::ostream& out, const std::vector<std::string>& words) const {
  if (static_cast<std::int32_t>(words.size()) != words_) throw Error("write_tsv: word list size mismatch");
  for (int t = 0; t < slices(); ++t)
    for (std::int32_t i = 0; i < words_; ++i) {
      out << words[i] << '\t' << years_[t];
      for (int d = 0; d < dims_; ++d) out << '\t' << fmt::format("{}", static_cast<float>(data_[t](i, d)));
      out << '\n';
    }
}

double objective_value(std::span<const PpmiMatrix> y, const EmbeddingTensor& u, const TrainConfig& cfg) {
  check_shapes(y, u);
  double fit = 0.0, ridge = 0.0, smooth = 0.0;
  for (int t = 0; t < u.slices(); ++t) {
    fit += residual_sq(y[t].values, u.slice(t), u.slice(t));
    ridge += u.slice(t).squaredNorm();
    if (t > 0) smooth += (u.slice(t - 1) - u.slice(t)).squaredNorm();
  }
  return 0.5 * fit + 0.5 * cfg.lambda * ridge + 0.5 * cfg.tau * smooth;
}

double splitting_objective(std::span<const PpmiMatrix> y, const EmbeddingTensor& u, const EmbeddingTensor& w,
                           const TrainConfig& cfg) {
  check_shapes(y, u);
  check_shapes(y, w);
  double fit = 0.0, couple = 0.0, ridge = 0.0, smooth = 0.0;
  for (int t = 0; t < u.slices(); ++t) {
    fit += residual_sq(y[t].values, u.slice(t), w.slice(t));
    couple += (u.slice(t) - w.slice(t)).squaredNorm();
    ridge += u.slice(t).squaredNorm() + w.slice(t).squaredNorm();
    if (t > 0)
      smooth += (u.slice(t - 1) - u.slice(t)).squaredNorm() + (w.slice(t - 1) - w.slice(t)).squaredNorm();
  }
  return 0.5 * fit + 0.5 * cfg.gamma * couple + 0.5 * cfg.lambda * ridge + 0.5 * cfg.tau * smooth;
}

EmbeddingTensor init_embeddings(std::int32_t n, int k, int slices, std::uint64_t seed, std::vector<int> years) {
  EmbeddingTensor e(slices, n, k, std::move(years));
  std::mt19937_64 rng(seed);
  const double half = 0.5 / static_cast<double>(k);
  Mat draw(n, k);
  for (std::int32_t i = 0; i < n; ++i)
    for (int d = 0; d < k; ++d) {
      const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      draw(i, d) = (2.0 * unit - 1.0) * half;
    }
  for (int t = 0; t < slices; ++t) e.slice(t) = draw;
  return e;
}

Mat solve_slice(const CsrMatrix& y, const Mat& w, const Mat* prev, const Mat* next, const TrainConfig& cfg) {
  const auto k = w.cols();
  Mat rhs = kernels::spmm(y, w);
  rhs += cfg.gamma * w;
  int neighbors = 0;
  for (const Mat* nb : {prev, next})
    if (nb != nullptr) {
      rhs += cfg.tau * *nb;
      ++neighbors;
    }
  Mat system = w.transpose() * w;
  system.diagonal().array() += cfg.gamma + cfg.lambda + neighbors * cfg.tau;
  if (!system.allFinite() || !rhs.allFinite())
    return Mat::Constant(w.rows(), k, std::numeric_limits<double>::quiet_NaN());
  const Eigen::LLT<Mat> llt(system);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14))
    throw Error(fmt::format("singular {}x{} slice system; use a nonzero lambda", k, k));
  return llt.solve(rhs.transpose()).transpose();
}

TrainResult train(std::span<const PpmiMatrix> y, const TrainConfig& cfg, std::vector<int> years) {
  cfg.validate();
  if (y.empty()) throw Error("train: no slices");
  const std::int32_t n = y.front().values.n();
  const int T = static_cast<int>(y.size());
  for (const auto& m : y)
    if (m.values.n() != n) throw Error("train: all slices must share one vocabulary");

  EmbeddingTensor u = init_embeddings(n, cfg.k, T, cfg.seed, std::move(years));
  EmbeddingTensor w = u;

  // Slices of one parity share no temporal edge, so each half-step is an exact
  // block minimization and the splitting objective cannot increase.
  auto half_step = [&](EmbeddingTensor& target, const EmbeddingTensor& partner) {
    for (int parity = 0; parity < 2; ++parity)
      for (int t = parity; t < T; t += 2) {
        const Mat* prev = t > 0 ? &target.slice(t - 1) : nullptr;
        const Mat* next = t + 1 < T ? &target.slice(t + 1) : nullptr;
        target.slice(t) = solve_slice(y[t].values, partner.slice(t), prev, next, cfg);
      }
  };

  auto collapse = [&](const EmbeddingTensor& a, const EmbeddingTensor& b) {
    EmbeddingTensor out = a;
    for (int t = 0; t < T; ++t) out.slice(t) = 0.5 * (a.slice(t) + b.slice(t));
    return out;
  };

  TrainResult result;
  result.trace.push_back(splitting_objective(y, u, w, cfg));
  for (int sweep = 1; sweep <= cfg.sweeps; ++sweep) {
    EmbeddingTensor u_prev = u, w_prev = w;
    auto diverged = [&] {
      return DivergenceError(fmt::format("training diverged at sweep {}", sweep), collapse(u_prev, w_prev), sweep);
    };
    half_step(u, w);
    if (!u.all_finite()) throw diverged();
    half_step(w, u);
    const double obj = splitting_objective(y, u, w, cfg);
    if (!std::isfinite(obj) || !w.all_finite()) throw diverged();
    const double before = result.trace.back();
    result.trace.push_back(obj);
    result.sweeps_run = sweep;
    if (std::abs(before - obj) <= cfg.tol * std::max(std::abs(before), 1e-300)) {
      result.converged = true;
      break;
    }
  }
  result.embeddings = collapse(u, w);
  return result;
}

double cosine(const Eigen::Ref<const Vec>& a, const Eigen::Ref<const Vec>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

std::vector<Neighbor> top_by_cosine(const Mat& vectors, const Vec& query, int n,
                                    std::span<const std::int32_t> exclude) {
  const double qn = query.norm();
  if (qn == 0.0) throw Error("zero-norm query vector");
  const auto rows = vectors.rows();
  std::vector<double> sim(static_cast<std::size_t>(rows), 0.0);
  std::vector<char> valid(static_cast<std::size_t>(rows), 0);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double norm = vectors.row(i).norm();
    if (norm == 0.0) continue;
    sim[i] = vectors.row(i).dot(query) / (norm * qn);
    valid[i] = 1;
  }
  std::vector<Neighbor> cand;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto id = static_cast<std::int32_t>(i);
    if (!valid[i] || std::find(exclude.begin(), exclude.end(), id) != exclude.end()) continue;
    cand.push_back({id, sim[i]});
  }
  const auto keep = std::min<std::size_t>(cand.size(), static_cast<std::size_t>(std::max(n, 0)));
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
                    });
  cand.resize(keep);
  return cand;
}

std::vector<Neighbor> nearest_neighbors(const EmbeddingTensor& u, int slice, std::int32_t word, int n,
                                        bool exclude_self) {
  if (slice < 0 || slice >= u.slices()) throw Error(fmt::format("slice {} out of range", slice));
  if (word < 0 || word >= u.words()) throw Error(fmt::format("word id {} out of range", word));
  const Vec q = u.slice(slice).row(word).transpose();
  if (q.norm() == 0.0) throw Error("untrained/degenerate word (zero-norm vector)");
  const std::int32_t self[] = {word};
  return top_by_cosine(u.slice(slice), q, n, exclude_self ? std::span<const std::int32_t>(self)
                                                         : std::span<const std::int32_t>());
}

}  // namespace recomb
