#pragma once

#include "recomb/common.hpp"
#include "recomb/corpus.hpp"
#include "recomb/sparse.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace recomb {

struct TrainConfig {
  int k = 50;
  double lambda = 10.0;
  double tau = 50.0;
  /// Coupling between the two factor copies U and W.
  double gamma = 500.0;
  int sweeps = 30;
  std::uint64_t seed = 1;
  /// Stop once the relative change of the splitting objective drops below this.
  double tol = 1e-4;

  void validate() const;
};

/// T slices of n x k word vectors sharing one vocabulary.
class EmbeddingTensor {
 public:
  EmbeddingTensor() = default;
  EmbeddingTensor(int slices, std::int32_t words, int dims, std::vector<int> years = {});

  int slices() const { return static_cast<int>(data_.size()); }
  std::int32_t words() const { return words_; }
  int dims() const { return dims_; }
  const std::vector<int>& years() const { return years_; }
  /// Slice whose year label is `year`, or -1.
  int slice_for_year(int year) const;

  Mat& slice(int t) { return data_.at(static_cast<std::size_t>(t)); }
  const Mat& slice(int t) const { return data_.at(static_cast<std::size_t>(t)); }

  bool all_finite() const;

  /// Little-endian: magic "RCMBEMB1", u32 version, u32 T, u32 n, u32 k,
  /// i32 years[T], then float32 values ordered slice, word, dim.
  void write_binary(std::ostream& out) const;
  static EmbeddingTensor read_binary(std::istream& in);
  /// word<TAB>year<TAB>v1..vk
  void write_tsv(std::ostream& out, const std::vector<std::string>& words) const;

 private:
  std::int32_t words_ = 0;
  int dims_ = 0;
  std::vector<int> years_;
  std::vector<Mat> data_;
};

/// Thrown when training produces a non-finite objective. Carries the last
/// iterate whose objective was finite.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, EmbeddingTensor last_finite, int sweep)
      : Error(what), last_finite_(std::move(last_finite)), sweep_(sweep) {}
  const EmbeddingTensor& last_finite() const { return last_finite_; }
  int sweep() const { return sweep_; }

 private:
  EmbeddingTensor last_finite_;
  int sweep_;
};

/// Slices with n at or below this evaluate residuals densely.
inline constexpr std::int32_t kDenseResidualMaxWords = 2000;

/// 1/2 sum_t ||Y(t) - U(t)U(t)^T||^2 + lambda/2 sum_t ||U(t)||^2
///   + tau/2 sum_{t>=2} ||U(t-1) - U(t)||^2
double objective_value(std::span<const PpmiMatrix> y, const EmbeddingTensor& u, const TrainConfig& cfg);

/// The objective the solver descends, with the factor split into U and W:
/// 1/2 sum ||Y - U W^T||^2 + gamma/2 sum ||U - W||^2 + lambda/2 sum (||U||^2 + ||W||^2)
///   + tau/2 sum (||dU||^2 + ||dW||^2)
double splitting_objective(std::span<const PpmiMatrix> y, const EmbeddingTensor& u, const EmbeddingTensor& w,
                           const TrainConfig& cfg);

/// Uniform in [-0.5/k, 0.5/k), one draw copied into every slice.
EmbeddingTensor init_embeddings(std::int32_t n, int k, int slices, std::uint64_t seed, std::vector<int> years = {});

/// Exact minimizer of the splitting objective over one slice's factor with
/// everything else fixed:
///   (Y W + gamma W + tau (prev + next)) (W^T W + (gamma + lambda + b tau) I)^-1
/// where b counts the neighbors passed (nullptr = absent).
/// Overflowing inputs give an all-NaN result.
Mat solve_slice(const CsrMatrix& y, const Mat& w, const Mat* prev, const Mat* next, const TrainConfig& cfg);

struct TrainResult {
  EmbeddingTensor embeddings;
  /// Splitting objective before the first sweep and after each sweep.
  std::vector<double> trace;
  int sweeps_run = 0;
  bool converged = false;
};

TrainResult train(std::span<const PpmiMatrix> y, const TrainConfig& cfg, std::vector<int> years = {});

struct Neighbor {
  std::int32_t id = 0;
  double similarity = 0.0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Top-n rows of `vectors` by cosine to `query`; ties by lower id. Zero rows
/// and ids in `exclude` are skipped.
std::vector<Neighbor> top_by_cosine(const Mat& vectors, const Vec& query, int n,
                                    std::span<const std::int32_t> exclude = {});

std::vector<Neighbor> nearest_neighbors(const EmbeddingTensor& u, int slice, std::int32_t word, int n,
                                        bool exclude_self);

double cosine(const Eigen::Ref<const Vec>& a, const Eigen::Ref<const Vec>& b);

}  // namespace recomb
