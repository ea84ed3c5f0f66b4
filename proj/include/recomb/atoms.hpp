#pragma once

#include "recomb/kernels.hpp"
#include "recomb/sparse.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace recomb {

enum class AtomMethod { ksvd, kmeans };

AtomMethod parse_atom_method(std::string_view name);
std::string_view to_string(AtomMethod m);

struct AtomConfig {
  int atoms = 200;
  /// Nonzeros per sparse code (k-SVD only).
  int sparsity = 5;
  int iterations = 20;
  AtomMethod method = AtomMethod::ksvd;
  std::uint64_t seed = 1;

  void validate(std::int64_t usable_words) const;
};

struct AtomDictionary {
  int slice = 0;
  int year = 0;
  /// One unit-norm atom per row.
  Mat atoms;
  /// Per word: closest atom by cosine (kUnassigned for zero vectors) and that cosine.
  Assignment assignment;
  /// k-SVD: squared reconstruction error after each iteration.
  /// k-means: cosine distortion after each assignment step.
  std::vector<double> trace;

  int size() const { return static_cast<int>(atoms.rows()); }
  std::vector<std::int32_t> unassigned() const;

  /// Little-endian: magic "RCMBATM1", u32 version, i32 slice, i32 year,
  /// u32 K, u32 k, f64 atoms[K*k], u32 n, i32 atom[n], f64 score[n].
  void write_binary(std::ostream& out) const;
  static AtomDictionary read_binary(std::istream& in);
};

/// k-SVD on length-normalized word vectors: OMP sparse coding alternating with
/// rank-1 SVD updates of each atom over its support. Unused atoms are
/// reseeded from the worst-reconstructed word.
AtomDictionary ksvd_train(const Mat& vectors, const AtomConfig& cfg);

/// Spherical k-means with k-means++ seeding; empty clusters are reseeded from
/// the farthest word.
AtomDictionary kmeans_train(const Mat& vectors, const AtomConfig& cfg);

/// Dispatches on cfg.method.
AtomDictionary train_atoms(const Mat& vectors, const AtomConfig& cfg);

/// Argmax-cosine assignment, ties to the lowest atom index.
Assignment assign_words(const Mat& atoms, const Mat& vectors);

struct AtomMember {
  std::int32_t word = 0;
  double score = 0.0;
};

/// Per atom, up to top_m members ordered by score (ties by word id).
std::vector<std::vector<AtomMember>> atom_summary(const AtomDictionary& dict, int top_m);

/// year<TAB>atom_id<TAB>word<TAB>score for every assigned word, grouped by atom.
void write_atoms_tsv(std::ostream& out, const AtomDictionary& dict, const std::vector<std::string>& words);

}  // namespace recomb
