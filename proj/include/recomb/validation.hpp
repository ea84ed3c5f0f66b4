#pragma once

// Embedding sanity checks: semantic axes, neighbor drift across slices and
// analogy queries. Everything here reads a frozen EmbeddingTensor.

#include "recomb/corpus.hpp"
#include "recomb/embedding.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace recomb {

struct SemanticAxis {
  std::string name;
  int slice = 0;
  std::vector<std::string> positive;
  std::vector<std::string> negative;
  /// Seeds that were not in the vocabulary and were skipped.
  std::vector<std::string> dropped;
  Vec vector;
};

/// normalize(mean(positive) - mean(negative)) on one slice.
SemanticAxis build_axis(const EmbeddingTensor& u, const Vocabulary& vocab, int slice, std::string name,
                        const std::vector<std::string>& positive, const std::vector<std::string>& negative);

/// Cosine between `v` and the axis; absent for a zero vector.
std::optional<double> project_on_axis(const Eigen::Ref<const Vec>& v, const SemanticAxis& axis);
std::optional<double> project_word(const EmbeddingTensor& u, const Vocabulary& vocab, const std::string& word,
                                   const SemanticAxis& axis);

struct DriftSlice {
  int year = 0;
  std::vector<Neighbor> neighbors;
};

struct DriftReport {
  std::string word;
  int n = 0;
  std::vector<DriftSlice> slices;
};

/// Up to `limit` vocabulary words closest to `word` by edit distance.
std::vector<std::string> nearest_spellings(const Vocabulary& vocab, const std::string& word, int limit = 5);

DriftReport drift_trace(const EmbeddingTensor& u, const Vocabulary& vocab, const std::string& word, int n);

/// year<TAB>rank<TAB>neighbor<TAB>similarity
void write_drift_tsv(std::ostream& out, const DriftReport& r, const Vocabulary& vocab);
void write_drift_json(std::ostream& out, const DriftReport& r, const Vocabulary& vocab);
/// slice,word,neighbor,rank,similarity
void write_drift_csv(std::ostream& out, const std::vector<DriftReport>& reports, const Vocabulary& vocab,
                     bool header = true);

/// Top-n by cosine to normalize(a) - normalize(b) + normalize(c), excluding
/// {a, b, c} when `exclude_operands` is set.
std::vector<Neighbor> analogy_query(const EmbeddingTensor& u, const Vocabulary& vocab, int slice,
                                    const std::string& a, const std::string& b, const std::string& c, int n,
                                    bool exclude_operands = true);

}  // namespace recomb
