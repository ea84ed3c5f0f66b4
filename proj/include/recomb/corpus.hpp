#pragma once

#include "recomb/kernels.hpp"
#include "recomb/sparse.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace recomb {

enum class Source { news, patent, other };

/// Unknown or empty names map to `other`.
Source parse_source(std::string_view name);
std::string_view to_string(Source s);

struct DocumentRecord {
  std::string id;
  int year = 0;
  Source source = Source::other;
  std::string text;
};

/// One JSON object per line: {"id","year","source","text"}. Blank lines are
/// ignored; malformed lines throw with the line number.
std::vector<DocumentRecord> read_documents(std::istream& in);

struct TokenRules {
  bool lowercase = true;
  bool strip_punctuation = true;
  bool strip_numbers = false;
  std::unordered_set<std::string> stopwords = default_stopwords();
  /// Adjacent token pairs joined as "first_second".
  std::vector<std::pair<std::string, std::string>> bigrams;

  static std::unordered_set<std::string> default_stopwords();
};

std::vector<std::string> tokenize(std::string_view text, const TokenRules& rules);

/// Maps calendar years to slice indices. Slice t covers
/// [year_min + t*width, year_min + (t+1)*width - 1].
struct SliceSpec {
  int year_min = 0;
  int year_max = 0;
  int years_per_slice = 1;

  int n_slices() const;
  /// -1 when the year is outside [year_min, year_max].
  int slice_of(int year) const;
  int label(int slice) const { return year_min + slice * years_per_slice; }
  void validate() const;
};

struct SourceWeights {
  double news = 1.0;
  double patent = 1.0;
  double other = 1.0;
  double of(Source s) const;
};

struct TokenizedDoc {
  std::int32_t slice = 0;
  Source source = Source::other;
  std::vector<std::string> tokens;
};

struct TokenizedCorpus {
  SliceSpec slices;
  std::vector<TokenizedDoc> docs;
  std::size_t skipped_out_of_range = 0;
  std::size_t skipped_empty = 0;
};

TokenizedCorpus tokenize_corpus(std::span<const DocumentRecord> docs, const TokenRules& rules,
                                const SliceSpec& slices);

class Vocabulary {
 public:
  Vocabulary() = default;
  /// `words` must already be in id order; `slice_counts[t][id]`.
  Vocabulary(std::vector<std::string> words, std::vector<std::int64_t> global,
             std::vector<std::vector<std::int64_t>> slice_counts, std::vector<std::int64_t> slice_totals,
             std::vector<int> slice_labels);

  std::int32_t size() const { return static_cast<std::int32_t>(words_.size()); }
  int n_slices() const { return static_cast<int>(slice_totals_.size()); }
  std::optional<std::int32_t> id(std::string_view word) const;
  const std::string& word(std::int32_t id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }
  std::int64_t global_count(std::int32_t id) const { return global_.at(id); }
  std::int64_t slice_count(int slice, std::int32_t id) const { return slice_counts_.at(slice).at(id); }
  /// Tokens in the slice, including ones that did not survive min_count.
  std::int64_t slice_total(int slice) const { return slice_totals_.at(slice); }
  const std::vector<int>& slice_labels() const { return slice_labels_; }

  void write_tsv(std::ostream& out) const;
  static Vocabulary read_tsv(std::istream& in);

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::vector<std::string> words_;
  std::vector<std::int64_t> global_;
  std::vector<std::vector<std::int64_t>> slice_counts_;
  std::vector<std::int64_t> slice_totals_;
  std::vector<int> slice_labels_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Keeps tokens reaching min_count in at least one slice; ids by descending
/// global count, ties broken lexicographically.
Vocabulary build_vocab(const TokenizedCorpus& corpus, int min_count);

struct SliceCooccurrence {
  int slice = 0;
  CsrMatrix counts;
  std::vector<double> marginals;
  double total = 0.0;
};

std::vector<EncodedDoc> encode_corpus(const TokenizedCorpus& corpus, const Vocabulary& vocab,
                                      const SourceWeights& weights);

std::vector<SliceCooccurrence> count_cooccurrence(const TokenizedCorpus& corpus, const Vocabulary& vocab,
                                                  const WindowSpec& window, const SourceWeights& weights);

struct PpmiMatrix {
  int slice = 0;
  CsrMatrix values;
};

/// max(ln(#(w,c) D / (#(w) #(c))) - ln(shift), 0); clipped entries are not stored.
PpmiMatrix build_ppmi(const SliceCooccurrence& counts, double shift = 1.0);

/// Header line "t n nnz", then one "i j value" line per stored entry with i <= j.
void write_ppmi(std::ostream& out, const PpmiMatrix& m);
PpmiMatrix read_ppmi(std::istream& in);

}  // namespace recomb
