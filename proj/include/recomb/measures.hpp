#pragma once

// Per-company recombination measures computed against one embedding slice and
// its atom assignment.
//
// Duplicate policy: description_centroid counts repeated tokens; every
// atom-based measure works on the set of distinct in-vocabulary words.
// All distance measures use unit-normalized word vectors, so rescaling any
// word vector leaves them unchanged.

#include "recomb/corpus.hpp"
#include "recomb/kernels.hpp"
#include "recomb/sparse.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace recomb {

/// Degenerate-case markers attached to measure values and panel rows.
enum Flag : std::uint32_t {
  kFlagNoValidElements = 1u << 0,
  kFlagZeroCentroid = 1u << 1,
  kFlagLocalEmptyPool = 1u << 2,
  kFlagGlobalSingleModule = 1u << 3,
  kFlagTechAppEmptyPool = 1u << 4,
  kFlagSpreadNoModule = 1u << 5,
  kFlagSpreadZeroCentroid = 1u << 6,
  kFlagNegentropySingleModule = 1u << 7,
  kFlagNoTech = 1u << 8,
  kFlagFundingOrderInconsistent = 1u << 9,
  kFlagSliceClamped = 1u << 10,
  kFlagInterpolated = 1u << 11,
};

/// Flag names joined by '|', in bit order.
std::string flag_names(std::uint32_t flags);

struct Measured {
  double value = 0.0;
  std::uint32_t flags = 0;
};

/// Token ids present in the vocabulary, in input order with repeats.
std::vector<std::int32_t> in_vocab_ids(std::span<const std::string> tokens, const Vocabulary& vocab);

struct Centroid {
  Vec vector;
  int n_valid = 0;
  std::uint32_t flags = 0;
};

/// Mean of the raw vectors of in-vocabulary tokens (repeats counted).
Centroid description_centroid(std::span<const std::int32_t> ids, const Mat& vectors);

/// Distinct, assigned words grouped by atom; atoms holding fewer than
/// min_module_size of them are dropped.
std::map<std::int32_t, std::vector<std::int32_t>> modules_of(std::span<const std::int32_t> ids,
                                                            const Assignment& assignment, int min_module_size);

/// 1 - cosine, with the cosine clamped to [-1, 1].
double cosine_distance(const Eigen::Ref<const Vec>& a, const Eigen::Ref<const Vec>& b);

enum class LocalAggregation { pooled, region_weighted };

/// Mean cosine distance over all within-module word pairs.
Measured local_distance(std::span<const std::int32_t> ids, const Mat& vectors, const Assignment& assignment,
                        int min_module_size = 2, LocalAggregation agg = LocalAggregation::pooled);

/// Mean cosine distance over all pairs of per-module centroids.
Measured global_distance(std::span<const std::int32_t> ids, const Mat& vectors, const Assignment& assignment,
                         int min_module_size = 2);

enum class ElementKind : std::uint8_t { application, technology };

struct LexiconSet {
  std::unordered_set<std::string> technical;
  std::unordered_map<std::string, double> general_freq;
  std::unordered_map<std::string, double> patent_freq;
  double general_total = 0.0;
  double patent_total = 0.0;

  /// One term per line; lowercased, internal whitespace joined with '_'.
  void add_terms(std::istream& in);
  /// "term,count" rows; a non-numeric first row is treated as a header.
  static std::unordered_map<std::string, double> read_frequencies(std::istream& in, double& total);
};

/// technology if the token is a dictionary term or its patent/general
/// relative-frequency ratio exceeds the threshold; application otherwise.
ElementKind classify_token(const std::string& token, const LexiconSet& lexicon, double freq_ratio_threshold);

std::vector<ElementKind> classify_tech_app(std::span<const std::string> tokens, const LexiconSet& lexicon,
                                           double freq_ratio_threshold = 5.0);

/// Word id -> kind for the in-vocabulary tokens.
std::unordered_map<std::int32_t, ElementKind> kinds_by_id(std::span<const std::string> tokens,
                                                         std::span<const ElementKind> kinds, const Vocabulary& vocab);

/// Mean cosine distance over (technology, application) pairs sharing a module.
Measured tech_app_local_distance(std::span<const std::int32_t> ids,
                                 const std::unordered_map<std::int32_t, ElementKind>& kinds, const Mat& vectors,
                                 const Assignment& assignment, int min_module_size = 2);

/// Per module: mean cosine distance of members from their centroid; averaged
/// over modules with a nonzero centroid.
Measured centroid_spread(std::span<const std::int32_t> ids, const Mat& vectors, const Assignment& assignment,
                         int min_module_size = 2);

/// sum p ln p / ln C over the C occupied atoms; 0 when C <= 1.
Measured negentropy_balance(std::span<const std::int32_t> ids, const Assignment& assignment);

/// Mean over technology tokens of ln(1 + count over the lookback slices),
/// where the lookback covers slice years [year(slice) - lookback, year(slice) - 1].
Measured element_familiarity(std::span<const std::string> tokens, std::span<const ElementKind> kinds,
                             const Vocabulary& vocab, int slice, int lookback_years = 5);

/// Global count at or below which a word counts as rare: the nearest-rank
/// `percentile` quantile of vocabulary counts.
std::int64_t rare_count_threshold(const Vocabulary& vocab, double percentile = 0.01);

struct TextControls {
  int text_length = 0;
  int rare_word_dummy = 0;
  int no_tech_dummy = 0;
};

TextControls text_controls(std::span<const std::string> tokens, std::span<const ElementKind> kinds,
                           const Vocabulary& vocab, std::int64_t rare_threshold);

struct InvestorProfile {
  std::string id;
  std::vector<std::string> keywords;
};

/// Mean pairwise (1 - Jaccard) over investors with nonempty keyword sets;
/// absent with fewer than two such investors.
std::optional<double> vc_diversity(std::span<const InvestorProfile> investors);

}  // namespace recomb
