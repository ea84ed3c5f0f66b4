#include "recomb/measures.hpp"

#include "recomb/common.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace recomb {

std::string flag_names(std::uint32_t flags) {
  static constexpr const char* kNames[] = {"no_valid_elements",
                                           "zero_centroid",
                                           "local_empty_pool",
                                           "global_single_module",
                                           "tech_app_empty_pool",
                                           "spread_no_module",
                                           "spread_zero_centroid",
                                           "negentropy_single_module",
                                           "no_tech",
                                           "funding_order_inconsistent",
                                           "slice_clamped",
                                           "interpolated"};
  std::string out;
  for (std::size_t b = 0; b < std::size(kNames); ++b)
    if (flags & (1u << b)) {
      if (!out.empty()) out += '|';
      out += kNames[b];
    }
  return out;
}

std::vector<std::int32_t> in_vocab_ids(std::span<const std::string> tokens, const Vocabulary& vocab) {
  std::vector<std::int32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens)
    if (auto id = vocab.id(t)) ids.push_back(*id);
  return ids;
}

Centroid description_centroid(std::span<const std::int32_t> ids, const Mat& vectors) {
  Centroid c;
  c.vector = Vec::Zero(vectors.cols());
  for (auto id : ids) c.vector += vectors.row(id).transpose();
  c.n_valid = static_cast<int>(ids.size());
  if (c.n_valid == 0) {
    c.flags |= kFlagNoValidElements | kFlagZeroCentroid;
    return c;
  }
  c.vector /= static_cast<double>(c.n_valid);
  if (c.vector.norm() == 0.0) c.flags |= kFlagZeroCentroid;
  return c;
}

std::map<std::int32_t, std::vector<std::int32_t>> modules_of(std::span<const std::int32_t> ids,
                                                            const Assignment& assignment, int min_module_size) {
  std::set<std::int32_t> distinct(ids.begin(), ids.end());
  std::map<std::int32_t, std::vector<std::int32_t>> groups;
  for (auto w : distinct) {
    const auto a = assignment.atom.at(static_cast<std::size_t>(w));
    if (a != kUnassigned) groups[a].push_back(w);
  }
  std::erase_if(groups, [&](const auto& g) { return static_cast<int>(g.second.size()) < min_module_size; });
  return groups;
}

double cosine_distance(const Eigen::Ref<const Vec>& a, const Eigen::Ref<const Vec>& b) {
  const double c = a.dot(b) / (a.norm() * b.norm());
  return 1.0 - std::clamp(c, -1.0, 1.0);
}

namespace {

Vec unit_row(const Mat& vectors, std::int32_t w) {
  const Vec v = vectors.row(w).transpose();
  return v / v.norm();
}

Vec module_centroid(const Mat& vectors, const std::vector<std::int32_t>& members) {
  Vec c = Vec::Zero(vectors.cols());
  for (auto w : members) c += unit_row(vectors, w);
  return c / static_cast<double>(members.size());
}

}  // namespace

Measured local_distance(std::span<const std::int32_t> ids, const Mat& vectors, const Assignment& assignment,
                        int min_module_size, LocalAggregation agg) {
  const auto groups = modules_of(ids, assignment, min_module_size);
  double pooled_sum = 0.0;
  std::size_t pooled_n = 0;
  double region_sum = 0.0;
  std::size_t regions = 0;
  for (const auto& [atom, members] : groups) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < members.size(); ++i)
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        s += cosine_distance(vectors.row(members[i]).transpose(), vectors.row(members[j]).transpose());
        ++n;
      }
    if (n == 0) continue;
    pooled_sum += s;
    pooled_n += n;
    region_sum += s / static_cast<double>(n);
    ++regions;
  }
  if (pooled_n == 0) return {0.0, kFlagLocalEmptyPool};
  if (agg == LocalAggregation::region_weighted) return {region_sum / static_cast<double>(regions), 0};
  return {pooled_sum / static_cast<double>(pooled_n), 0};
}

Measured global_distance(std::span<const std::int32_t> ids, const Mat& vectors, const Assignment& assignment,
                         int min_module_size) {
  const auto groups = modules_of(ids, assignment, min_module_size);
  std::vector<Vec> centroids;
  std::uint32_t flags = 0;
  for (const auto& [atom, members] : groups) {
    Vec c = module_centroid(vectors, members);
    if (c.norm() == 0.0) {
      flags |= kFlagZeroCentroid;
      continue;
    }
    centroids.push_back(std::move(c));
  }
  if (centroids.size() < 2) return {0.0, flags | kFlagGlobalSingleModule};
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < centroids.size(); ++i)
    for (std::size_t j = i + 1; j < centroids.size(); ++j) {
      s += cosine_distance(centroids[i], centroids[j]);
      ++n;
    }
  return {s / static_cast<double>(n), flags};
}

void LexiconSet::add_terms(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    std::string term;
    bool gap = false;
    for (char ch : line) {
      const auto uc = static_cast<unsigned char>(ch);
      if (std::isspace(uc)) {
        gap = !term.empty();
        continue;
      }
      if (gap) term += '_';
      gap = false;
      term += static_cast<char>(std::tolower(uc));
    }
    if (!term.empty() && term[0] != '#') technical.insert(term);
  }
}

std::unordered_map<std::string, double> LexiconSet::read_frequencies(std::istream& in, double& total) {
  std::unordered_map<std::string, double> freq;
  total = 0.0;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw Error("frequency file: expected 'term,count' rows");
    std::string term = line.substr(0, comma);
    std::transform(term.begin(), term.end(), term.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    double count = 0.0;
    try {
      std::size_t used = 0;
      count = std::stod(line.substr(comma + 1), &used);
    } catch (const std::exception&) {
      if (first) {
        first = false;
        continue;
      }
      throw Error("frequency file: non-numeric count for '" + term + "'");
    }
    first = false;
    if (!(count >= 0.0) || !std::isfinite(count)) throw Error("frequency file: negative count for '" + term + "'");
    freq[term] += count;
    total += count;
  }
  return freq;
}

ElementKind classify_token(const std::string& token, const LexiconSet& lexicon, double freq_ratio_threshold) {
  if (lexicon.technical.contains(token)) return ElementKind::technology;
  const auto g = lexicon.general_freq.find(token);
  const auto p = lexicon.patent_freq.find(token);
  const bool in_general = g != lexicon.general_freq.end() && g->second > 0.0;
  const bool in_patent = p != lexicon.patent_freq.end() && p->second > 0.0;
  if (!in_patent) return ElementKind::application;
  if (!in_general) return ElementKind::technology;
  const double ratio = (p->second / lexicon.patent_total) / (g->second / lexicon.general_total);
  return ratio > freq_ratio_threshold ? ElementKind::technology : ElementKind::application;
}

std::vector<ElementKind> classify_tech_app(std::span<const std::string> tokens, const LexiconSet& lexicon,
                                           double freq_ratio_threshold) {
  std::vector<ElementKind> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(classify_token(t, lexicon, freq_ratio_threshold));
  return out;
}

std::unordered_map<std::int32_t, ElementKind> kinds_by_id(std::span<const std::string> tokens,
                                                         std::span<const ElementKind> kinds, const Vocabulary& vocab) {
  std::unordered_map<std::int32_t, ElementKind> out;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (auto id = vocab.id(tokens[i])) out.emplace(*id, kinds[i]);
  return out;
}

Measured tech_app_local_distance(std::span<const std::int32_t> ids,
                                 const std::unordered_map<std::int32_t, ElementKind>& kinds, const Mat& vectors,
                                 const Assignment& assignment, int min_module_size) {
  const auto groups = modules_of(ids, assignment, min_module_size);
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& [atom, members] : groups) {
    std::vector<std::int32_t> tech, app;
    for (auto w : members) {
      const auto it = kinds.find(w);
      const auto kind = it == kinds.end() ? ElementKind::application : it->second;
      (kind == ElementKind::technology ? tech : app).push_back(w);
    }
    for (auto t : tech)
      for (auto a : app) {
        s += cosine_distance(vectors.row(t).transpose(), vectors.row(a).transpose());
        ++n;
      }
  }
  if (n == 0) return {0.0, kFlagTechAppEmptyPool};
  return {s / static_cast<double>(n), 0};
}

Measured centroid_spread(std::span<const std::int32_t> ids, const Mat& vectors, const Assignment& assignment,
                         int min_module_size) {
  const auto groups = modules_of(ids, assignment, min_module_size);
  double total = 0.0;
  std::size_t used = 0;
  std::uint32_t flags = 0;
  for (const auto& [atom, members] : groups) {
    const Vec c = module_centroid(vectors, members);
    if (c.norm() == 0.0) {
      flags |= kFlagSpreadZeroCentroid;
      continue;
    }
    double s = 0.0;
    for (auto w : members) s += cosine_distance(vectors.row(w).transpose(), c);
    total += s / static_cast<double>(members.size());
    ++used;
  }
  if (used == 0) return {0.0, flags | kFlagSpreadNoModule};
  return {total / static_cast<double>(used), flags};
}

Measured negentropy_balance(std::span<const std::int32_t> ids, const Assignment& assignment) {
  const auto groups = modules_of(ids, assignment, 1);
  const auto occupied = groups.size();
  if (occupied <= 1) return {0.0, kFlagNegentropySingleModule};
  std::size_t total = 0;
  for (const auto& g : groups) total += g.second.size();
  double h = 0.0;
  for (const auto& g : groups) {
    const double p = static_cast<double>(g.second.size()) / static_cast<double>(total);
    h += p * std::log(p);
  }
  return {h / std::log(static_cast<double>(occupied)), 0};
}

Measured element_familiarity(std::span<const std::string> tokens, std::span<const ElementKind> kinds,
                             const Vocabulary& vocab, int slice, int lookback_years) {
  const auto& labels = vocab.slice_labels();
  const int year = labels.at(static_cast<std::size_t>(slice));
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (kinds[i] != ElementKind::technology) continue;
    std::int64_t count = 0;
    if (auto id = vocab.id(tokens[i]))
      for (int t = 0; t < vocab.n_slices(); ++t)
        if (labels[t] >= year - lookback_years && labels[t] <= year - 1) count += vocab.slice_count(t, *id);
    s += std::log1p(static_cast<double>(count));
    ++n;
  }
  if (n == 0) return {0.0, kFlagNoTech};
  return {s / static_cast<double>(n), 0};
}

std::int64_t rare_count_threshold(const Vocabulary& vocab, double percentile) {
  if (vocab.size() == 0) return 0;
  std::vector<std::int64_t> counts;
  counts.reserve(static_cast<std::size_t>(vocab.size()));
  for (std::int32_t i = 0; i < vocab.size(); ++i) counts.push_back(vocab.global_count(i));
  std::sort(counts.begin(), counts.end());
  const auto rank = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(percentile * static_cast<double>(counts.size()) - 1e-9)));
  return counts[std::min(rank, counts.size()) - 1];
}

TextControls text_controls(std::span<const std::string> tokens, std::span<const ElementKind> kinds,
                           const Vocabulary& vocab, std::int64_t rare_threshold) {
  TextControls c;
  c.text_length = static_cast<int>(tokens.size());
  c.rare_word_dummy = tokens.empty() ? 1 : 0;
  for (const auto& t : tokens) {
    const auto id = vocab.id(t);
    if (!id || vocab.global_count(*id) <= rare_threshold) {
      c.rare_word_dummy = 1;
      break;
    }
  }
  c.no_tech_dummy = std::none_of(kinds.begin(), kinds.end(), [](ElementKind k) { return k == ElementKind::technology; });
  return c;
}

std::optional<double> vc_diversity(std::span<const InvestorProfile> investors) {
  std::vector<std::set<std::string>> sets;
  for (const auto& inv : investors) {
    std::set<std::string> s;
    for (auto kw : inv.keywords) {
      std::transform(kw.begin(), kw.end(), kw.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (!kw.empty()) s.insert(std::move(kw));
    }
    if (!s.empty()) sets.push_back(std::move(s));
  }
  if (sets.size() < 2) return std::nullopt;

  // Exact rational accumulation of sum (|A u B| - |A n B|) / |A u B|, with a
  // floating-point fallback if the denominators grow too large.
  std::int64_t num = 0, den = 1;
  bool exact = true;
  double approx = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (std::size_t j = i + 1; j < sets.size(); ++j) {
      std::vector<std::string> inter;
      std::set_intersection(sets[i].begin(), sets[i].end(), sets[j].begin(), sets[j].end(), std::back_inserter(inter));
      const auto ni = static_cast<std::int64_t>(inter.size());
      const auto nu = static_cast<std::int64_t>(sets[i].size() + sets[j].size()) - ni;
      approx += static_cast<double>(nu - ni) / static_cast<double>(nu);
      ++pairs;
      if (!exact) continue;
      std::int64_t a = 0, b = 0, c = 0;
      if (__builtin_mul_overflow(num, nu, &a) || __builtin_mul_overflow(nu - ni, den, &b) ||
          __builtin_add_overflow(a, b, &a) || __builtin_mul_overflow(den, nu, &c)) {
        exact = false;
        continue;
      }
      const auto g = std::gcd(a, c);
      num = a / g;
      den = c / g;
    }
  std::int64_t full_den = 0;
  if (exact && !__builtin_mul_overflow(den, pairs, &full_den) && full_den < (std::int64_t{1} << 53) &&
      num < (std::int64_t{1} << 53))
    return static_cast<double>(num) / static_cast<double>(full_den);
  return approx / static_cast<double>(pairs);
}

}  // namespace recomb
