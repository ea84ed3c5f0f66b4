#include "recomb/corpus.hpp"

#include "recomb/common.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace recomb {

Source parse_source(std::string_view name) {
  if (name == "news") return Source::news;
  if (name == "patent") return Source::patent;
  return Source::other;
}

std::string_view to_string(Source s) {
  switch (s) {
    case Source::news: return "news";
    case Source::patent: return "patent";
    case Source::other: return "other";
  }
  return "other";
}

std::vector<DocumentRecord> read_documents(std::istream& in) {
  std::vector<DocumentRecord> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DocumentRecord d;
      d.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      d.year = j.at("year").get<int>();
      if (j.contains("source") && j["source"].is_string()) d.source = parse_source(j["source"].get<std::string>());
      d.text = j.at("text").get<std::string>();
      docs.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw Error(fmt::format("corpus line {}: {}", lineno, e.what()));
    }
  }
  return docs;
}

std::unordered_set<std::string> TokenRules::default_stopwords() {
  return {"a",     "about", "after", "all",   "also",  "an",    "and",   "any",  "are",   "as",
          "at",    "be",    "been",  "but",   "by",    "can",   "could", "do",   "does",  "for",
          "from",  "had",   "has",   "have",  "he",    "her",   "his",   "how",  "i",     "if",
          "in",    "into",  "is",    "it",    "its",   "may",   "more",  "most", "no",    "not",
          "of",    "on",    "or",    "other", "our",   "out",   "over",  "s",    "she",   "should",
          "so",    "some",  "such",  "t",     "than",  "that",  "the",   "their", "them", "then",
          "there", "these", "they",  "this",  "those", "to",    "up",    "was",  "we",    "were",
          "what",  "when",  "which", "while", "who",   "will",  "with",  "would", "you",  "your"};
}

std::vector<std::string> tokenize(std::string_view text, const TokenRules& rules) {
  std::vector<std::string> raw;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) raw.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    const bool keep = rules.strip_punctuation ? (std::isalnum(uc) != 0 || uc >= 0x80) : std::isspace(uc) == 0;
    if (!keep) {
      flush();
      continue;
    }
    cur.push_back(rules.lowercase ? static_cast<char>(std::tolower(uc)) : ch);
  }
  flush();

  std::vector<std::string> joined;
  joined.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (i + 1 < raw.size()) {
      const auto hit = std::find(rules.bigrams.begin(), rules.bigrams.end(), std::pair{raw[i], raw[i + 1]});
      if (hit != rules.bigrams.end()) {
        joined.push_back(raw[i] + "_" + raw[i + 1]);
        ++i;
        continue;
      }
    }
    joined.push_back(std::move(raw[i]));
  }

  std::vector<std::string> out;
  out.reserve(joined.size());
  for (auto& tok : joined) {
    if (rules.stopwords.contains(tok)) continue;
    if (rules.strip_numbers &&
        std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }))
      continue;
    out.push_back(std::move(tok));
  }
  return out;
}

int SliceSpec::n_slices() const { return (year_max - year_min) / years_per_slice + 1; }

int SliceSpec::slice_of(int year) const {
  if (year < year_min || year > year_max) return -1;
  return (year - year_min) / years_per_slice;
}

void SliceSpec::validate() const {
  if (years_per_slice < 1) throw ConfigError("years_per_slice must be >= 1");
  if (year_max < year_min) throw ConfigError("year_max must be >= year_min");
}

double SourceWeights::of(Source s) const {
  switch (s) {
    case Source::news: return news;
    case Source::patent: return patent;
    case Source::other: return other;
  }
  return other;
}

TokenizedCorpus tokenize_corpus(std::span<const DocumentRecord> docs, const TokenRules& rules,
                                const SliceSpec& slices) {
  slices.validate();
  TokenizedCorpus out;
  out.slices = slices;
  for (const auto& d : docs) {
    const int t = slices.slice_of(d.year);
    if (t < 0) {
      ++out.skipped_out_of_range;
      continue;
    }
    if (d.text.find_first_not_of(" \t\r\n") == std::string::npos) {
      ++out.skipped_empty;
      continue;
    }
    out.docs.push_back({t, d.source, tokenize(d.text, rules)});
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words, std::vector<std::int64_t> global,
                       std::vector<std::vector<std::int64_t>> slice_counts,
                       std::vector<std::int64_t> slice_totals, std::vector<int> slice_labels)
    : words_(std::move(words)),
      global_(std::move(global)),
      slice_counts_(std::move(slice_counts)),
      slice_totals_(std::move(slice_totals)),
      slice_labels_(std::move(slice_labels)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<std::int32_t>(i)).second)
      throw Error("vocabulary: duplicate word '" + words_[i] + "'");
  }
}

std::optional<std::int32_t> Vocabulary::id(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::write_tsv(std::ostream& out) const {
  out << "#id\tword\tglobal";
  for (int label : slice_labels_) out << "\t" << label;
  out << "\n#total\t\t";
  std::int64_t all = 0;
  for (auto t : slice_totals_) all += t;
  out << all;
  for (auto t : slice_totals_) out << "\t" << t;
  out << "\n";
  for (std::size_t i = 0; i < words_.size(); ++i) {
    out << i << "\t" << words_[i] << "\t" << global_[i];
    for (const auto& sc : slice_counts_) out << "\t" << sc[i];
    out << "\n";
  }
}

Vocabulary Vocabulary::read_tsv(std::istream& in) {
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, '\t')) f.push_back(cell);
    return f;
  };
  if (!std::getline(in, line)) throw Error("vocabulary file is empty");
  const auto head = split(line);
  if (head.size() < 3 || head[0] != "#id") throw Error("vocabulary file: bad header");
  std::vector<int> labels;
  for (std::size_t i = 3; i < head.size(); ++i) labels.push_back(std::stoi(head[i]));
  const std::size_t T = labels.size();
  if (!std::getline(in, line)) throw Error("vocabulary file: missing totals line");
  const auto tot = split(line);
  if (tot.size() != 3 + T || tot[0] != "#total") throw Error("vocabulary file: bad totals line");
  std::vector<std::int64_t> totals;
  for (std::size_t i = 0; i < T; ++i) totals.push_back(std::stoll(tot[3 + i]));

  std::vector<std::string> words;
  std::vector<std::int64_t> global;
  std::vector<std::vector<std::int64_t>> counts(T);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 3 + T || std::stoul(f[0]) != words.size())
      throw Error(fmt::format("vocabulary file: bad row {}", words.size()));
    words.push_back(f[1]);
    global.push_back(std::stoll(f[2]));
    for (std::size_t t = 0; t < T; ++t) counts[t].push_back(std::stoll(f[3 + t]));
  }
  return Vocabulary(std::move(words), std::move(global), std::move(counts), std::move(totals), std::move(labels));
}

Vocabulary build_vocab(const TokenizedCorpus& corpus, int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  const int T = corpus.slices.n_slices();
  std::map<std::string, std::vector<std::int64_t>> per_slice;
  std::vector<std::int64_t> totals(T, 0);
  for (const auto& d : corpus.docs) {
    totals[d.slice] += static_cast<std::int64_t>(d.tokens.size());
    for (const auto& tok : d.tokens) {
      auto& c = per_slice[tok];
      if (c.empty()) c.assign(T, 0);
      ++c[d.slice];
    }
  }

  struct Entry {
    const std::string* word;
    std::int64_t global;
    const std::vector<std::int64_t>* counts;
  };
  std::vector<Entry> kept;
  for (const auto& [w, c] : per_slice) {
    if (std::none_of(c.begin(), c.end(), [&](std::int64_t x) { return x >= min_count; })) continue;
    std::int64_t g = 0;
    for (auto x : c) g += x;
    kept.push_back({&w, g, &c});
  }
  if (kept.empty()) throw Error("empty vocabulary");
  std::sort(kept.begin(), kept.end(), [](const Entry& a, const Entry& b) {
    return a.global != b.global ? a.global > b.global : *a.word < *b.word;
  });

  std::vector<std::string> words;
  std::vector<std::int64_t> global;
  std::vector<std::vector<std::int64_t>> counts(T);
  for (const auto& e : kept) {
    words.push_back(*e.word);
    global.push_back(e.global);
    for (int t = 0; t < T; ++t) counts[t].push_back((*e.counts)[t]);
  }
  std::vector<int> labels;
  for (int t = 0; t < T; ++t) labels.push_back(corpus.slices.label(t));
  return Vocabulary(std::move(words), std::move(global), std::move(counts), std::move(totals), std::move(labels));
}

std::vector<EncodedDoc> encode_corpus(const TokenizedCorpus& corpus, const Vocabulary& vocab,
                                      const SourceWeights& weights) {
  std::vector<EncodedDoc> out;
  out.reserve(corpus.docs.size());
  for (const auto& d : corpus.docs) {
    const double w = weights.of(d.source);
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("source weights must be positive and finite");
    EncodedDoc e{d.slice, w, {}};
    e.ids.reserve(d.tokens.size());
    for (const auto& tok : d.tokens)
      if (auto id = vocab.id(tok)) e.ids.push_back(*id);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<SliceCooccurrence> count_cooccurrence(const TokenizedCorpus& corpus, const Vocabulary& vocab,
                                                  const WindowSpec& window, const SourceWeights& weights) {
  const auto encoded = encode_corpus(corpus, vocab, weights);
  auto mats = kernels::count_pairs(encoded, corpus.slices.n_slices(), vocab.size(), window);
  std::vector<SliceCooccurrence> out;
  out.reserve(mats.size());
  for (std::size_t t = 0; t < mats.size(); ++t) {
    SliceCooccurrence sc;
    sc.slice = static_cast<int>(t);
    sc.marginals.resize(static_cast<std::size_t>(vocab.size()));
    for (std::int32_t w = 0; w < vocab.size(); ++w) {
      sc.marginals[w] = mats[t].row_sum(w);
      sc.total += sc.marginals[w];
    }
    sc.counts = std::move(mats[t]);
    out.push_back(std::move(sc));
  }
  return out;
}

PpmiMatrix build_ppmi(const SliceCooccurrence& counts, double shift) {
  if (!(shift >= 1.0)) throw ConfigError("ppmi shift must be >= 1");
  const double log_shift = std::log(shift);
  const auto& c = counts.counts;
  std::vector<Triplet> upper;
  for (std::int32_t w = 0; w < c.n(); ++w) {
    const auto cols = c.cols(w);
    const auto vals = c.values(w);
    for (std::size_t e = 0; e < cols.size(); ++e) {
      const auto ctx = cols[e];
      if (ctx < w || vals[e] == 0.0) continue;
      const double mw = counts.marginals.at(w);
      const double mc = counts.marginals.at(ctx);
      if (mw <= 0.0 || mc <= 0.0 || counts.total <= 0.0)
        throw Error(fmt::format("ppmi: zero marginal with nonzero pair count at ({}, {})", w, ctx));
      const double pmi = std::log(vals[e] * counts.total / (mw * mc)) - log_shift;
      if (pmi > 0.0) upper.push_back({w, ctx, pmi});
    }
  }
  return {counts.slice, CsrMatrix::from_upper(c.n(), upper)};
}

void write_ppmi(std::ostream& out, const PpmiMatrix& m) {
  const auto upper = m.values.upper_triplets();
  out << m.slice << " " << m.values.n() << " " << upper.size() << "\n";
  for (const auto& t : upper) out << fmt::format("{} {} {}\n", t.row, t.col, t.value);
}

PpmiMatrix read_ppmi(std::istream& in) {
  PpmiMatrix m;
  std::int64_t n = 0;
  std::size_t nnz = 0;
  if (!(in >> m.slice >> n >> nnz)) throw Error("ppmi file: bad header");
  std::vector<Triplet> upper;
  upper.reserve(nnz);
  for (std::size_t i = 0; i < nnz; ++i) {
    Triplet t{};
    if (!(in >> t.row >> t.col >> t.value)) throw Error(fmt::format("ppmi file: truncated at entry {}", i));
    if (t.row > t.col) throw Error("ppmi file: entry below diagonal");
    upper.push_back(t);
  }
  m.values = CsrMatrix::from_upper(static_cast<std::int32_t>(n), upper);
  return m;
}

}  // namespace recomb
