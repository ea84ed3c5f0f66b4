#include "recomb/validation.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <ostream>

namespace recomb {

namespace {

std::int32_t require_word(const Vocabulary& vocab, const std::string& word) {
  if (const auto id = vocab.id(word)) return *id;
  const auto near = nearest_spellings(vocab, word);
  std::string hint;
  for (const auto& w : near) hint += (hint.empty() ? "" : ", ") + w;
  throw Error(fmt::format("word '{}' not in vocabulary (closest: {})", word, hint.empty() ? "none" : hint));
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Vec pole_mean(const Mat& vectors, const std::vector<std::int32_t>& ids) {
  Vec m = Vec::Zero(vectors.cols());
  for (auto id : ids) m += vectors.row(id).transpose();
  return m / static_cast<double>(ids.size());
}

}  // namespace

std::vector<std::string> nearest_spellings(const Vocabulary& vocab, const std::string& word, int limit) {
  std::vector<std::pair<std::size_t, std::int32_t>> d;
  d.reserve(static_cast<std::size_t>(vocab.size()));
  for (std::int32_t i = 0; i < vocab.size(); ++i) d.emplace_back(edit_distance(word, vocab.word(i)), i);
  const auto m = std::min<std::size_t>(d.size(), static_cast<std::size_t>(std::max(limit, 0)));
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(m), d.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back(vocab.word(d[i].second));
  return out;
}

SemanticAxis build_axis(const EmbeddingTensor& u, const Vocabulary& vocab, int slice, std::string name,
                        const std::vector<std::string>& positive, const std::vector<std::string>& negative) {
  SemanticAxis axis;
  axis.name = std::move(name);
  axis.slice = slice;
  std::vector<std::int32_t> pos, neg;
  auto collect = [&](const std::vector<std::string>& words, std::vector<std::int32_t>& ids,
                     std::vector<std::string>& kept) {
    for (const auto& w : words) {
      if (const auto id = vocab.id(w)) {
        ids.push_back(*id);
        kept.push_back(w);
      } else {
        axis.dropped.push_back(w);
      }
    }
  };
  collect(positive, pos, axis.positive);
  collect(negative, neg, axis.negative);
  for (const auto& w : axis.dropped) spdlog::warn("axis '{}': seed '{}' not in vocabulary, skipped", axis.name, w);
  if (pos.empty()) throw Error(fmt::format("axis '{}': no positive seed in vocabulary", axis.name));
  if (neg.empty()) throw Error(fmt::format("axis '{}': no negative seed in vocabulary", axis.name));

  const Mat& vectors = u.slice(slice);
  const Vec diff = pole_mean(vectors, pos) - pole_mean(vectors, neg);
  const double norm = diff.norm();
  if (!(norm > 0.0)) throw Error(fmt::format("axis '{}': poles coincide", axis.name));
  axis.vector = diff / norm;
  return axis;
}

std::optional<double> project_on_axis(const Eigen::Ref<const Vec>& v, const SemanticAxis& axis) {
  const double norm = v.norm();
  if (!(norm > 0.0)) return std::nullopt;
  return std::clamp(v.dot(axis.vector) / (norm * axis.vector.norm()), -1.0, 1.0);
}

std::optional<double> project_word(const EmbeddingTensor& u, const Vocabulary& vocab, const std::string& word,
                                   const SemanticAxis& axis) {
  const auto id = vocab.id(word);
  if (!id) return std::nullopt;
  return project_on_axis(u.slice(axis.slice).row(*id).transpose(), axis);
}

DriftReport drift_trace(const EmbeddingTensor& u, const Vocabulary& vocab, const std::string& word, int n) {
  if (n <= 0) throw Error("drift_trace: n must be positive");
  const auto id = require_word(vocab, word);
  DriftReport r;
  r.word = word;
  r.n = n;
  r.slices.resize(static_cast<std::size_t>(u.slices()));
#pragma omp parallel for schedule(static)
  for (int t = 0; t < u.slices(); ++t) {
    const Vec q = u.slice(t).row(id).transpose();
    const std::int32_t self[] = {id};
    auto& s = r.slices[static_cast<std::size_t>(t)];
    s.year = u.years().empty() ? t : u.years()[static_cast<std::size_t>(t)];
    if (q.norm() > 0.0) s.neighbors = top_by_cosine(u.slice(t), q, n, self);
  }
  return r;
}

void write_drift_tsv(std::ostream& out, const DriftReport& r, const Vocabulary& vocab) {
  out << "year\trank\tneighbor\tsimilarity\n";
  for (const auto& s : r.slices)
    for (std::size_t i = 0; i < s.neighbors.size(); ++i)
      out << fmt::format("{}\t{}\t{}\t{:.6f}\n", s.year, i + 1, vocab.word(s.neighbors[i].id),
                         s.neighbors[i].similarity);
}

void write_drift_json(std::ostream& out, const DriftReport& r, const Vocabulary& vocab) {
  nlohmann::ordered_json j;
  j["word"] = r.word;
  j["n"] = r.n;
  j["slices"] = nlohmann::ordered_json::array();
  for (const auto& s : r.slices) {
    nlohmann::ordered_json js;
    js["year"] = s.year;
    js["neighbors"] = nlohmann::ordered_json::array();
    for (const auto& nb : s.neighbors)
      js["neighbors"].push_back({{"word", vocab.word(nb.id)}, {"similarity", std::round(nb.similarity * 1e6) / 1e6}});
    j["slices"].push_back(std::move(js));
  }
  out << j.dump(2) << "\n";
}

void write_drift_csv(std::ostream& out, const std::vector<DriftReport>& reports, const Vocabulary& vocab,
                     bool header) {
  if (header) out << "slice,word,neighbor,rank,similarity\n";
  for (const auto& r : reports)
    for (const auto& s : r.slices)
      for (std::size_t i = 0; i < s.neighbors.size(); ++i)
        out << fmt::format("{},{},{},{},{:.6f}\n", s.year, r.word, vocab.word(s.neighbors[i].id), i + 1,
                           s.neighbors[i].similarity);
}

std::vector<Neighbor> analogy_query(const EmbeddingTensor& u, const Vocabulary& vocab, int slice,
                                    const std::string& a, const std::string& b, const std::string& c, int n,
                                    bool exclude_operands) {
  const std::int32_t ids[] = {require_word(vocab, a), require_word(vocab, b), require_word(vocab, c)};
  const Mat& vectors = u.slice(slice);
  auto unit = [&](std::int32_t id) -> Vec {
    const Vec v = vectors.row(id).transpose();
    const double norm = v.norm();
    if (!(norm > 0.0)) throw Error(fmt::format("analogy operand '{}' has a zero vector", vocab.word(id)));
    return v / norm;
  };
  const Vec q = unit(ids[0]) - unit(ids[1]) + unit(ids[2]);
  if (!(q.norm() > 0.0)) return {};
  return top_by_cosine(vectors, q, n, exclude_operands ? std::span<const std::int32_t>(ids) : std::span<const std::int32_t>{});
}

}  // namespace recomb
