#include "recomb/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace recomb {

namespace {

constexpr std::array<Outcome, 5> kOutcomes = {Outcome::ipo_high_acq, Outcome::new_funding, Outcome::other_acq,
                                              Outcome::close, Outcome::censored};

nlohmann::ordered_json stats_json(const VariableStats& s) {
  if (s.n == 0) return {{"n", 0}, {"empty", true}};
  return {{"n", s.n}, {"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}};
}

nlohmann::ordered_json quantile_json(const std::vector<QuantileGroup>& groups) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& g : groups) {
    nlohmann::ordered_json j = {{"group", g.group + 1}, {"n", g.n}};
    if (g.n == 0) {
      j["empty"] = true;
    } else {
      j["lo"] = g.lo;
      j["hi"] = g.hi;
      j["mean_value"] = g.mean_value;
      nlohmann::ordered_json rates;
      for (auto o : kOutcomes) rates[std::string(to_string(o))] = g.rates[static_cast<std::size_t>(o)];
      j["rates"] = std::move(rates);
    }
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace

VariableStats describe(std::string name, std::span<const double> values) {
  VariableStats s;
  s.name = std::move(name);
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) : 0.0;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

std::vector<VariableStats> describe_panel(std::span<const MeasureRow> rows) {
  using Getter = std::optional<double> (*)(const MeasureRow&);
  static const std::vector<std::pair<const char*, Getter>> vars = {
      {"local_distance", [](const MeasureRow& r) -> std::optional<double> { return r.local_distance; }},
      {"global_distance", [](const MeasureRow& r) -> std::optional<double> { return r.global_distance; }},
      {"tech_app_local_distance",
       [](const MeasureRow& r) -> std::optional<double> { return r.tech_app_local_distance; }},
      {"centroid_spread", [](const MeasureRow& r) -> std::optional<double> { return r.centroid_spread; }},
      {"negentropy", [](const MeasureRow& r) -> std::optional<double> { return r.negentropy; }},
      {"element_familiarity", [](const MeasureRow& r) -> std::optional<double> { return r.element_familiarity; }},
      {"n_valid_elements", [](const MeasureRow& r) -> std::optional<double> { return r.n_valid_elements; }},
      {"rare_word_dummy", [](const MeasureRow& r) -> std::optional<double> { return r.rare_word_dummy; }},
      {"no_tech_dummy", [](const MeasureRow& r) -> std::optional<double> { return r.no_tech_dummy; }},
      {"text_length", [](const MeasureRow& r) -> std::optional<double> { return r.text_length; }},
      {"time_to_market_months", [](const MeasureRow& r) { return r.time_to_market_months; }},
      {"vc_diversity", [](const MeasureRow& r) { return r.vc_diversity; }},
  };
  std::vector<VariableStats> out;
  for (const auto& [name, get] : vars) {
    std::vector<double> v;
    for (const auto& r : rows)
      if (const auto x = get(r)) v.push_back(*x);
    out.push_back(describe(name, v));
  }
  return out;
}

std::vector<QuantileGroup> quantile_table(std::span<const double> values, std::span<const Outcome> outcomes,
                                          int groups) {
  if (values.size() != outcomes.size()) throw Error("quantile_table: values and outcomes differ in length");
  if (groups <= 0) throw Error("quantile_table: groups must be positive");
  const auto n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<QuantileGroup> out(static_cast<std::size_t>(groups));
  for (int g = 0; g < groups; ++g) out[static_cast<std::size_t>(g)].group = g;
  for (std::size_t r = 0; r < n; ++r) {
    auto& g = out[r * static_cast<std::size_t>(groups) / n];
    const double v = values[order[r]];
    if (g.n == 0) g.lo = v;
    g.hi = v;
    g.mean_value += v;
    g.rates[static_cast<std::size_t>(outcomes[order[r]])] += 1.0;
    ++g.n;
  }
  for (auto& g : out) {
    if (g.n == 0) continue;
    g.mean_value /= static_cast<double>(g.n);
    for (auto& rate : g.rates) rate /= static_cast<double>(g.n);
  }
  return out;
}

nlohmann::ordered_json build_report(std::span<const MeasureRow> rows, std::size_t rejected,
                                    const nlohmann::ordered_json& validation) {
  nlohmann::ordered_json j;
  std::vector<std::string> companies;
  for (const auto& r : rows) companies.push_back(r.company_id);
  std::sort(companies.begin(), companies.end());
  companies.erase(std::unique(companies.begin(), companies.end()), companies.end());

  j["rows"] = rows.size();
  j["companies"] = companies.size();
  j["rejected_companies"] = rejected;
  j["empty"] = rows.empty();

  nlohmann::ordered_json desc;
  for (const auto& s : describe_panel(rows)) desc[s.name] = stats_json(s);
  j["descriptive"] = std::move(desc);

  nlohmann::ordered_json props;
  for (auto o : kOutcomes) {
    const auto c = std::count_if(rows.begin(), rows.end(), [o](const MeasureRow& r) { return r.outcome == o; });
    props[std::string(to_string(o))] =
        rows.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(static_cast<double>(c) / static_cast<double>(rows.size()));
  }
  j["outcome_proportions"] = std::move(props);

  std::vector<Outcome> outcomes;
  std::vector<double> local, global;
  for (const auto& r : rows) {
    outcomes.push_back(r.outcome);
    local.push_back(r.local_distance);
    global.push_back(r.global_distance);
  }
  j["quantiles"] = {{"local_distance", quantile_json(quantile_table(local, outcomes))},
                    {"global_distance", quantile_json(quantile_table(global, outcomes))}};

  nlohmann::ordered_json excerpts;
  if (validation.is_object()) {
    excerpts["drift"] = nlohmann::ordered_json::array();
    for (const auto& d : validation.value("drift", nlohmann::ordered_json::array())) {
      nlohmann::ordered_json e = {{"word", d["word"]}, {"slices", nlohmann::ordered_json::array()}};
      for (const auto& s : d["slices"]) {
        auto top = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < std::min<std::size_t>(3, s["neighbors"].size()); ++i)
          top.push_back(s["neighbors"][i]["word"]);
        e["slices"].push_back({{"year", s["year"]}, {"top", std::move(top)}});
      }
      excerpts["drift"].push_back(std::move(e));
    }
    excerpts["axes"] = validation.value("axes", nlohmann::ordered_json::array());
    excerpts["checks_passed"] = validation.value("passed", false);
  } else {
    excerpts["empty"] = true;
  }
  j["validation"] = std::move(excerpts);
  return j;
}

std::string report_tables(const nlohmann::ordered_json& report) {
  std::string out = "Descriptive statistics\n";
  out += fmt::format("{:<26}{:>8}{:>14}{:>14}{:>14}{:>14}\n", "variable", "n", "mean", "std", "min", "max");
  for (const auto& [name, s] : report["descriptive"].items()) {
    if (s.value("empty", false)) {
      out += fmt::format("{:<26}{:>8}{:>14}\n", name, 0, "(empty)");
      continue;
    }
    out += fmt::format("{:<26}{:>8}{:>14.6g}{:>14.6g}{:>14.6g}{:>14.6g}\n", name, s["n"].get<std::size_t>(),
                       s["mean"].get<double>(), s["std"].get<double>(), s["min"].get<double>(),
                       s["max"].get<double>());
  }
  for (const char* var : {"local_distance", "global_distance"}) {
    out += fmt::format("\nOutcome rates by {} decile\n", var);
    out += fmt::format("{:>6}{:>6}{:>12}{:>12}", "group", "n", "lo", "hi");
    for (auto o : kOutcomes) out += fmt::format("{:>14}", to_string(o));
    out += "\n";
    for (const auto& g : report["quantiles"][var]) {
      out += fmt::format("{:>6}{:>6}", g["group"].get<int>(), g["n"].get<std::size_t>());
      if (g.value("empty", false)) {
        out += fmt::format("{:>12}\n", "(empty)");
        continue;
      }
      out += fmt::format("{:>12.4f}{:>12.4f}", g["lo"].get<double>(), g["hi"].get<double>());
      for (auto o : kOutcomes) out += fmt::format("{:>14.3f}", g["rates"][std::string(to_string(o))].get<double>());
      out += "\n";
    }
  }
  return out;
}

}  // namespace recomb
