#include "recomb/panel.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace recomb {

EventType parse_event_type(std::string_view name) {
  std::string n(name);
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (n == "seed" || n == "angel" || n == "pre_seed") return EventType::seed;
  if (n == "early_round" || n == "series_a" || n == "series_b" || n == "a" || n == "b") return EventType::early_round;
  if (n == "later_round" || n == "series_c" || n == "series_d" || n == "series_e" || n == "series_f")
    return EventType::later_round;
  if (n == "ipo") return EventType::ipo;
  if (n == "acquisition" || n == "acquired") return EventType::acquisition;
  if (n == "closure" || n == "closed") return EventType::closure;
  throw Error(fmt::format("unknown event type '{}'", name));
}

std::string_view to_string(EventType t) {
  switch (t) {
    case EventType::seed: return "seed";
    case EventType::early_round: return "early_round";
    case EventType::later_round: return "later_round";
    case EventType::ipo: return "ipo";
    case EventType::acquisition: return "acquisition";
    case EventType::closure: return "closure";
  }
  return "seed";
}

std::vector<CompanyRecord> read_companies(std::istream& in) {
  std::vector<CompanyRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CompanyRecord c;
      c.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      c.description = j.value("description", std::string{});
      c.founded = Date::parse(j.at("founded").get<std::string>());
      c.industry = j.value("industry", std::string{});
      for (const auto& je : j.value("events", nlohmann::json::array())) {
        Event e;
        e.type = parse_event_type(je.at("type").get<std::string>());
        e.date = Date::parse(je.at("date").get<std::string>());
        if (je.contains("price_usd") && !je["price_usd"].is_null()) e.price_usd = je["price_usd"].get<double>();
        for (const auto& ji : je.value("investors", nlohmann::json::array())) {
          InvestorProfile inv;
          inv.id = ji.value("id", std::string{});
          inv.keywords = ji.value("keywords", std::vector<std::string>{});
          e.investors.push_back(std::move(inv));
        }
        c.events.push_back(std::move(e));
      }
      for (const auto& js : j.value("snapshots", nlohmann::json::array()))
        c.snapshots.push_back({Date::parse(js.at("date").get<std::string>()), js.at("text").get<std::string>()});
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw Error(fmt::format("companies line {}: {}", lineno, e.what()));
    } catch (const Error& e) {
      throw Error(fmt::format("companies line {}: {}", lineno, e.what()));
    }
  }
  return out;
}

CpiTable::CpiTable(std::map<int, double> index, int base_year) : index_(std::move(index)), base_year_(base_year) {
  for (const auto& [y, v] : index_)
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(fmt::format("CPI index for {} must be positive", y));
  if (!index_.contains(base_year_)) throw ConfigError(fmt::format("CPI base year {} missing from table", base_year_));
}

CpiTable CpiTable::read_csv(std::istream& in, int base_year) {
  std::map<int, double> idx;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      idx[std::stoi(line.substr(0, comma))] = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      if (!first) throw Error("CPI file: bad row '" + line + "'");
    }
    first = false;
  }
  return CpiTable(std::move(idx), base_year);
}

double CpiTable::deflate(double nominal, int year) const {
  const auto it = index_.find(year);
  if (it == index_.end()) throw Error(fmt::format("CPI table has no entry for year {}", year));
  return nominal * index_.at(base_year_) / it->second;
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::ipo_high_acq: return "ipo_high_acq";
    case Outcome::new_funding: return "new_funding";
    case Outcome::other_acq: return "other_acq";
    case Outcome::close: return "close";
    case Outcome::censored: return "censored";
  }
  return "censored";
}

int success_rank(Outcome o) { return static_cast<int>(o); }

namespace {

Outcome parse_outcome(std::string_view s) {
  for (auto o : {Outcome::ipo_high_acq, Outcome::new_funding, Outcome::other_acq, Outcome::close, Outcome::censored})
    if (to_string(o) == s) return o;
  throw Error(fmt::format("unknown outcome '{}'", s));
}

bool is_terminal(EventType t) {
  return t == EventType::ipo || t == EventType::acquisition || t == EventType::closure;
}

}  // namespace

OutcomeCoder::OutcomeCoder(std::span<const CompanyRecord> companies, const CpiTable& cpi, double high_share)
    : cpi_(cpi) {
  if (!(high_share > 0.0 && high_share <= 1.0)) throw ConfigError("high_price_share must be in (0, 1]");
  std::map<std::string, std::vector<double>> prices;
  for (const auto& c : companies)
    for (const auto& e : c.events)
      if (e.type == EventType::acquisition && e.price_usd)
        prices[c.industry].push_back(cpi_.deflate(*e.price_usd, e.date.year()));
  for (auto& [industry, p] : prices) {
    std::sort(p.begin(), p.end());
    const auto n = p.size();
    const auto high = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(high_share * static_cast<double>(n) - 1e-9)), 1, n);
    thresholds_[industry] = p[n - high];
  }
}

std::optional<double> OutcomeCoder::threshold(const std::string& industry) const {
  const auto it = thresholds_.find(industry);
  if (it == thresholds_.end()) return std::nullopt;
  return it->second;
}

Outcome OutcomeCoder::code(const Event& e, const std::string& industry) const {
  switch (e.type) {
    case EventType::ipo: return Outcome::ipo_high_acq;
    case EventType::closure: return Outcome::close;
    case EventType::acquisition: {
      if (!e.price_usd) return Outcome::other_acq;
      const double real = cpi_.deflate(*e.price_usd, e.date.year());
      const auto t = threshold(industry);
      return t && real >= *t ? Outcome::ipo_high_acq : Outcome::other_acq;
    }
    default: return Outcome::new_funding;
  }
}

TimeToMarket time_to_market(std::span<const Event> events) {
  const Event* seed = nullptr;
  const Event* early = nullptr;
  for (const auto& e : events) {
    if (e.type == EventType::seed && (!seed || e.date < seed->date)) seed = &e;
    if (e.type == EventType::early_round && (!early || e.date < early->date)) early = &e;
  }
  if (!seed || !early) return {};
  const auto days = days_between(seed->date, early->date);
  if (days < 0) return {std::nullopt, true};
  return {static_cast<double>(days) / kDaysPerMonth, false};
}

double interpolate_measure(std::span<const std::pair<Date, double>> snapshots, Date query) {
  if (snapshots.empty()) throw Error("interpolate_measure: no snapshots");
  std::vector<std::pair<Date, double>> s(snapshots.begin(), snapshots.end());
  std::stable_sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (query <= s.front().first) return s.front().second;
  if (query >= s.back().first) return s.back().second;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const auto& [d0, v0] = s[i];
    const auto& [d1, v1] = s[i + 1];
    if (query > d1) continue;
    if (query == d1) return v1;
    const double span = static_cast<double>(days_between(d0, d1));
    const double before = static_cast<double>(days_between(d0, query));
    const double after = static_cast<double>(days_between(query, d1));
    return (v0 * after + v1 * before) / span;
  }
  return s.back().second;
}

std::pair<int, bool> slice_for_year(const std::vector<int>& labels, int year) {
  if (labels.empty()) throw Error("no slices available");
  const int width = labels.size() > 1 ? labels[1] - labels[0] : 1;
  if (year < labels.front()) return {0, true};
  int t = 0;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i)
    if (labels[static_cast<std::size_t>(i)] <= year) t = i;
  return {t, year > labels[static_cast<std::size_t>(t)] + width - 1};
}

namespace {

DescriptionMeasures measure_text(std::string_view text, int slice, const PanelContext& ctx, std::int64_t rare) {
  const auto& cfg = ctx.config;
  const auto tokens = tokenize(text, ctx.rules);
  const auto kinds = classify_tech_app(tokens, ctx.lexicon, cfg.freq_ratio_threshold);
  const auto ids = in_vocab_ids(tokens, ctx.vocab);
  const Mat& vectors = ctx.embeddings.slice(slice);
  const Assignment& assignment = ctx.atoms.at(static_cast<std::size_t>(slice)).assignment;

  DescriptionMeasures m;
  const auto centroid = description_centroid(ids, vectors);
  m.n_valid_elements = centroid.n_valid;
  m.flags |= centroid.flags;

  const auto local = local_distance(ids, vectors, assignment, cfg.min_module_size, cfg.local_aggregation);
  const auto global = global_distance(ids, vectors, assignment, cfg.min_module_size);
  const auto kind_map = kinds_by_id(tokens, kinds, ctx.vocab);
  const auto tech_app = tech_app_local_distance(ids, kind_map, vectors, assignment, cfg.min_module_size);
  const auto spread = centroid_spread(ids, vectors, assignment, cfg.min_module_size);
  const auto negent = negentropy_balance(ids, assignment);
  const auto famil = element_familiarity(tokens, kinds, ctx.vocab, slice, cfg.lookback_years);
  const auto controls = text_controls(tokens, kinds, ctx.vocab, rare);

  m.local_distance = local.value;
  m.global_distance = global.value;
  m.tech_app_local_distance = tech_app.value;
  m.centroid_spread = spread.value;
  m.negentropy = negent.value;
  m.element_familiarity = famil.value;
  m.flags |= local.flags | global.flags | tech_app.flags | spread.flags | negent.flags | famil.flags;
  m.text_length = controls.text_length;
  m.rare_word_dummy = controls.rare_word_dummy;
  m.no_tech_dummy = controls.no_tech_dummy;
  return m;
}

DescriptionMeasures interpolated(const std::vector<std::pair<Date, DescriptionMeasures>>& snaps, Date q) {
  std::size_t closest = 0;
  for (std::size_t i = 1; i < snaps.size(); ++i) {
    const auto di = std::abs(days_between(snaps[i].first, q));
    const auto dc = std::abs(days_between(snaps[closest].first, q));
    if (di < dc || (di == dc && snaps[i].first < snaps[closest].first)) closest = i;
  }
  DescriptionMeasures m = snaps[closest].second;
  auto field = [&](double DescriptionMeasures::*member) {
    std::vector<std::pair<Date, double>> pts;
    for (const auto& [d, s] : snaps) pts.emplace_back(d, s.*member);
    m.*member = interpolate_measure(pts, q);
  };
  field(&DescriptionMeasures::local_distance);
  field(&DescriptionMeasures::global_distance);
  field(&DescriptionMeasures::tech_app_local_distance);
  field(&DescriptionMeasures::centroid_spread);
  field(&DescriptionMeasures::negentropy);
  field(&DescriptionMeasures::element_familiarity);
  m.flags |= kFlagInterpolated;
  return m;
}

struct CompanyResult {
  std::vector<MeasureRow> rows;
  std::optional<std::string> rejection;
  std::size_t dropped = 0;
};

CompanyResult company_rows(const CompanyRecord& c, const PanelContext& ctx, std::int64_t rare) {
  CompanyResult res;
  for (std::size_t i = 1; i < c.events.size(); ++i)
    if (c.events[i].date < c.events[i - 1].date) {
      res.rejection = "events not date-ordered";
      return res;
    }
  if (!c.events.empty() && c.events.front().date < c.founded) {
    res.rejection = "founding date after first event";
    return res;
  }

  const auto ttm = time_to_market(c.events);
  std::optional<double> diversity;
  for (const auto& e : c.events)
    if (e.type == EventType::early_round) {
      diversity = vc_diversity(e.investors);
      break;
    }

  const auto& labels = ctx.embeddings.years();
  auto make_row = [&](Date start, Date end, Outcome outcome) {
    const auto [slice, clamped] = slice_for_year(labels, start.year());
    DescriptionMeasures m;
    if (c.snapshots.empty()) {
      m = measure_text(c.description, slice, ctx, rare);
    } else {
      std::vector<std::pair<Date, DescriptionMeasures>> snaps;
      for (const auto& s : c.snapshots) snaps.emplace_back(s.date, measure_text(s.text, slice, ctx, rare));
      m = interpolated(snaps, start);
    }
    MeasureRow r;
    r.company_id = c.id;
    r.episode = static_cast<int>(res.rows.size());
    r.industry = c.industry;
    r.start = start;
    r.end = end;
    r.slice_year = labels[static_cast<std::size_t>(slice)];
    r.local_distance = m.local_distance;
    r.global_distance = m.global_distance;
    r.tech_app_local_distance = m.tech_app_local_distance;
    r.centroid_spread = m.centroid_spread;
    r.negentropy = m.negentropy;
    r.element_familiarity = m.element_familiarity;
    r.n_valid_elements = m.n_valid_elements;
    r.rare_word_dummy = m.rare_word_dummy;
    r.no_tech_dummy = m.no_tech_dummy;
    r.text_length = m.text_length;
    r.time_to_market_months = ttm.months;
    r.vc_diversity = diversity;
    r.outcome = outcome;
    r.flags = m.flags | (clamped ? kFlagSliceClamped : 0u) | (ttm.inconsistent ? kFlagFundingOrderInconsistent : 0u);
    res.rows.push_back(std::move(r));
  };

  Date start = c.founded;
  bool ended = false;
  std::size_t i = 0;
  while (i < c.events.size()) {
    const Date day = c.events[i].date;
    Outcome best = Outcome::censored;
    bool terminal = false;
    for (; i < c.events.size() && c.events[i].date == day; ++i) {
      const auto o = ctx.coder.code(c.events[i], c.industry);
      if (success_rank(o) < success_rank(best)) best = o;
      terminal = terminal || is_terminal(c.events[i].type);
    }
    make_row(start, day, best);
    start = day;
    if (terminal) {
      ended = true;
      res.dropped = c.events.size() - i;
      break;
    }
  }
  if (!ended && ctx.config.censor_date && start < *ctx.config.censor_date)
    make_row(start, *ctx.config.censor_date, Outcome::censored);
  return res;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string num(double v) { return fmt::format("{}", v); }
std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string{}; }

std::uint32_t parse_flags(const std::string& s) {
  std::uint32_t flags = 0;
  if (s.empty()) return flags;
  std::stringstream ss(s);
  std::string name;
  while (std::getline(ss, name, '|'))
    for (std::uint32_t b = 0; b < 32; ++b)
      if (flag_names(1u << b) == name) flags |= 1u << b;
  return flags;
}

}  // namespace

DescriptionMeasures measure_description(std::string_view text, int slice, const PanelContext& ctx) {
  return measure_text(text, slice, ctx, rare_count_threshold(ctx.vocab, ctx.config.rare_percentile));
}

Panel build_panel(std::span<const CompanyRecord> companies, const PanelContext& ctx) {
  if (ctx.atoms.size() != static_cast<std::size_t>(ctx.embeddings.slices()))
    throw Error("build_panel: need one atom dictionary per embedding slice");
  const auto rare = rare_count_threshold(ctx.vocab, ctx.config.rare_percentile);
  std::vector<CompanyResult> results(companies.size());
  std::vector<std::string> errors(companies.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(companies.size()); ++i) {
    try {
      results[i] = company_rows(companies[i], ctx, rare);
    } catch (const std::exception& e) {
      errors[i] = fmt::format("company '{}': {}", companies[i].id, e.what());
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error(e);

  Panel p;
  for (std::size_t i = 0; i < companies.size(); ++i) {
    auto& r = results[i];
    if (r.rejection) {
      p.rejected.push_back({companies[i].id, *r.rejection});
      continue;
    }
    p.dropped_events += r.dropped;
    for (auto& row : r.rows) p.rows.push_back(std::move(row));
  }
  return p;
}

const std::vector<std::string>& panel_columns() {
  static const std::vector<std::string> cols = {
      "company_id",      "episode",          "industry",         "start",
      "end",             "slice_year",       "local_distance",   "global_distance",
      "tech_app_local_distance", "centroid_spread", "negentropy", "element_familiarity",
      "n_valid_elements", "rare_word_dummy", "no_tech_dummy",    "text_length",
      "time_to_market_months", "vc_diversity", "outcome",         "flags"};
  return cols;
}

void write_panel_csv(std::ostream& out, std::span<const MeasureRow> rows) {
  const auto& cols = panel_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const auto& r : rows) {
    const std::vector<std::string> f = {csv_field(r.company_id),
                                        std::to_string(r.episode),
                                        csv_field(r.industry),
                                        r.start.to_string(),
                                        r.end.to_string(),
                                        std::to_string(r.slice_year),
                                        num(r.local_distance),
                                        num(r.global_distance),
                                        num(r.tech_app_local_distance),
                                        num(r.centroid_spread),
                                        num(r.negentropy),
                                        num(r.element_familiarity),
                                        std::to_string(r.n_valid_elements),
                                        std::to_string(r.rare_word_dummy),
                                        std::to_string(r.no_tech_dummy),
                                        std::to_string(r.text_length),
                                        opt_num(r.time_to_market_months),
                                        opt_num(r.vc_diversity),
                                        std::string(to_string(r.outcome)),
                                        flag_names(r.flags)};
    for (std::size_t i = 0; i < f.size(); ++i) out << (i ? "," : "") << f[i];
    out << "\n";
  }
}

std::vector<MeasureRow> read_panel_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("panel file is empty");
  if (split_csv(line) != panel_columns()) throw Error("panel file: unexpected header");
  std::vector<MeasureRow> rows;
  auto opt = [](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != panel_columns().size()) throw Error(fmt::format("panel file: row {} has {} fields", rows.size(), f.size()));
    MeasureRow r;
    r.company_id = f[0];
    r.episode = std::stoi(f[1]);
    r.industry = f[2];
    r.start = Date::parse(f[3]);
    r.end = Date::parse(f[4]);
    r.slice_year = std::stoi(f[5]);
    r.local_distance = std::stod(f[6]);
    r.global_distance = std::stod(f[7]);
    r.tech_app_local_distance = std::stod(f[8]);
    r.centroid_spread = std::stod(f[9]);
    r.negentropy = std::stod(f[10]);
    r.element_familiarity = std::stod(f[11]);
    r.n_valid_elements = std::stoi(f[12]);
    r.rare_word_dummy = std::stoi(f[13]);
    r.no_tech_dummy = std::stoi(f[14]);
    r.text_length = std::stoi(f[15]);
    r.time_to_market_months = opt(f[16]);
    r.vc_diversity = opt(f[17]);
    r.outcome = parse_outcome(f[18]);
    r.flags = parse_flags(f[19]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string panel_schema_json() {
  using nlohmann::ordered_json;
  auto number = [](const char* desc, std::optional<double> lo = {}, std::optional<double> hi = {}) {
    ordered_json j = {{"type", "number"}, {"description", desc}};
    if (lo) j["minimum"] = *lo;
    if (hi) j["maximum"] = *hi;
    return j;
  };
  auto integer = [](const char* desc) { return ordered_json{{"type", "integer"}, {"description", desc}}; };
  auto dummy = [](const char* desc) { return ordered_json{{"type", "integer"}, {"enum", {0, 1}}, {"description", desc}}; };
  auto text = [](const char* desc) { return ordered_json{{"type", "string"}, {"description", desc}}; };
  auto date = [](const char* desc) { return ordered_json{{"type", "string"}, {"format", "date"}, {"description", desc}}; };
  auto optional_number = [](const char* desc, double lo, std::optional<double> hi = {}) {
    ordered_json j = {{"type", {"number", "null"}}, {"description", desc}, {"minimum", lo}};
    if (hi) j["maximum"] = *hi;
    return j;
  };

  ordered_json props;
  props["company_id"] = text("Company identifier");
  props["episode"] = integer("0-based episode index within the company");
  props["industry"] = text("Industry label used for price percentiles");
  props["start"] = date("Episode start (founding or previous event)");
  props["end"] = date("Episode end (event date or censoring date)");
  props["slice_year"] = integer("Year label of the embedding slice the measures use");
  props["local_distance"] = number("Mean cosine distance between words sharing a module", 0, 2);
  props["global_distance"] = number("Mean cosine distance between per-module centroids", 0, 2);
  props["tech_app_local_distance"] = number("Mean cosine distance of technology/application pairs within modules", 0, 2);
  props["centroid_spread"] = number("Mean distance of module members from their module centroid", 0, 2);
  props["negentropy"] = number("sum p ln p / ln C over occupied atoms", -1, 0);
  props["element_familiarity"] = number("Mean ln(1 + lookback count) over technology tokens", 0);
  props["n_valid_elements"] = integer("In-vocabulary tokens in the description");
  props["rare_word_dummy"] = dummy("1 if any token is rare or out of vocabulary");
  props["no_tech_dummy"] = dummy("1 if no token is classified as technology");
  props["text_length"] = integer("Token count of the description");
  props["time_to_market_months"] = optional_number("Months from first seed to first A/B round; empty if censored", 0);
  props["vc_diversity"] = optional_number("Mean pairwise Jaccard diversity of early-round investors", 0, 1);
  props["outcome"] = ordered_json{{"type", "string"},
                                  {"enum", {"ipo_high_acq", "new_funding", "other_acq", "close", "censored"}},
                                  {"description", "Competing outcome ending the episode"}};
  props["flags"] = text("'|'-separated degenerate-case flags");

  ordered_json schema = {{"$schema", "http://json-schema.org/draft-07/schema#"},
                         {"title", "Panel row"},
                         {"type", "object"},
                         {"x-column-order", panel_columns()},
                         {"properties", props},
                         {"required", panel_columns()}};
  return schema.dump(2) + "\n";
}

}  // namespace recomb
