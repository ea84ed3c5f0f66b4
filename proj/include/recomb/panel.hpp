#pragma once

#include "recomb/atoms.hpp"
#include "recomb/common.hpp"
#include "recomb/corpus.hpp"
#include "recomb/embedding.hpp"
#include "recomb/measures.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace recomb {

enum class EventType { seed, early_round, later_round, ipo, acquisition, closure };

/// Accepts seed; early_round, series_a, series_b, a, b; later_round,
/// series_c..series_f; ipo; acquisition, acquired; closure, closed.
EventType parse_event_type(std::string_view name);
std::string_view to_string(EventType t);

struct Event {
  EventType type = EventType::seed;
  Date date;
  std::optional<double> price_usd;
  std::vector<InvestorProfile> investors;
};

struct DescriptionSnapshot {
  Date date;
  std::string text;
};

struct CompanyRecord {
  std::string id;
  std::string description;
  Date founded;
  std::string industry;
  std::vector<Event> events;
  std::vector<DescriptionSnapshot> snapshots;
};

/// JSONL, one company per line. Event order is preserved as given so that
/// build_panel can reject unordered books.
std::vector<CompanyRecord> read_companies(std::istream& in);

class CpiTable {
 public:
  CpiTable() = default;
  CpiTable(std::map<int, double> index, int base_year);
  /// "year,index" rows; an optional header row is skipped.
  static CpiTable read_csv(std::istream& in, int base_year);

  /// nominal * CPI(base) / CPI(year); throws listing the year if absent.
  double deflate(double nominal, int year) const;
  int base_year() const { return base_year_; }

 private:
  std::map<int, double> index_;
  int base_year_ = 0;
};

enum class Outcome { ipo_high_acq, new_funding, other_acq, close, censored };

std::string_view to_string(Outcome o);
/// Lower is more successful: ipo_high_acq, new_funding, other_acq, close, censored.
int success_rank(Outcome o);

/// Global pre-pass over the acquisition book: per industry, the deflated
/// price at or above which an acquisition counts as high-priced. The top
/// ceil(share * N) prices of an industry qualify (ties included), so a
/// singleton industry is always high. Industries absent from the book have
/// no threshold and code every acquisition as other_acq.
class OutcomeCoder {
 public:
  OutcomeCoder(std::span<const CompanyRecord> companies, const CpiTable& cpi, double high_share = 0.3);

  Outcome code(const Event& e, const std::string& industry) const;
  std::optional<double> threshold(const std::string& industry) const;

 private:
  CpiTable cpi_;
  std::map<std::string, double> thresholds_;
};

/// Months (30.44 days) from the first seed to the first early (A/B) round.
struct TimeToMarket {
  std::optional<double> months;
  bool inconsistent = false;
};
TimeToMarket time_to_market(std::span<const Event> events);

inline constexpr double kDaysPerMonth = 30.44;

/// Nearest endpoint outside the snapshot range, linear in days inside it.
double interpolate_measure(std::span<const std::pair<Date, double>> snapshots, Date query);

struct MeasureConfig {
  int min_module_size = 2;
  LocalAggregation local_aggregation = LocalAggregation::pooled;
  double freq_ratio_threshold = 5.0;
  int lookback_years = 5;
  double rare_percentile = 0.01;
  double high_price_share = 0.3;
  /// End of observation for censored trailing episodes.
  std::optional<Date> censor_date;
};

struct MeasureRow {
  std::string company_id;
  int episode = 0;
  std::string industry;
  Date start;
  Date end;
  int slice_year = 0;
  double local_distance = 0.0;
  double global_distance = 0.0;
  double tech_app_local_distance = 0.0;
  double centroid_spread = 0.0;
  double negentropy = 0.0;
  double element_familiarity = 0.0;
  int n_valid_elements = 0;
  int rare_word_dummy = 0;
  int no_tech_dummy = 0;
  int text_length = 0;
  std::optional<double> time_to_market_months;
  std::optional<double> vc_diversity;
  Outcome outcome = Outcome::censored;
  std::uint32_t flags = 0;
};

/// The text-dependent part of a row, computed for one description on one slice.
struct DescriptionMeasures {
  double local_distance = 0.0;
  double global_distance = 0.0;
  double tech_app_local_distance = 0.0;
  double centroid_spread = 0.0;
  double negentropy = 0.0;
  double element_familiarity = 0.0;
  int n_valid_elements = 0;
  int rare_word_dummy = 0;
  int no_tech_dummy = 0;
  int text_length = 0;
  std::uint32_t flags = 0;
};

struct PanelContext {
  const Vocabulary& vocab;
  const EmbeddingTensor& embeddings;
  /// One dictionary per embedding slice.
  const std::vector<AtomDictionary>& atoms;
  const LexiconSet& lexicon;
  const OutcomeCoder& coder;
  const TokenRules& rules;
  MeasureConfig config;
};

DescriptionMeasures measure_description(std::string_view text, int slice, const PanelContext& ctx);

/// Slice whose years contain `year`, clamped to the available range.
std::pair<int, bool> slice_for_year(const std::vector<int>& labels, int year);

struct RejectedCompany {
  std::string id;
  std::string reason;
};

struct Panel {
  std::vector<MeasureRow> rows;
  std::vector<RejectedCompany> rejected;
  std::size_t dropped_events = 0;
};

/// Episodes run from founding to each event date in turn. Same-date events
/// form one episode coded with the most successful outcome. IPO, acquisition
/// and closure end the company; later events are dropped. A trailing
/// censored episode is added when censor_date lies after the last event.
Panel build_panel(std::span<const CompanyRecord> companies, const PanelContext& ctx);

/// Column names, in output order.
const std::vector<std::string>& panel_columns();
void write_panel_csv(std::ostream& out, std::span<const MeasureRow> rows);
std::vector<MeasureRow> read_panel_csv(std::istream& in);
/// JSON Schema (draft-07) for one panel row.
std::string panel_schema_json();

}  // namespace recomb
