#pragma once

// Descriptive summaries of a measure panel.

#include "recomb/panel.hpp"

#include <json.hpp>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace recomb {

struct VariableStats {
  std::string name;
  std::size_t n = 0;
  double mean = 0.0;
  /// Sample standard deviation; 0 for a single observation.
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Summary over the present values; n == 0 marks an empty variable.
VariableStats describe(std::string name, std::span<const double> values);

/// Numeric panel variables in column order, with absent optionals skipped.
std::vector<VariableStats> describe_panel(std::span<const MeasureRow> rows);

struct QuantileGroup {
  int group = 0;
  std::size_t n = 0;
  double lo = 0.0;
  double hi = 0.0;
  double mean_value = 0.0;
  /// Share of rows with each outcome, indexed by Outcome.
  std::array<double, 5> rates{};
};

/// Rows ranked by value (ties by input order) and cut into `groups` groups of
/// near-equal size; group g holds ranks r with floor(r * groups / N) == g.
std::vector<QuantileGroup> quantile_table(std::span<const double> values, std::span<const Outcome> outcomes,
                                          int groups = 10);

/// report.json content. `validation` is the validate stage summary, or null.
nlohmann::ordered_json build_report(std::span<const MeasureRow> rows, std::size_t rejected,
                                    const nlohmann::ordered_json& validation);

/// Plain-text tables: descriptive statistics and the quantile outcome rates.
std::string report_tables(const nlohmann::ordered_json& report);

}  // namespace recomb
