#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace xmatch {

struct EvalRecord {
  int image_id = 0;
  bool success = false;
  std::optional<double> position_error;
  std::optional<double> rotation_error_deg;
};

struct PercentileStats {
  double median = 0.0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  double p90 = 0.0;

  friend bool operator==(const PercentileStats&, const PercentileStats&) = default;
};

struct Report {
  std::size_t n_total = 0;
  std::size_t n_success = 0;
  double rate = 0.0;
  std::optional<PercentileStats> position;
  std::optional<PercentileStats> rotation_deg;

  friend bool operator==(const Report&, const Report&) = default;
};

/// Nearest-rank percentile: the value at 1-based rank ceil(P / 100 * n) of an
/// ascending list. Throws EmptySet for an empty list, InvalidArgument for P outside (0, 100].
double percentile(std::span<const double> sorted, double p);

PercentileStats percentile_stats(std::vector<double> values);

/// Errors are taken from successful records only; the rate counts every record.
/// Throws EmptySet when there are no records, or no successes unless
/// allow_no_success is set (the stats are then left empty).
Report summarize(std::span<const EvalRecord> records, bool allow_no_success = false);

enum class TableFormat { Text, Csv, Json };

TableFormat table_format_from_string(const std::string& name);

std::string emit_table(const Report& report, TableFormat format);

// Inverses of emit_table. Text values carry four decimals, so only the text
// form loses precision. Throw ParseError.
Report parse_text_table(const std::string& text);
Report parse_csv_table(const std::string& text);
Report report_from_json(const nlohmann::json& j);

}  // namespace xmatch
