#include "xmatch/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "xmatch/error.hpp"

namespace xmatch {

double percentile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorKind::EmptySet, "percentile of an empty list");
  if (!(p > 0.0 && p <= 100.0)) throw Error(ErrorKind::InvalidArgument, "percentile P must be in (0, 100]");
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0 - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

PercentileStats percentile_stats(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  PercentileStats s;
  s.p25 = percentile(values, 25.0);
  s.p50 = percentile(values, 50.0);
  s.p75 = percentile(values, 75.0);
  s.p90 = percentile(values, 90.0);
  s.median = s.p50;
  return s;
}

Report summarize(std::span<const EvalRecord> records, bool allow_no_success) {
  if (records.empty()) throw Error(ErrorKind::EmptySet, "no evaluation records");
  Report r;
  r.n_total = records.size();
  std::vector<double> pos, rot;
  for (const auto& rec : records) {
    if (rec.success != (rec.position_error.has_value() && rec.rotation_error_deg.has_value())) {
      throw Error(ErrorKind::InvalidArgument, "record " + std::to_string(rec.image_id) +
                                                  ": errors must be present exactly when successful");
    }
    if (!rec.success) continue;
    pos.push_back(*rec.position_error);
    rot.push_back(*rec.rotation_error_deg);
  }
  r.n_success = pos.size();
  r.rate = static_cast<double>(r.n_success) / static_cast<double>(r.n_total);
  if (pos.empty()) {
    if (!allow_no_success) throw Error(ErrorKind::EmptySet, "no successful localizations");
    return r;
  }
  r.position = percentile_stats(std::move(pos));
  r.rotation_deg = percentile_stats(std::move(rot));
  return r;
}

TableFormat table_format_from_string(const std::string& name) {
  if (name == "text" || name == "txt") return TableFormat::Text;
  if (name == "csv") return TableFormat::Csv;
  if (name == "json") return TableFormat::Json;
  throw Error(ErrorKind::InvalidArgument, "unknown table format '" + name + "'");
}

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::ParseError, "not a number: '" + s + "'");
  }
  return v;
}

std::size_t parse_count(const std::string& s) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::ParseError, "not a count: '" + s + "'");
  }
  return v;
}

std::vector<double> values_of(const PercentileStats& s) { return {s.median, s.p25, s.p50, s.p75, s.p90}; }

PercentileStats stats_of(const std::vector<double>& v) { return {v[0], v[1], v[2], v[3], v[4]}; }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

const char* const kTextLabels[2] = {"Position(m)", "Angle(deg)"};
const char* const kCsvLabels[2] = {"position", "rotation_deg"};

void check_rate(Report& r) {
  if (r.n_total == 0 || r.n_success > r.n_total) throw Error(ErrorKind::ParseError, "inconsistent counts");
  r.rate = static_cast<double>(r.n_success) / static_cast<double>(r.n_total);
  if (r.position.has_value() != r.rotation_deg.has_value()) {
    throw Error(ErrorKind::ParseError, "position and rotation rows must both be present or absent");
  }
}

}  // namespace

std::string emit_table(const Report& report, TableFormat format) {
  const std::optional<PercentileStats>* rows[2] = {&report.position, &report.rotation_deg};
  std::ostringstream out;
  switch (format) {
    case TableFormat::Text: {
      char line[256];
      std::snprintf(line, sizeof line, "%-12s %10s %10s %10s %10s %10s\n", "Metric", "Median", "P25",
                    "P50", "P75", "P90");
      out << line;
      for (int m = 0; m < 2; ++m) {
        std::vector<std::string> cells(5, "-");
        if (*rows[m]) {
          const auto v = values_of(**rows[m]);
          for (int c = 0; c < 5; ++c) cells[c] = fixed4(v[c]);
        }
        std::snprintf(line, sizeof line, "%-12s %10s %10s %10s %10s %10s\n", kTextLabels[m],
                      cells[0].c_str(), cells[1].c_str(), cells[2].c_str(), cells[3].c_str(),
                      cells[4].c_str());
        out << line;
      }
      out << "Localized    " << report.n_success << '/' << report.n_total << ' '
          << fixed4(report.rate) << '\n';
      break;
    }
    case TableFormat::Csv: {
      out << "metric,median,p25,p50,p75,p90\n";
      for (int m = 0; m < 2; ++m) {
        out << kCsvLabels[m];
        if (*rows[m]) {
          for (double v : values_of(**rows[m])) out << ',' << shortest(v);
        } else {
          out << ",,,,,";
        }
        out << '\n';
      }
      out << "n_total," << report.n_total << "\nn_success," << report.n_success << "\nrate,"
          << shortest(report.rate) << '\n';
      break;
    }
    case TableFormat::Json: {
      nlohmann::json j;
      j["n_total"] = report.n_total;
      j["n_success"] = report.n_success;
      j["rate"] = report.rate;
      const char* keys[2] = {"position", "rotation_deg"};
      for (int m = 0; m < 2; ++m) {
        if (*rows[m]) {
          const auto& s = **rows[m];
          j[keys[m]] = {{"median", s.median}, {"p25", s.p25}, {"p50", s.p50}, {"p75", s.p75}, {"p90", s.p90}};
        } else {
          j[keys[m]] = nullptr;
        }
      }
      out << j.dump(2) << '\n';
      break;
    }
  }
  return out.str();
}

Report parse_text_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Report r;
  bool saw_rate = false;
  while (std::getline(in, line)) {
    const auto t = tokens(line);
    if (t.empty() || t[0] == "Metric") continue;
    if (t[0] == "Localized") {
      if (t.size() < 2) throw Error(ErrorKind::ParseError, "bad rate line");
      const auto parts = split(t[1], '/');
      if (parts.size() != 2) throw Error(ErrorKind::ParseError, "bad rate fraction");
      r.n_success = parse_count(parts[0]);
      r.n_total = parse_count(parts[1]);
      saw_rate = true;
      continue;
    }
    int m = t[0] == kTextLabels[0] ? 0 : t[0] == kTextLabels[1] ? 1 : -1;
    if (m < 0) throw Error(ErrorKind::ParseError, "unknown row '" + t[0] + "'");
    if (t.size() != 6) throw Error(ErrorKind::ParseError, "row needs 5 values");
    auto& slot = m == 0 ? r.position : r.rotation_deg;
    if (t[1] == "-") continue;
    std::vector<double> v;
    for (int c = 1; c <= 5; ++c) v.push_back(parse_double(t[c]));
    slot = stats_of(v);
  }
  if (!saw_rate) throw Error(ErrorKind::ParseError, "missing Localized line");
  check_rate(r);
  return r;
}

Report parse_csv_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Report r;
  int seen = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("metric,", 0) == 0) continue;
    const auto f = split(line, ',');
    if (f[0] == kCsvLabels[0] || f[0] == kCsvLabels[1]) {
      if (f.size() != 6) throw Error(ErrorKind::ParseError, "csv row needs 5 values");
      auto& slot = f[0] == kCsvLabels[0] ? r.position : r.rotation_deg;
      if (f[1].empty()) continue;
      std::vector<double> v;
      for (int c = 1; c <= 5; ++c) v.push_back(parse_double(f[c]));
      slot = stats_of(v);
    } else if (f.size() == 2 && f[0] == "n_total") {
      r.n_total = parse_count(f[1]);
      seen |= 1;
    } else if (f.size() == 2 && f[0] == "n_success") {
      r.n_success = parse_count(f[1]);
      seen |= 2;
    } else if (f.size() == 2 && f[0] == "rate") {
      seen |= 4;
    } else {
      throw Error(ErrorKind::ParseError, "unexpected csv line '" + line + "'");
    }
  }
  if (seen != 7) throw Error(ErrorKind::ParseError, "csv lacks count rows");
  check_rate(r);
  return r;
}

Report report_from_json(const nlohmann::json& j) {
  try {
    Report r;
    r.n_total = j.at("n_total").get<std::size_t>();
    r.n_success = j.at("n_success").get<std::size_t>();
    const char* keys[2] = {"position", "rotation_deg"};
    for (int m = 0; m < 2; ++m) {
      const auto& v = j.at(keys[m]);
      if (v.is_null()) continue;
      PercentileStats s{v.at("median").get<double>(), v.at("p25").get<double>(), v.at("p50").get<double>(),
                        v.at("p75").get<double>(), v.at("p90").get<double>()};
      (m == 0 ? r.position : r.rotation_deg) = s;
    }
    check_rate(r);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("report json: ") + e.what());
  }
}

}  // namespace xmatch
