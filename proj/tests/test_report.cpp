#include <algorithm>
#include <cstdio>
#include <sstream>

#include "doctest.h"
#include "xmatch/error.hpp"
#include "xmatch/report.hpp"
#include "xmatch/rng.hpp"

using namespace xmatch;

namespace {

std::string row(const char* label, const double (&v)[5]) {
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %10.4f %10.4f %10.4f %10.4f %10.4f\n", label, v[0], v[1], v[2],
                v[3], v[4]);
  return line;
}

// Published outdoor row: 103 query images, all localized.
std::string reference_table() {
  char header[256];
  std::snprintf(header, sizeof header, "%-12s %10s %10s %10s %10s %10s\n", "Metric", "Median", "P25", "P50",
                "P75", "P90");
  return std::string(header) + row("Position(m)", {0.0860, 0.0307, 0.0860, 0.4258, 3.3890}) +
         row("Angle(deg)", {0.7792, 0.2776, 0.7792, 4.2890, 33.6595}) + "Localized    103/103 1.0000\n";
}

// Columns of a text table row, keyed by header name.
std::vector<std::string> columns(const std::string& table, const std::string& label) {
  std::istringstream in(table);
  for (std::string line; std::getline(in, line);) {
    std::istringstream ls(line);
    std::vector<std::string> t;
    for (std::string s; ls >> s;) t.push_back(s);
    if (!t.empty() && t[0] == label) return t;
  }
  return {};
}

}  // namespace

TEST_CASE("percentile: nearest rank examples") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(percentile(v, 25) == 1);
  CHECK(percentile(v, 50) == 2);
  CHECK(percentile(v, 75) == 3);
  CHECK(percentile(v, 90) == 4);
  CHECK(percentile(v, 100) == 4);
  const std::vector<double> one{5};
  for (double p : {0.1, 25.0, 50.0, 99.9}) CHECK(percentile(one, p) == 5);
  CHECK_THROWS_AS(percentile(std::vector<double>{}, 50), Error);
  CHECK_THROWS_AS(percentile(v, 0), Error);
  CHECK_THROWS_AS(percentile(v, 101), Error);
}

TEST_CASE("percentile: matches the smallest value whose rank covers P percent") {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(1 + rng.index(40));
    for (auto& x : v) x = rng.uniform(0, 10);
    std::sort(v.begin(), v.end());
    double prev = -1;
    for (double p : {5.0, 25.0, 33.3, 50.0, 75.0, 90.0, 100.0}) {
      std::size_t rank = 1;
      while (100.0 * rank < p * v.size()) ++rank;
      CHECK(percentile(v, p) == v[rank - 1]);
      CHECK(percentile(v, p) >= prev);
      prev = percentile(v, p);
    }
  }
}

TEST_CASE("summarize: rates and failure accounting") {
  std::vector<EvalRecord> recs;
  for (int i = 0; i < 4; ++i) recs.push_back({i, true, i + 1.0, 0.1 * (i + 1)});
  auto r = summarize(recs);
  CHECK(r.n_total == 4);
  CHECK(r.rate == 1.0);
  CHECK(r.position->p50 == 2);
  CHECK(r.position->median == r.position->p50);

  recs.clear();
  for (int i = 0; i < 100; ++i) {
    if (i < 78) {
      recs.push_back({i, true, 1.0, 1.0});
    } else {
      recs.push_back({i, false, {}, {}});
    }
  }
  r = summarize(recs);
  CHECK(r.rate == doctest::Approx(0.78));
  CHECK(r.n_success == 78);
  CHECK(r.position->p90 == 1.0);

  std::vector<EvalRecord> inconsistent{{0, false, 1.0, 1.0}};
  CHECK_THROWS_AS(summarize(inconsistent), Error);
  inconsistent = {{0, true, 1.0, {}}};
  CHECK_THROWS_AS(summarize(inconsistent), Error);

  std::vector<EvalRecord> failed{{0, false, {}, {}}};
  CHECK_THROWS_AS(summarize(failed), Error);
  r = summarize(failed, true);
  CHECK(r.rate == 0.0);
  CHECK_FALSE(r.position.has_value());
  CHECK_THROWS_AS(summarize(std::vector<EvalRecord>{}), Error);
}

TEST_CASE("text table: Median column equals P50 column") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EvalRecord> recs;
    const int n = 1 + static_cast<int>(rng.index(30));
    for (int i = 0; i < n; ++i) {
      if (i == 0 || rng.uniform() < 0.8) {
        recs.push_back({i, true, rng.uniform(0, 5), rng.uniform(0, 90)});
      } else {
        recs.push_back({i, false, {}, {}});
      }
    }
    const auto text = emit_table(summarize(recs), TableFormat::Text);
    for (const char* label : {"Position(m)", "Angle(deg)"}) {
      const auto c = columns(text, label);
      REQUIRE(c.size() == 6);
      CHECK(c[1] == c[3]);
    }
  }
}

TEST_CASE("reference row round-trips bit-identically") {
  const std::string table = reference_table();
  const Report r = parse_text_table(table);
  CHECK(r.position->median == 0.0860);
  CHECK(r.rotation_deg->p90 == 33.6595);
  CHECK(r.n_success == 103);
  CHECK(emit_table(r, TableFormat::Text) == table);
  CHECK(parse_csv_table(emit_table(r, TableFormat::Csv)) == r);
  CHECK(report_from_json(nlohmann::json::parse(emit_table(r, TableFormat::Json))) == r);
}

TEST_CASE("csv and json round trips are exact") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<EvalRecord> recs;
    const int n = 1 + static_cast<int>(rng.index(20));
    for (int i = 0; i < n; ++i) recs.push_back({i, true, rng.uniform(0, 1) / 3.0, rng.uniform(0, 180) / 7.0});
    recs.push_back({n, false, {}, {}});
    const Report r = summarize(recs);
    CHECK(parse_csv_table(emit_table(r, TableFormat::Csv)) == r);
    CHECK(report_from_json(nlohmann::json::parse(emit_table(r, TableFormat::Json))) == r);
  }
}

TEST_CASE("null statistics survive every format") {
  const Report r = summarize(std::vector<EvalRecord>{{0, false, {}, {}}, {1, false, {}, {}}}, true);
  for (auto f : {TableFormat::Text, TableFormat::Csv}) {
    const auto text = emit_table(r, f);
    const Report back = f == TableFormat::Text ? parse_text_table(text) : parse_csv_table(text);
    CHECK(back == r);
  }
  const auto j = nlohmann::json::parse(emit_table(r, TableFormat::Json));
  CHECK(j.at("position").is_null());
  CHECK(j.at("rate") == 0.0);
  CHECK(report_from_json(j) == r);
}

TEST_CASE("format names and parse errors") {
  CHECK(table_format_from_string("csv") == TableFormat::Csv);
  CHECK(table_format_from_string("json") == TableFormat::Json);
  CHECK(table_format_from_string("text") == TableFormat::Text);
  CHECK_THROWS_AS(table_format_from_string("xml"), Error);
  CHECK_THROWS_AS(parse_text_table("Position(m) 1 2 3\n"), Error);
  CHECK_THROWS_AS(parse_csv_table("metric,median\nbogus,1\n"), Error);
}
