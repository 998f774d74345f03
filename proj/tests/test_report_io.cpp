#include <gtest/gtest.h>

#include <sstream>

#include "gridfarm/presets.hpp"
#include "gridfarm/pull.hpp"
#include "gridfarm/push.hpp"
#include "gridfarm/report_io.hpp"
#include "support.hpp"

using namespace gridfarm;

namespace {

CampaignReport sample() {
  return compute_report(run_push_campaign(fixtures::with_malaria_failures(fixtures::flat_config(300, 10, 3, 6))));
}

}  // namespace

TEST(ReportIo, JsonRoundTrip) {
  const auto r = sample();
  ASSERT_FALSE(r.failure_attribution.empty());
  EXPECT_EQ(report_from_json_text(report_to_json(r).dump(2)), r);
}

TEST(ReportIo, JsonFieldOrderIsStable) {
  const auto j = report_to_json(sample());
  EXPECT_EQ(j.begin().key(), "report_version");
  EXPECT_EQ(report_to_json(sample()).dump(), j.dump());
}

TEST(ReportIo, SchemaViolations) {
  const auto good = nlohmann::json::parse(report_to_json(sample()).dump());

  auto missing = good;
  missing.erase("crunching_factor");
  EXPECT_THROW(report_from_json(missing), SchemaMismatch);

  auto wrong_type = good;
  wrong_type["seed"] = "seven";
  EXPECT_THROW(report_from_json(wrong_type), SchemaMismatch);

  auto extra = good;
  extra["flux_capacitor"] = 1.21;
  EXPECT_THROW(report_from_json(extra), SchemaMismatch);

  auto version = good;
  version["report_version"] = kReportVersion + 1;
  EXPECT_THROW(report_from_json(version), SchemaMismatch);

  auto bad_class = good;
  bad_class["failure_attribution"]["Gremlins"] = 0.1;
  EXPECT_THROW(report_from_json(bad_class), SchemaMismatch);

  EXPECT_THROW(report_from_json_text("{not json"), SchemaMismatch);
  EXPECT_THROW(report_from_json_text("[]"), SchemaMismatch);
}

TEST(ReportIo, CsvHasHeaderAndOneRow) {
  const auto r = sample();
  const auto csv = report_to_csv(r);
  std::istringstream in(csv);
  std::string header, row, rest;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_FALSE(std::getline(in, rest));
  const auto cols = report_csv_columns();
  auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ',') + 1; };
  EXPECT_EQ(static_cast<std::size_t>(count(header)), cols.size());
  EXPECT_EQ(count(row), count(header));
  EXPECT_EQ(header.substr(0, 19), "report_version,mode");
  EXPECT_EQ(row.substr(0, 7), "1,push,");
}

TEST(ReportIo, FormatsAndUnknownFormat) {
  const auto r = sample();
  EXPECT_EQ(emit_report(r, "csv"), report_to_csv(r));
  EXPECT_EQ(nlohmann::json::parse(emit_report(r, "json")), nlohmann::json::parse(report_to_json(r).dump()));
  EXPECT_NE(emit_report(r, "text").find("Crunching factor"), std::string::npos);
  EXPECT_THROW(emit_report(r, "xml"), UnknownFormat);
}

TEST(ReportIo, CompareIdenticalReportsHasZeroDeltas) {
  const auto r = sample();
  const auto text = compare_reports(r, r);
  EXPECT_EQ(text.find('+'), std::string::npos);
  std::istringstream in(text);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.find("Crunching factor") != std::string::npos) {
      ++rows;
      EXPECT_NE(line.rfind("0.0"), std::string::npos) << line;
    }
  }
  EXPECT_EQ(rows, 1);
}

TEST(ReportIo, ComparePullAgainstPushShowsHigherEfficiency) {
  auto push_cfg = fixtures::with_malaria_failures(fixtures::flat_config(400, 20, 4, 5, 300.0));
  push_cfg.scheduling_overhead = DurationModel::lognormal(1800.0, 1.0);
  auto pull_cfg = push_cfg;
  pull_cfg.scheduler_mode = SchedulerMode::Pull;
  pull_cfg.pull.worker_count = 20;
  const auto a = compute_report(run_push_campaign(push_cfg));
  const auto b = compute_report(run_pull_campaign(pull_cfg));
  EXPECT_GT(b.distribution_efficiency, a.distribution_efficiency);
  const auto text = compare_reports(a, b, "push", "pull");
  EXPECT_NE(text.find("push"), std::string::npos);
  EXPECT_NE(text.find("pull"), std::string::npos);
  EXPECT_NE(text.find("Distribution efficiency (%)"), std::string::npos);
}

TEST(ReportIo, LedgerCsv) {
  RegistrationLedger l;
  l.entries.push_back({3, 1, 2, 0, 1, 4096});
  EXPECT_EQ(ledger_to_csv(l), "task_id,job_id,ce_id,primary_se,backup_se,bytes\n3,1,2,0,1,4096\n");
}
