#pragma once

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gridfarm/campaign.hpp"
#include "gridfarm/errors.hpp"
#include "gridfarm/metrics.hpp"

namespace gridfarm {

enum class ReportFormat { Json, Csv, Text };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "text") return ReportFormat::Text;
  throw UnknownFormat("unknown report format '" + std::string(s) + "' (json, csv, text)");
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json report_to_json(const CampaignReport& r) {
  nlohmann::ordered_json attribution = nlohmann::ordered_json::object();
  for (const auto& [cls, rate] : r.failure_attribution) attribution[std::string(to_string(cls))] = rate;
  return {
      {"report_version", r.report_version},
      {"mode", r.mode},
      {"complete", r.complete},
      {"seed", r.seed},
      {"task_count", r.task_count},
      {"total_tasks_completed", r.total_tasks_completed},
      {"tasks_unfinished", r.tasks_unfinished},
      {"total_cpu_seconds", r.total_cpu_seconds},
      {"total_cpu_years", r.total_cpu_years},
      {"wasted_cpu_seconds", r.wasted_cpu_seconds},
      {"wall_clock_seconds", r.wall_clock_seconds},
      {"cumulative_grid_jobs", r.cumulative_grid_jobs},
      {"max_concurrent_cpus", r.max_concurrent_cpus},
      {"ce_count_used", r.ce_count_used},
      {"crunching_factor", r.crunching_factor},
      {"distribution_efficiency", r.distribution_efficiency},
      {"throughput_tasks_per_second", r.throughput_tasks_per_second},
      {"seconds_per_task", r.seconds_per_task},
      {"success_rate_logged", r.success_rate_logged},
      {"success_rate_after_output_check", r.success_rate_after_output_check},
      {"failure_attribution", attribution},
      {"aborted_jobs", r.aborted_jobs},
      {"bytes_produced", r.bytes_produced},
      {"requeues", r.requeues},
      {"dead_workers", r.dead_workers},
      {"stale_results", r.stale_results},
  };
}

namespace report_detail {

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) throw SchemaMismatch(std::string("report is missing field '") + key + "'");
  const auto& v = j.at(key);
  bool ok;
  if constexpr (std::is_same_v<T, bool>) {
    ok = v.is_boolean();
  } else if constexpr (std::is_integral_v<T>) {
    ok = v.is_number_integer() && (!std::is_unsigned_v<T> || v.is_number_unsigned());
  } else if constexpr (std::is_floating_point_v<T>) {
    ok = v.is_number();
  } else {
    ok = v.is_string();
  }
  if (!ok) throw SchemaMismatch(std::string("report field '") + key + "' has the wrong type");
  out = v.get<T>();
}

}  // namespace report_detail

inline CampaignReport report_from_json(const nlohmann::json& j) {
  using report_detail::read;
  if (!j.is_object()) throw SchemaMismatch("report must be a JSON object");
  CampaignReport r;
  read(j, "report_version", r.report_version);
  if (r.report_version != kReportVersion) {
    throw SchemaMismatch("report_version " + std::to_string(r.report_version) + " is not supported");
  }
  read(j, "mode", r.mode);
  read(j, "complete", r.complete);
  read(j, "seed", r.seed);
  read(j, "task_count", r.task_count);
  read(j, "total_tasks_completed", r.total_tasks_completed);
  read(j, "tasks_unfinished", r.tasks_unfinished);
  read(j, "total_cpu_seconds", r.total_cpu_seconds);
  read(j, "total_cpu_years", r.total_cpu_years);
  read(j, "wasted_cpu_seconds", r.wasted_cpu_seconds);
  read(j, "wall_clock_seconds", r.wall_clock_seconds);
  read(j, "cumulative_grid_jobs", r.cumulative_grid_jobs);
  read(j, "max_concurrent_cpus", r.max_concurrent_cpus);
  read(j, "ce_count_used", r.ce_count_used);
  read(j, "crunching_factor", r.crunching_factor);
  read(j, "distribution_efficiency", r.distribution_efficiency);
  read(j, "throughput_tasks_per_second", r.throughput_tasks_per_second);
  read(j, "seconds_per_task", r.seconds_per_task);
  read(j, "success_rate_logged", r.success_rate_logged);
  read(j, "success_rate_after_output_check", r.success_rate_after_output_check);
  read(j, "aborted_jobs", r.aborted_jobs);
  read(j, "bytes_produced", r.bytes_produced);
  read(j, "requeues", r.requeues);
  read(j, "dead_workers", r.dead_workers);
  read(j, "stale_results", r.stale_results);

  if (!j.contains("failure_attribution") || !j.at("failure_attribution").is_object()) {
    throw SchemaMismatch("report is missing field 'failure_attribution'");
  }
  for (const auto& [name, rate] : j.at("failure_attribution").items()) {
    const auto cls = parse_failure_class(name);
    if (!cls || !rate.is_number()) throw SchemaMismatch("bad failure_attribution entry '" + name + "'");
    r.failure_attribution[*cls] = rate.get<double>();
  }
  const auto expected = report_to_json(r);
  for (const auto& [key, value] : j.items()) {
    if (!expected.contains(key)) throw SchemaMismatch("report has unexpected field '" + key + "'");
  }
  return r;
}

inline CampaignReport report_from_json_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("report is not valid JSON: ") + e.what());
  }
  return report_from_json(j);
}

// ---------------------------------------------------------------------------
// CSV: one header line, one data line. Attribution gets one column per class, zero when absent.

inline std::vector<std::string> report_csv_columns() {
  std::vector<std::string> cols = {"report_version",
                                   "mode",
                                   "complete",
                                   "seed",
                                   "task_count",
                                   "total_tasks_completed",
                                   "tasks_unfinished",
                                   "total_cpu_seconds",
                                   "total_cpu_years",
                                   "wasted_cpu_seconds",
                                   "wall_clock_seconds",
                                   "cumulative_grid_jobs",
                                   "max_concurrent_cpus",
                                   "ce_count_used",
                                   "crunching_factor",
                                   "distribution_efficiency",
                                   "throughput_tasks_per_second",
                                   "seconds_per_task",
                                   "success_rate_logged",
                                   "success_rate_after_output_check"};
  for (auto c : kAllFailureClasses) cols.push_back("attribution_" + std::string(to_string(c)));
  for (const char* c : {"aborted_jobs", "bytes_produced", "requeues", "dead_workers", "stale_results"}) {
    cols.emplace_back(c);
  }
  return cols;
}

inline std::string report_to_csv(const CampaignReport& r) {
  const auto j = report_to_json(r);
  std::string header, row;
  for (const auto& col : report_csv_columns()) {
    if (!header.empty()) {
      header += ',';
      row += ',';
    }
    header += col;
    if (col.starts_with("attribution_")) {
      const auto cls = *parse_failure_class(col.substr(12));
      const auto it = r.failure_attribution.find(cls);
      row += nlohmann::json(it == r.failure_attribution.end() ? 0.0 : it->second).dump();
    } else {
      const auto& v = j.at(col);
      row += v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  return header + "\n" + row + "\n";
}

// ---------------------------------------------------------------------------
// Text summary table.

namespace report_detail {

struct Row {
  std::string label;
  double (*value)(const CampaignReport&);
  const char* format;
};

inline const std::vector<Row>& table_rows() {
  static const std::vector<Row> rows = {
      {"Completed dockings",
       [](const CampaignReport& r) { return static_cast<double>(r.total_tasks_completed); }, "%.0f"},
      {"Sequential CPU time (years)", [](const CampaignReport& r) { return r.total_cpu_years; },
       "%.3g"},
      {"Wall-clock duration (days)",
       [](const CampaignReport& r) { return r.wall_clock_seconds / kSecondsPerDay; }, "%.2f"},
      {"Grid jobs submitted",
       [](const CampaignReport& r) { return static_cast<double>(r.cumulative_grid_jobs); }, "%.0f"},
      {"Peak concurrent CPUs",
       [](const CampaignReport& r) { return static_cast<double>(r.max_concurrent_cpus); }, "%.0f"},
      {"Computing elements used",
       [](const CampaignReport& r) { return static_cast<double>(r.ce_count_used); }, "%.0f"},
      {"Crunching factor", [](const CampaignReport& r) { return r.crunching_factor; }, "%.1f"},
      {"Distribution efficiency (%)",
       [](const CampaignReport& r) { return 100.0 * r.distribution_efficiency; }, "%.1f"},
      {"Throughput (dockings per second)",
       [](const CampaignReport& r) { return r.throughput_tasks_per_second; }, "%.4g"},
      {"Seconds per docking", [](const CampaignReport& r) { return r.seconds_per_task; }, "%.4g"},
      {"Success rate, logged (%)", [](const CampaignReport& r) { return 100.0 * r.success_rate_logged; },
       "%.1f"},
      {"Success rate after output check (%)",
       [](const CampaignReport& r) { return 100.0 * r.success_rate_after_output_check; }, "%.1f"},
  };
  return rows;
}

inline std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

inline std::string pad(std::string s, std::size_t width, bool left) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

inline std::string table(const std::vector<std::string>& headers,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(headers.size(), 0);
  for (std::size_t c = 0; c < headers.size(); ++c) width[c] = headers[c].size();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out << "  ";
      out << pad(cells[c], width[c], c == 0);
    }
    out << "\n";
  };
  line(headers);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << "\n";
  for (const auto& row : rows) line(row);
  return out.str();
}

}  // namespace report_detail

inline std::string report_to_text(const CampaignReport& r, const std::string& title = "") {
  using namespace report_detail;
  std::vector<std::vector<std::string>> rows;
  for (const auto& row : table_rows()) rows.push_back({row.label, fmt(row.format, row.value(r))});
  return table({"", title.empty() ? r.mode : title}, rows);
}

/// Side-by-side table of two reports with a B - A column.
inline std::string compare_reports(const CampaignReport& a, const CampaignReport& b,
                                   const std::string& title_a = "A", const std::string& title_b = "B") {
  using namespace report_detail;
  std::vector<std::vector<std::string>> rows;
  for (const auto& row : table_rows()) {
    const double va = row.value(a);
    const double vb = row.value(b);
    auto delta = fmt(row.format, vb - va);
    if (vb - va > 0) delta = "+" + delta;
    rows.push_back({row.label, fmt(row.format, va), fmt(row.format, vb), delta});
  }
  return table({"", title_a, title_b, "delta"}, rows);
}

inline std::string emit_report(const CampaignReport& r, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: return report_to_json(r).dump(2) + "\n";
    case ReportFormat::Csv: return report_to_csv(r);
    case ReportFormat::Text: return report_to_text(r);
  }
  throw UnknownFormat("unknown report format");
}

inline std::string emit_report(const CampaignReport& r, std::string_view format) {
  return emit_report(r, parse_report_format(format));
}

// ---------------------------------------------------------------------------
// Registration ledger

inline std::string ledger_to_csv(const RegistrationLedger& ledger) {
  std::string out = "task_id,job_id,ce_id,primary_se,backup_se,bytes\n";
  for (const auto& e : ledger.entries) {
    out += std::to_string(e.task_id) + "," + std::to_string(e.job_id) + "," + std::to_string(e.ce_id) + "," +
           std::to_string(e.primary_se) + "," + std::to_string(e.backup_se) + "," + std::to_string(e.bytes) +
           "\n";
  }
  return out;
}

}  // namespace gridfarm
