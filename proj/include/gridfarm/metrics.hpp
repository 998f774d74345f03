#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridfarm/campaign.hpp"
#include "gridfarm/core.hpp"
#include "gridfarm/errors.hpp"
#include "gridfarm/sim_kernel.hpp"

namespace gridfarm {

inline constexpr int kReportVersion = 1;

inline double crunching_factor(double total_cpu_seconds, double wall_seconds) {
  if (!(wall_seconds > 0.0)) throw ZeroWallClock("wall-clock time must be positive");
  return total_cpu_seconds / wall_seconds;
}

inline double distribution_efficiency(double crunching, double max_concurrent) {
  if (!(max_concurrent >= 1.0)) throw ZeroWorkers("max concurrent CPUs must be at least 1");
  return crunching / max_concurrent;
}

struct Throughput {
  double tasks_per_second = 0.0;
  double seconds_per_task = 0.0;
};

inline Throughput throughput(double completed_tasks, double wall_seconds) {
  if (!(wall_seconds > 0.0)) throw ZeroWallClock("wall-clock time must be positive");
  Throughput t;
  t.tasks_per_second = completed_tasks / wall_seconds;
  t.seconds_per_task = completed_tasks > 0.0 ? wall_seconds / completed_tasks : 0.0;
  return t;
}

struct SuccessDecomposition {
  std::uint64_t terminated_jobs = 0;
  std::uint64_t done_jobs = 0;      // reached Done (the logged success)
  std::uint64_t checked_jobs = 0;   // Done and output landed
  std::array<std::uint64_t, kFailureClassCount> aborted_by_class{};
  double logged_rate = 0.0;
  double after_check_rate = 0.0;
  std::map<FailureClass, double> attribution;  // only classes that occurred

  std::uint64_t aborted_jobs() const {
    std::uint64_t n = 0;
    for (auto c : aborted_by_class) n += c;
    return n;
  }
};

/// Classifies every terminated payload or pilot job in the log. Probe jobs and jobs still
/// in flight at the cutoff are left out. A payload job that computed is terminated by its
/// output TransferEnd; every other job by its JobEnd.
inline SuccessDecomposition success_decomposition(const EventLog& log) {
  SuccessDecomposition d;
  std::set<JobId> computed;
  auto count_abort = [&](FailureClass c) {
    ++d.terminated_jobs;
    ++d.aborted_by_class[index_of(c)];
  };
  for (const auto& ev : log) {
    if (ev.kind == EventKind::JobEnd) {
      const auto& det = ev.detail;
      if (det.at("role") == "probe") continue;
      const auto outcome = det.at("outcome").get<std::string>();
      if (outcome == "computed") {
        computed.insert(ev.subject_id);
      } else if (outcome == "exited") {
        ++d.terminated_jobs;
        ++d.done_jobs;
        ++d.checked_jobs;
      } else {
        count_abort(*parse_failure_class(det.at("class").get<std::string>()));
      }
    } else if (ev.kind == EventKind::TransferEnd && ev.detail.at("phase") == "output") {
      if (!computed.erase(ev.subject_id)) continue;
      ++d.done_jobs;
      if (ev.detail.at("ok").get<bool>()) {
        ++d.terminated_jobs;
        ++d.checked_jobs;
      } else {
        count_abort(FailureClass::OutputTransferLastMinute);
      }
    }
  }
  if (d.terminated_jobs > 0) {
    const auto n = static_cast<double>(d.terminated_jobs);
    d.logged_rate = static_cast<double>(d.done_jobs) / n;
    d.after_check_rate = static_cast<double>(d.checked_jobs) / n;
    for (auto c : kAllFailureClasses) {
      if (const auto k = d.aborted_by_class[index_of(c)]) d.attribution[c] = static_cast<double>(k) / n;
    }
  }
  return d;
}

/// Share of broker matches whose chosen CE was advertised in a different up/down state
/// than it really was at dispatch time. 0 when nothing was matched.
inline double wrong_data_fraction(const EventLog& log) {
  std::size_t matched = 0;
  std::size_t wrong = 0;
  for (const auto& ev : log) {
    if (ev.kind != EventKind::JobDispatch || ev.detail.value("result", "") != "matched") continue;
    ++matched;
    if (ev.detail.at("adv_up").get<bool>() != ev.detail.at("true_up").get<bool>()) ++wrong;
  }
  return matched == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(matched);
}

/// Largest number of simultaneously held slots. Intervals are half-open, so a job that
/// ends at t and one that starts at t never overlap.
inline std::size_t max_concurrent(std::span<const Occupancy> occupancy) {
  std::vector<std::pair<TimeMs, int>> edges;
  edges.reserve(occupancy.size() * 2);
  for (const auto& o : occupancy) {
    if (o.end <= o.start) continue;
    edges.emplace_back(o.start, +1);
    edges.emplace_back(o.end, -1);
  }
  std::sort(edges.begin(), edges.end());
  std::size_t best = 0;
  long cur = 0;
  for (const auto& [t, delta] : edges) {
    cur += delta;
    best = std::max(best, static_cast<std::size_t>(std::max(cur, 0L)));
  }
  return best;
}

struct CampaignReport {
  int report_version = kReportVersion;
  std::string mode;
  bool complete = false;
  std::uint64_t seed = 0;

  std::uint64_t task_count = 0;
  std::uint64_t total_tasks_completed = 0;
  std::uint64_t tasks_unfinished = 0;
  double total_cpu_seconds = 0.0;
  double total_cpu_years = 0.0;
  double wasted_cpu_seconds = 0.0;
  double wall_clock_seconds = 0.0;
  std::uint64_t cumulative_grid_jobs = 0;
  std::uint64_t max_concurrent_cpus = 0;
  std::uint64_t ce_count_used = 0;
  double crunching_factor = 0.0;
  double distribution_efficiency = 0.0;
  double throughput_tasks_per_second = 0.0;
  double seconds_per_task = 0.0;
  double success_rate_logged = 0.0;
  double success_rate_after_output_check = 0.0;
  std::map<FailureClass, double> failure_attribution;
  std::uint64_t aborted_jobs = 0;
  std::uint64_t bytes_produced = 0;

  std::uint64_t requeues = 0;
  std::uint64_t dead_workers = 0;
  std::uint64_t stale_results = 0;

  bool operator==(const CampaignReport&) const = default;
};

inline CampaignReport compute_report(const CampaignResult& r) {
  CampaignReport rep;
  rep.mode = std::string(to_string(r.config.scheduler_mode));
  rep.complete = r.complete;
  rep.seed = r.config.seed;
  rep.task_count = r.tasks.size();

  TimeMs useful = 0;
  TimeMs spent = 0;
  for (const auto& t : r.tasks) {
    for (const auto& a : t.attempts) {
      spent += a.cpu_consumed;
      if (a.outcome.success()) useful += a.cpu_consumed;
    }
    if (t.state == TaskState::Completed) {
      ++rep.total_tasks_completed;
      rep.bytes_produced += t.output_bytes;
    }
  }
  rep.tasks_unfinished = rep.task_count - rep.total_tasks_completed;
  rep.total_cpu_seconds = to_seconds(useful);
  rep.total_cpu_years = rep.total_cpu_seconds / kSecondsPerYear;
  rep.wasted_cpu_seconds = to_seconds(spent - useful);
  rep.wall_clock_seconds = to_seconds(r.end_time - r.production_start);

  std::set<CeId> used;
  for (const auto& o : r.occupancy) used.insert(o.ce);
  rep.ce_count_used = used.size();
  for (const auto& j : r.jobs) {
    if (j.kind != JobKind::Probe) ++rep.cumulative_grid_jobs;
  }
  rep.max_concurrent_cpus = max_concurrent(r.occupancy);

  if (rep.wall_clock_seconds > 0.0) {
    rep.crunching_factor = crunching_factor(rep.total_cpu_seconds, rep.wall_clock_seconds);
    const auto tp = throughput(static_cast<double>(rep.total_tasks_completed), rep.wall_clock_seconds);
    rep.throughput_tasks_per_second = tp.tasks_per_second;
    rep.seconds_per_task = tp.seconds_per_task;
  }
  if (rep.max_concurrent_cpus > 0) {
    rep.distribution_efficiency =
        distribution_efficiency(rep.crunching_factor, static_cast<double>(rep.max_concurrent_cpus));
  }

  const auto sd = success_decomposition(r.events);
  rep.success_rate_logged = sd.logged_rate;
  rep.success_rate_after_output_check = sd.after_check_rate;
  rep.failure_attribution = sd.attribution;
  rep.aborted_jobs = sd.aborted_jobs();

  rep.requeues = r.requeues;
  rep.dead_workers = r.dead_workers;
  rep.stale_results = r.stale_results;
  return rep;
}

}  // namespace gridfarm
