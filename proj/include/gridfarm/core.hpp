#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "gridfarm/errors.hpp"

namespace gridfarm {

// Virtual time is kept in integer milliseconds; configs and reports use seconds.
using TimeMs = std::int64_t;

inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr double kSecondsPerYear = 365.25 * kSecondsPerDay;

constexpr double to_seconds(TimeMs t) { return static_cast<double>(t) / 1000.0; }
inline TimeMs from_seconds(double s) { return static_cast<TimeMs>(std::llround(s * 1000.0)); }

using TaskId = std::uint64_t;
using JobId = std::uint64_t;
using CeId = std::uint32_t;
using BrokerId = std::uint32_t;
using SeId = std::uint32_t;

enum class TaskState { Pending, Assigned, Running, Completed, Failed };
enum class JobState { Created, Submitted, Scheduled, Queued, Running, Done, Aborted };

enum class FailureClass {
  WorkloadManagement,
  DataManagement,
  Site,
  LicenseServer,
  Application,
  Unclassified,
  OutputTransferLastMinute,
};

inline constexpr std::size_t kFailureClassCount = 7;
inline constexpr std::array<FailureClass, kFailureClassCount> kAllFailureClasses = {
    FailureClass::WorkloadManagement, FailureClass::DataManagement,
    FailureClass::Site,               FailureClass::LicenseServer,
    FailureClass::Application,        FailureClass::Unclassified,
    FailureClass::OutputTransferLastMinute,
};

constexpr std::size_t index_of(FailureClass c) { return static_cast<std::size_t>(c); }

constexpr std::string_view to_string(FailureClass c) {
  switch (c) {
    case FailureClass::WorkloadManagement: return "WorkloadManagement";
    case FailureClass::DataManagement: return "DataManagement";
    case FailureClass::Site: return "Site";
    case FailureClass::LicenseServer: return "LicenseServer";
    case FailureClass::Application: return "Application";
    case FailureClass::Unclassified: return "Unclassified";
    case FailureClass::OutputTransferLastMinute: return "OutputTransferLastMinute";
  }
  return "?";
}

inline std::optional<FailureClass> parse_failure_class(std::string_view s) {
  for (auto c : kAllFailureClasses) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

constexpr std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::Created: return "Created";
    case JobState::Submitted: return "Submitted";
    case JobState::Scheduled: return "Scheduled";
    case JobState::Queued: return "Queued";
    case JobState::Running: return "Running";
    case JobState::Done: return "Done";
    case JobState::Aborted: return "Aborted";
  }
  return "?";
}

constexpr std::string_view to_string(TaskState s) {
  switch (s) {
    case TaskState::Pending: return "Pending";
    case TaskState::Assigned: return "Assigned";
    case TaskState::Running: return "Running";
    case TaskState::Completed: return "Completed";
    case TaskState::Failed: return "Failed";
  }
  return "?";
}

/// Success, or failure tagged with the class that caused it.
struct Outcome {
  std::optional<FailureClass> failure;

  static Outcome ok() { return {}; }
  static Outcome failed(FailureClass c) { return {c}; }
  bool success() const { return !failure.has_value(); }
  bool operator==(const Outcome&) const = default;
};

struct AttemptRecord {
  std::string executor_id;
  TimeMs start = 0;
  TimeMs end = 0;
  TimeMs cpu_consumed = 0;
  Outcome outcome;
};

struct Task {
  TaskId task_id = 0;
  TimeMs cpu_cost = 1;
  std::uint64_t input_bytes = 0;
  std::uint64_t output_bytes = 0;
  TaskState state = TaskState::Pending;
  std::vector<AttemptRecord> attempts;
};

constexpr bool is_legal_task_edge(TaskState from, TaskState to) {
  switch (from) {
    case TaskState::Pending: return to == TaskState::Assigned;
    case TaskState::Assigned: return to == TaskState::Running;
    case TaskState::Running: return to == TaskState::Completed || to == TaskState::Failed;
    case TaskState::Failed: return to == TaskState::Pending;
    case TaskState::Completed: return false;
  }
  return false;
}

inline void advance(Task& task, TaskState to) {
  if (!is_legal_task_edge(task.state, to)) {
    throw IllegalTransition("task " + std::to_string(task.task_id) + ": " +
                            std::string(to_string(task.state)) + " -> " +
                            std::string(to_string(to)));
  }
  task.state = to;
}

enum class JobKind { Payload, Pilot, Probe };

constexpr std::string_view to_string(JobKind k) {
  switch (k) {
    case JobKind::Payload: return "payload";
    case JobKind::Pilot: return "pilot";
    case JobKind::Probe: return "probe";
  }
  return "?";
}

struct GridJob {
  JobId job_id = 0;
  JobKind kind = JobKind::Payload;
  std::vector<TaskId> task_ids;
  std::optional<CeId> target_ce;
  JobState state = JobState::Created;
  std::map<JobState, TimeMs> timestamps;
  std::optional<FailureClass> failure_class;
  // Zero for a first submission, n for the n-th resubmission of the same tasks.
  std::uint32_t generation = 0;

  bool reached(JobState s) const { return timestamps.contains(s); }
};

constexpr bool is_legal_job_edge(JobState from, JobState to) {
  switch (from) {
    case JobState::Created: return to == JobState::Submitted;
    case JobState::Submitted: return to == JobState::Scheduled || to == JobState::Aborted;
    case JobState::Scheduled: return to == JobState::Queued || to == JobState::Aborted;
    case JobState::Queued: return to == JobState::Running || to == JobState::Aborted;
    case JobState::Running: return to == JobState::Done || to == JobState::Aborted;
    // Output check after a last-minute transfer error.
    case JobState::Done: return to == JobState::Aborted;
    case JobState::Aborted: return false;
  }
  return false;
}

inline TimeMs last_timestamp(const GridJob& job) {
  TimeMs last = std::numeric_limits<TimeMs>::min();
  for (const auto& [state, t] : job.timestamps) last = std::max(last, t);
  return last;
}

/// Pure state transition. Aborting requires a failure class; nothing else accepts one.
inline GridJob transition(GridJob job, JobState to, TimeMs at,
                          std::optional<FailureClass> failure = std::nullopt) {
  const auto edge = std::string(to_string(job.state)) + " -> " + std::string(to_string(to));
  if (!is_legal_job_edge(job.state, to)) {
    throw IllegalTransition("job " + std::to_string(job.job_id) + ": illegal edge " + edge);
  }
  if ((to == JobState::Aborted) != failure.has_value()) {
    throw IllegalTransition("job " + std::to_string(job.job_id) + ": edge " + edge +
                            (failure ? " must not carry a failure class"
                                     : " requires a failure class"));
  }
  if (job.state == JobState::Done && failure != FailureClass::OutputTransferLastMinute) {
    throw IllegalTransition("job " + std::to_string(job.job_id) + ": edge " + edge +
                            " is reserved for OutputTransferLastMinute");
  }
  if (!job.timestamps.empty() && at < last_timestamp(job)) {
    throw TimeRegression("job " + std::to_string(job.job_id) + ": " + edge + " at " +
                         std::to_string(at) + " ms precedes " +
                         std::to_string(last_timestamp(job)) + " ms");
  }
  job.state = to;
  job.timestamps[to] = at;
  job.failure_class = failure;
  return job;
}

// ---------------------------------------------------------------------------
// Campaign configuration

struct DurationModel {
  enum class Kind { Constant, Uniform, LogNormal };
  Kind kind = Kind::Constant;
  // Constant: a = value. Uniform: [a, b]. LogNormal: a = arithmetic mean, b = sigma of log.
  double a = 1.0;
  double b = 0.0;

  static DurationModel constant(double s) { return {Kind::Constant, s, 0.0}; }
  static DurationModel uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
  static DurationModel lognormal(double mean, double sigma) { return {Kind::LogNormal, mean, sigma}; }

  double mean() const {
    switch (kind) {
      case Kind::Constant: return a;
      case Kind::Uniform: return 0.5 * (a + b);
      case Kind::LogNormal: return a;
    }
    return a;
  }
  bool operator==(const DurationModel&) const = default;
};

struct Window {
  double start_s = 0;
  double end_s = 0;
  bool contains(TimeMs t) const { return t >= from_seconds(start_s) && t < from_seconds(end_s); }
  bool operator==(const Window&) const = default;
};

struct ComputingElementSpec {
  CeId id = 0;
  int cpu_slots = 1;
  int queue_limit = 1000;
  double speed = 1.0;
  // The information system always shows this CE as completely free.
  bool misreported = false;
  // Every job started here dies with a Site failure after this many seconds.
  std::optional<double> crash_after_s;
  std::vector<Window> outages;
  bool operator==(const ComputingElementSpec&) const = default;
};

struct BrokerSpec {
  BrokerId id = 0;
  int throttle_per_minute = 600;
  bool operator==(const BrokerSpec&) const = default;
};

struct InformationSystemSpec {
  double publish_interval_s = 0.0;
  bool operator==(const InformationSystemSpec&) const = default;
};

struct StorageElementSpec {
  SeId id = 0;
  double bandwidth_bytes_per_s = 100e6;
  double transfer_failure_rate = 0.0;
  bool operator==(const StorageElementSpec&) const = default;
};

struct LicenseServerSpec {
  std::optional<int> token_capacity;  // none: unlimited
  std::vector<Window> outages;
  bool operator==(const LicenseServerSpec&) const = default;
};

struct FabricSpec {
  std::vector<ComputingElementSpec> ces;
  std::vector<BrokerSpec> brokers;
  InformationSystemSpec information_system;
  std::vector<StorageElementSpec> ses;
  LicenseServerSpec license;

  int total_slots() const {
    int n = 0;
    for (const auto& ce : ces) n += ce.cpu_slots;
    return n;
  }
  bool operator==(const FabricSpec&) const = default;
};

/// Per-job outcome probabilities. success plus every class rate sums to one.
struct FailureModel {
  double success = 1.0;
  std::array<double, kFailureClassCount> rates{};

  double rate(FailureClass c) const { return rates[index_of(c)]; }
  FailureModel& set(FailureClass c, double r) {
    rates[index_of(c)] = r;
    return *this;
  }
  double total() const {
    double s = success;
    for (double r : rates) s += r;
    return s;
  }
  static FailureModel none() { return {}; }
  bool operator==(const FailureModel&) const = default;
};

enum class SchedulerMode { Push, Pull };
enum class ResubmissionMode { Automatic, Manual };

constexpr std::string_view to_string(SchedulerMode m) { return m == SchedulerMode::Push ? "push" : "pull"; }
constexpr std::string_view to_string(ResubmissionMode m) {
  return m == ResubmissionMode::Automatic ? "automatic" : "manual";
}

struct ResubmissionPolicy {
  ResubmissionMode mode = ResubmissionMode::Automatic;
  double manual_delay_s = 600.0;
  int blacklist_threshold = 3;

  static ResubmissionPolicy automatic() { return {}; }
  static ResubmissionPolicy manual(double delay_s, int threshold) {
    return {ResubmissionMode::Manual, delay_s, threshold};
  }
  bool operator==(const ResubmissionPolicy&) const = default;
};

struct HeartbeatSettings {
  double interval_s = 60.0;
  double timeout_s = 180.0;
  bool operator==(const HeartbeatSettings&) const = default;
};

struct PullSettings {
  int worker_count = 1;
  double worker_lifetime_s = 86400.0;
  double pull_latency_s = 1.0;
  double poll_interval_s = 30.0;
  // Submit a fresh worker agent whenever one ends while work remains.
  bool replace_workers = true;
  bool operator==(const PullSettings&) const = default;
};

struct CampaignConfig {
  SchedulerMode scheduler_mode = SchedulerMode::Push;
  std::uint64_t task_count = 1;
  DurationModel task_duration = DurationModel::constant(100.0);
  std::uint64_t job_granularity = 1;
  FabricSpec fabric;
  FailureModel failure_model;
  ResubmissionPolicy resubmission_policy;
  std::uint64_t seed = 1;
  std::optional<double> wall_clock_limit_s;

  // Submission-to-dispatch latency of a grid job.
  DurationModel scheduling_overhead = DurationModel::constant(0.0);
  bool license_required = false;
  std::uint64_t input_bytes_per_task = 0;
  std::uint64_t output_bytes_per_task = 0;
  std::uint64_t dataset_bytes = 0;
  HeartbeatSettings heartbeat;
  PullSettings pull;

  bool operator==(const CampaignConfig&) const = default;
};

struct Violation {
  std::string field;
  std::string rule;
  bool operator==(const Violation&) const = default;
};

namespace detail {

inline void check_duration(std::vector<Violation>& out, const std::string& field,
                           const DurationModel& d, bool allow_zero) {
  using K = DurationModel::Kind;
  const bool ok_a = allow_zero ? d.a >= 0 : d.a > 0;
  switch (d.kind) {
    case K::Constant:
      if (!ok_a) out.push_back({field, allow_zero ? "constant must be >= 0" : "constant must be > 0"});
      break;
    case K::Uniform:
      if (!ok_a || d.b < d.a) out.push_back({field, "uniform requires 0 < lo <= hi"});
      break;
    case K::LogNormal:
      if (!(d.a > 0) || d.b < 0) out.push_back({field, "lognormal requires mean > 0 and sigma >= 0"});
      break;
  }
}

inline void check_windows(std::vector<Violation>& out, const std::string& field,
                          const std::vector<Window>& ws) {
  for (std::size_t i = 0; i < ws.size(); ++i) {
    if (!(ws[i].start_s >= 0) || !(ws[i].end_s > ws[i].start_s)) {
      out.push_back({field + "[" + std::to_string(i) + "]", "window requires 0 <= start < end"});
    }
  }
}

inline std::string format_sum(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

/// Returns one entry per broken rule; empty means the config is usable.
inline std::vector<Violation> validate_config(const CampaignConfig& cfg) {
  std::vector<Violation> out;
  if (cfg.task_count == 0) out.push_back({"campaign.task_count", "must be > 0"});
  if (cfg.job_granularity < 1) out.push_back({"campaign.job_granularity", "must be >= 1"});
  detail::check_duration(out, "campaign.task_duration", cfg.task_duration, false);
  detail::check_duration(out, "campaign.scheduling_overhead", cfg.scheduling_overhead, true);
  if (cfg.wall_clock_limit_s && !(*cfg.wall_clock_limit_s > 0)) {
    out.push_back({"campaign.wall_clock_limit", "must be > 0 when set"});
  }

  const auto& fm = cfg.failure_model;
  if (!(fm.success >= 0 && fm.success <= 1)) out.push_back({"failures.success", "rate must be in [0, 1]"});
  for (auto c : kAllFailureClasses) {
    const double r = fm.rate(c);
    if (!(r >= 0 && r <= 1)) {
      out.push_back({"failures." + std::string(to_string(c)), "rate must be in [0, 1]"});
    }
  }
  if (std::abs(fm.total() - 1.0) > 1e-9) {
    out.push_back({"failures", "success plus class rates must sum to 1.0, got " +
                                   detail::format_sum(fm.total())});
  }

  const auto& fab = cfg.fabric;
  if (fab.ces.empty()) out.push_back({"fabric.ces", "at least one computing element required"});
  std::set<CeId> ce_ids;
  for (std::size_t i = 0; i < fab.ces.size(); ++i) {
    const auto& ce = fab.ces[i];
    const auto f = "fabric.ces[" + std::to_string(i) + "]";
    if (!ce_ids.insert(ce.id).second) out.push_back({f + ".id", "duplicate ce id"});
    if (ce.cpu_slots < 1) out.push_back({f + ".cpu_slots", "must be >= 1"});
    if (ce.queue_limit < 0) out.push_back({f + ".queue_limit", "must be >= 0"});
    if (!(ce.speed > 0 && ce.speed <= 1.0)) out.push_back({f + ".speed", "must be in (0, 1]"});
    if (ce.crash_after_s && !(*ce.crash_after_s > 0)) out.push_back({f + ".crash_after", "must be > 0"});
    detail::check_windows(out, f + ".outages", ce.outages);
  }
  if (fab.brokers.empty()) out.push_back({"fabric.brokers", "at least one resource broker required"});
  std::set<BrokerId> rb_ids;
  for (std::size_t i = 0; i < fab.brokers.size(); ++i) {
    const auto f = "fabric.brokers[" + std::to_string(i) + "]";
    if (!rb_ids.insert(fab.brokers[i].id).second) out.push_back({f + ".id", "duplicate broker id"});
    if (fab.brokers[i].throttle_per_minute < 1) out.push_back({f + ".throttle", "must be >= 1"});
  }
  if (!(fab.information_system.publish_interval_s >= 0)) {
    out.push_back({"fabric.information_system.publish_interval", "must be >= 0"});
  }
  if (cfg.scheduler_mode == SchedulerMode::Push && fab.ses.size() < 2) {
    out.push_back({"fabric.ses", "push mode needs two storage elements (primary and backup)"});
  }
  std::set<SeId> se_ids;
  for (std::size_t i = 0; i < fab.ses.size(); ++i) {
    const auto& se = fab.ses[i];
    const auto f = "fabric.ses[" + std::to_string(i) + "]";
    if (!se_ids.insert(se.id).second) out.push_back({f + ".id", "duplicate se id"});
    if (!(se.bandwidth_bytes_per_s > 0)) out.push_back({f + ".bandwidth", "must be > 0"});
    if (!(se.transfer_failure_rate >= 0 && se.transfer_failure_rate <= 1)) {
      out.push_back({f + ".transfer_failure_rate", "must be in [0, 1]"});
    }
  }
  if (fab.license.token_capacity && *fab.license.token_capacity < 0) {
    out.push_back({"fabric.license.capacity", "must be >= 0"});
  }
  detail::check_windows(out, "fabric.license.outages", fab.license.outages);

  const auto& pol = cfg.resubmission_policy;
  if (pol.mode == ResubmissionMode::Manual) {
    if (!(pol.manual_delay_s >= 0)) out.push_back({"policy.delay", "must be >= 0"});
    if (pol.blacklist_threshold < 1) out.push_back({"policy.blacklist_threshold", "must be >= 1"});
  }
  if (!(cfg.heartbeat.interval_s > 0)) out.push_back({"policy.heartbeat_interval", "must be > 0"});
  if (!(cfg.heartbeat.timeout_s > cfg.heartbeat.interval_s)) {
    out.push_back({"policy.heartbeat_timeout", "must exceed the heartbeat interval"});
  }
  if (cfg.scheduler_mode == SchedulerMode::Pull) {
    if (cfg.pull.worker_count < 1) out.push_back({"pull.workers", "must be >= 1"});
    if (!(cfg.pull.worker_lifetime_s > 0)) out.push_back({"pull.worker_lifetime", "must be > 0"});
    if (!(cfg.pull.pull_latency_s >= 0)) out.push_back({"pull.pull_latency", "must be >= 0"});
    if (!(cfg.pull.poll_interval_s > 0)) out.push_back({"pull.poll_interval", "must be > 0"});
  }
  return out;
}

}  // namespace gridfarm
