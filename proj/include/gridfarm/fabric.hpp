#pragma once

#include <deque>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gridfarm/core.hpp"
#include "gridfarm/rng.hpp"

namespace gridfarm {

/// Runtime state of one computing element.
class ComputingElementSim {
 public:
  explicit ComputingElementSim(ComputingElementSpec spec) : spec_(std::move(spec)) {}

  const ComputingElementSpec& spec() const { return spec_; }
  CeId id() const { return spec_.id; }
  bool up() const { return up_; }
  void set_up(bool up) { up_ = up; }

  int running() const { return running_; }
  int free_slots() const { return up_ ? spec_.cpu_slots - running_ : 0; }
  const std::deque<JobId>& waiting() const { return waiting_; }
  bool queue_full() const { return static_cast<int>(waiting_.size()) >= spec_.queue_limit; }

  void enqueue(JobId job) { waiting_.push_back(job); }
  bool can_start() const { return up_ && running_ < spec_.cpu_slots && !waiting_.empty(); }
  JobId start_next() {
    const JobId j = waiting_.front();
    waiting_.pop_front();
    ++running_;
    return j;
  }
  void release_slot() { --running_; }
  // Drops every waiting job; running jobs are released one by one by their owner.
  std::deque<JobId> drain_waiting() { return std::exchange(waiting_, {}); }

 private:
  ComputingElementSpec spec_;
  bool up_ = true;
  int running_ = 0;
  std::deque<JobId> waiting_;
};

struct Advertisement {
  bool up = true;
  int free_slots = 0;
  int queue_depth = 0;
  int queue_limit = 0;

  bool accepts_more() const { return free_slots > 0 || queue_depth < queue_limit; }
  bool operator==(const Advertisement&) const = default;
};

struct Snapshot {
  TimeMs published_at = 0;
  std::vector<Advertisement> ces;  // parallel to the fabric's CE list
};

/// What the information system would publish right now.
inline Snapshot observe(std::span<const ComputingElementSim> ces, TimeMs at) {
  Snapshot s;
  s.published_at = at;
  s.ces.reserve(ces.size());
  for (const auto& ce : ces) {
    Advertisement ad;
    ad.queue_limit = ce.spec().queue_limit;
    if (ce.spec().misreported) {
      ad.up = true;
      ad.free_slots = ce.spec().cpu_slots;
      ad.queue_depth = 0;
    } else if (!ce.up()) {
      ad.up = false;
      ad.free_slots = 0;
      ad.queue_depth = ce.spec().queue_limit;
    } else {
      ad.free_slots = ce.free_slots();
      ad.queue_depth = static_cast<int>(ce.waiting().size());
    }
    s.ces.push_back(ad);
  }
  return s;
}

/// Periodically published CE directory; frozen between publishes.
class InformationSystemSim {
 public:
  explicit InformationSystemSim(InformationSystemSpec spec) : spec_(spec) {}

  TimeMs publish_interval() const { return from_seconds(spec_.publish_interval_s); }
  bool stale() const { return publish_interval() > 0; }

  const Snapshot& publish_snapshot(std::span<const ComputingElementSim> ces, TimeMs at) {
    current_ = observe(ces, at);
    return current_;
  }

  /// The view a broker gets at `at`. With a zero interval it is always the truth.
  Snapshot view(std::span<const ComputingElementSim> ces, TimeMs at) const {
    if (!stale()) return observe(ces, at);
    return current_;
  }

 private:
  InformationSystemSpec spec_;
  Snapshot current_;
};

/// Accepts at most `throttle` submissions in any 60 s window.
class ResourceBrokerSim {
 public:
  static constexpr TimeMs kWindow = 60'000;

  explicit ResourceBrokerSim(BrokerSpec spec) : spec_(spec) {}
  const BrokerSpec& spec() const { return spec_; }

  /// Earliest time >= `at` a submission is accepted; the slot is reserved. Reservation
  /// times are non-decreasing per broker, so the sliding-window bound holds over the
  /// whole log.
  TimeMs reserve(TimeMs at) {
    at = std::max(at, last_);
    const auto limit = static_cast<std::size_t>(spec_.throttle_per_minute);
    while (!accepted_.empty() && accepted_.front() <= at - kWindow) accepted_.pop_front();
    if (accepted_.size() >= limit) {
      at = std::max(at, accepted_[accepted_.size() - limit] + kWindow);
      while (!accepted_.empty() && accepted_.front() <= at - kWindow) accepted_.pop_front();
    }
    accepted_.push_back(at);
    last_ = at;
    return at;
  }

 private:
  BrokerSpec spec_;
  std::deque<TimeMs> accepted_;
  TimeMs last_ = 0;
};

/// Rank by advertised free slots, ties to the lowest ce id. Returns the index into the
/// snapshot, or nullopt (NoMatch) when every eligible CE advertises a full queue.
inline std::optional<std::size_t> match_job(std::span<const ComputingElementSim> ces,
                                            const Snapshot& snapshot,
                                            const std::set<CeId>& excluded = {}) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < ces.size(); ++i) {
    if (excluded.contains(ces[i].id())) continue;
    const auto& ad = snapshot.ces[i];
    if (!ad.up || !ad.accepts_more()) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& cur = snapshot.ces[*best];
    if (ad.free_slots > cur.free_slots ||
        (ad.free_slots == cur.free_slots && ces[i].id() < ces[*best].id())) {
      best = i;
    }
  }
  return best;
}

class StorageElementSim {
 public:
  explicit StorageElementSim(StorageElementSpec spec) : spec_(spec) {}
  const StorageElementSpec& spec() const { return spec_; }
  SeId id() const { return spec_.id; }

  TimeMs transfer_time(std::uint64_t bytes) const {
    return from_seconds(static_cast<double>(bytes) / spec_.bandwidth_bytes_per_s);
  }

 private:
  StorageElementSpec spec_;
};

struct LicenseDecision {
  bool granted = false;
  std::optional<FailureClass> refusal;  // LicenseServer when refused
};

class LicenseServerSim {
 public:
  explicit LicenseServerSim(LicenseServerSpec spec) : spec_(std::move(spec)) {}
  const LicenseServerSpec& spec() const { return spec_; }
  int in_use() const { return in_use_; }

  bool in_outage(TimeMs at) const {
    return std::any_of(spec_.outages.begin(), spec_.outages.end(),
                       [&](const Window& w) { return w.contains(at); });
  }

  /// A token is granted iff the server is under capacity and outside every outage window.
  LicenseDecision acquire_license(TimeMs at) {
    const bool full = spec_.token_capacity && in_use_ >= *spec_.token_capacity;
    if (full || in_outage(at)) return {false, FailureClass::LicenseServer};
    ++in_use_;
    return {true, std::nullopt};
  }

  void release() { --in_use_; }

 private:
  LicenseServerSpec spec_;
  int in_use_ = 0;
};

// ---------------------------------------------------------------------------
// Job execution

/// Drawn per job attempt: the class (if any) and where in the runtime a mid-run failure hits.
struct FailureDraw {
  std::optional<FailureClass> failure;
  double fraction = 1.0;
};

inline FailureDraw draw_outcome(const FailureModel& model, RngStream& rng) {
  std::array<double, kFailureClassCount + 1> weights{};
  weights[0] = model.success;
  for (std::size_t i = 0; i < kFailureClassCount; ++i) weights[i + 1] = model.rates[i];
  const auto pick = rng.categorical(weights);
  FailureDraw d;
  if (pick > 0) d.failure = kAllFailureClasses[pick - 1];
  d.fraction = rng.uniform01();
  return d;
}

/// Where a failure class strikes in a job's life.
enum class FailureStage { Scheduling, Start, MidRun, Transfer };

constexpr FailureStage stage_of(FailureClass c) {
  switch (c) {
    case FailureClass::WorkloadManagement: return FailureStage::Scheduling;
    case FailureClass::DataManagement:
    case FailureClass::LicenseServer: return FailureStage::Start;
    case FailureClass::Site:
    case FailureClass::Application:
    case FailureClass::Unclassified: return FailureStage::MidRun;
    case FailureClass::OutputTransferLastMinute: return FailureStage::Transfer;
  }
  return FailureStage::MidRun;
}

/// The deterministic result of running a job that has reached a free slot.
struct ExecutionPlan {
  TimeMs end = 0;
  TimeMs cpu_consumed = 0;
  // Portion of each task's cost actually burned, in job order.
  std::vector<TimeMs> task_cpu;
  Outcome outcome;
  // Compute finished; output still has to reach a storage element.
  bool needs_transfer = false;
};

inline TimeMs scaled_cost(TimeMs cost, double speed) {
  return static_cast<TimeMs>(std::llround(static_cast<double>(cost) / speed));
}

/// Runs the tasks back to back on one slot of `ce` starting at `start`.
/// Scheduling-time classes must be handled before the job reaches a slot.
inline ExecutionPlan execute_job(const ComputingElementSpec& ce, std::span<const TimeMs> task_costs,
                                 const FailureDraw& draw, TimeMs start) {
  std::vector<TimeMs> full;
  full.reserve(task_costs.size());
  TimeMs runtime = 0;
  for (auto c : task_costs) {
    full.push_back(scaled_cost(c, ce.speed));
    runtime += full.back();
  }

  std::optional<TimeMs> fail_at;
  std::optional<FailureClass> cls;
  if (draw.failure) {
    switch (stage_of(*draw.failure)) {
      case FailureStage::Start:
        fail_at = 0;
        cls = draw.failure;
        break;
      case FailureStage::MidRun:
        fail_at = static_cast<TimeMs>(std::floor(draw.fraction * static_cast<double>(runtime)));
        cls = draw.failure;
        break;
      case FailureStage::Scheduling:
        fail_at = 0;
        cls = draw.failure;
        break;
      case FailureStage::Transfer: break;
    }
  }
  if (ce.crash_after_s) {
    const auto crash = from_seconds(*ce.crash_after_s);
    if (crash < runtime && (!fail_at || crash < *fail_at)) {
      fail_at = crash;
      cls = FailureClass::Site;
    }
  }

  ExecutionPlan plan;
  if (fail_at) {
    plan.end = start + *fail_at;
    plan.cpu_consumed = *fail_at;
    plan.outcome = Outcome::failed(*cls);
    TimeMs left = *fail_at;
    for (auto c : full) {
      const auto used = std::min(c, left);
      plan.task_cpu.push_back(used);
      left -= used;
    }
    return plan;
  }
  plan.end = start + runtime;
  plan.cpu_consumed = runtime;
  plan.task_cpu = std::move(full);
  plan.needs_transfer = true;
  plan.outcome = draw.failure ? Outcome::failed(*draw.failure) : Outcome::ok();
  return plan;
}

/// Mutable fabric state owned by a simulation run.
struct FabricState {
  std::vector<ComputingElementSim> ces;
  std::vector<ResourceBrokerSim> brokers;
  InformationSystemSim information_system;
  std::vector<StorageElementSim> ses;
  LicenseServerSim license;

  explicit FabricState(const FabricSpec& spec)
      : information_system(spec.information_system), license(spec.license) {
    for (const auto& c : spec.ces) ces.emplace_back(c);
    for (const auto& b : spec.brokers) brokers.emplace_back(b);
    for (const auto& s : spec.ses) ses.emplace_back(s);
  }

  std::size_t ce_index(CeId id) const {
    for (std::size_t i = 0; i < ces.size(); ++i) {
      if (ces[i].id() == id) return i;
    }
    throw ConfigError("unknown ce id " + std::to_string(id));
  }
};

}  // namespace gridfarm
