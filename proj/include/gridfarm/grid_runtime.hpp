#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridfarm/campaign.hpp"
#include "gridfarm/core.hpp"
#include "gridfarm/fabric.hpp"
#include "gridfarm/rng.hpp"
#include "gridfarm/sim_kernel.hpp"

namespace gridfarm {

/// One grid job as the simulator tracks it.
struct JobRun {
  GridJob job;
  FailureDraw draw;
  std::optional<std::size_t> ce;  // index into FabricState::ces once matched
  std::optional<TimeMs> started;
  std::optional<TimeMs> ended;
  std::optional<std::uint64_t> pending_end;
  bool holds_slot = false;
  bool holds_license = false;
  ExecutionPlan plan;
};

/// Submission pipeline shared by the push and pull schedulers:
/// broker throttling, scheduling overhead, matchmaking on the information system's view,
/// CE queues and slots, license tokens, site outages.
///
/// Derived supplies on_running(JobId), on_job_end(JobId, Event&), on_killed(JobId) and
/// handle_other(Event&).
template <class Derived>
class GridRuntime {
 public:
  explicit GridRuntime(CampaignConfig cfg) : cfg_(std::move(cfg)), fabric_(cfg_.fabric) {
    for (std::size_t i = 0; i < fabric_.ces.size(); ++i) {
      for (const auto& w : fabric_.ces[i].spec().outages) {
        kernel_.schedule(from_seconds(w.start_s), EventKind::SiteDown, fabric_.ces[i].id());
        kernel_.schedule(from_seconds(w.end_s), EventKind::SiteUp, fabric_.ces[i].id());
      }
    }
    for (const auto& w : cfg_.fabric.license.outages) {
      kernel_.schedule(from_seconds(w.start_s), EventKind::LicenseOutageStart, 0);
      kernel_.schedule(from_seconds(w.end_s), EventKind::LicenseOutageEnd, 0);
    }
  }

  const CampaignConfig& config() const { return cfg_; }
  const Kernel& kernel() const { return kernel_; }
  const FabricState& fabric() const { return fabric_; }
  const std::vector<JobRun>& jobs() const { return jobs_; }
  const std::set<CeId>& excluded() const { return excluded_; }

 protected:
  Derived& derived() { return static_cast<Derived&>(*this); }

  RngStream stream(std::string_view label, std::uint64_t index = 0) const {
    return RngStream(cfg_.seed, label, index);
  }

  JobId create_job(JobKind kind, std::vector<TaskId> tasks, std::uint32_t generation) {
    JobRun run;
    run.job.job_id = jobs_.size();
    run.job.kind = kind;
    run.job.task_ids = std::move(tasks);
    run.job.generation = generation;
    if (kind != JobKind::Probe) {
      auto rng = stream("outcome", run.job.job_id);
      run.draw = draw_outcome(cfg_.failure_model, rng);
    }
    jobs_.push_back(std::move(run));
    return jobs_.back().job.job_id;
  }

  /// Hands the job to the next broker round-robin; accepted under its throttle.
  void submit(JobId j) {
    auto& rb = fabric_.brokers[next_broker_++ % fabric_.brokers.size()];
    const auto at = rb.reserve(kernel_.now());
    kernel_.schedule(at, EventKind::JobSubmission, j, {{"rb", rb.spec().id}});
  }

  /// Probes skip the brokers and go straight to one CE.
  void dispatch_direct(JobId j, std::size_t ce_index) {
    jobs_[j].job = transition(jobs_[j].job, JobState::Submitted, kernel_.now());
    kernel_.schedule(kernel_.now(), EventKind::JobDispatch, j,
                     {{"direct", true}, {"ce", fabric_.ces[ce_index].id()}});
  }

  void abort_now(JobId j, FailureClass cls, std::string_view stage) {
    auto& run = jobs_[j];
    if (run.pending_end) kernel_.cancel(*run.pending_end);
    const TimeMs cpu = run.started ? kernel_.now() - *run.started : 0;
    run.plan = ExecutionPlan{kernel_.now(), cpu, {}, Outcome::failed(cls), false};
    run.pending_end = kernel_.schedule(kernel_.now(), EventKind::JobEnd, j, end_detail(j, run.plan, stage));
  }

  nlohmann::json end_detail(JobId j, const ExecutionPlan& plan, std::string_view stage) const {
    const auto& run = jobs_[j];
    nlohmann::json d;
    d["role"] = to_string(run.job.kind);
    d["ce"] = run.ce ? nlohmann::json(fabric_.ces[*run.ce].id()) : nlohmann::json(nullptr);
    d["cpu_ms"] = plan.cpu_consumed;
    // A last-minute transfer failure only shows up at TransferEnd.
    if (plan.needs_transfer) {
      d["outcome"] = "computed";
    } else if (plan.outcome.success()) {
      d["outcome"] = "exited";
    } else {
      d["outcome"] = "aborted";
      d["class"] = to_string(*plan.outcome.failure);
    }
    d["stage"] = stage;
    return d;
  }

  void schedule_end(JobId j, ExecutionPlan plan, std::string_view stage) {
    auto& run = jobs_[j];
    if (run.pending_end) kernel_.cancel(*run.pending_end);
    auto detail = end_detail(j, plan, stage);
    run.pending_end = kernel_.schedule(plan.end, EventKind::JobEnd, j, std::move(detail));
    run.plan = std::move(plan);
  }

  void start_publishing() {
    if (fabric_.information_system.stale()) {
      kernel_.schedule(kernel_.now(), EventKind::SnapshotPublish, 0);
    }
  }

  void handle(Kernel&, Event& ev) {
    switch (ev.kind) {
      case EventKind::JobSubmission: on_submission(ev.subject_id); break;
      case EventKind::JobDispatch: on_dispatch(ev.subject_id, ev); break;
      case EventKind::JobStart: on_start(ev.subject_id); break;
      case EventKind::JobEnd: on_end(ev.subject_id, ev); break;
      case EventKind::SnapshotPublish: on_publish(ev); break;
      case EventKind::SiteDown: on_site(ev.subject_id, false); break;
      case EventKind::SiteUp: on_site(ev.subject_id, true); break;
      case EventKind::LicenseOutageStart:
      case EventKind::LicenseOutageEnd: break;
      default: derived().handle_other(ev); break;
    }
  }

  void try_start(std::size_t ce_index) {
    auto& ce = fabric_.ces[ce_index];
    while (ce.can_start()) {
      const JobId j = ce.start_next();
      jobs_[j].holds_slot = true;
      kernel_.schedule(kernel_.now(), EventKind::JobStart, j, {{"ce", ce.id()}});
    }
  }

  std::vector<Occupancy> occupancy() const {
    std::vector<Occupancy> out;
    for (const auto& r : jobs_) {
      if (r.job.kind == JobKind::Probe || !r.started || !r.ended) continue;
      out.push_back({r.job.job_id, fabric_.ces[*r.ce].id(), r.job.kind, *r.started, *r.ended});
    }
    return out;
  }

  std::vector<GridJob> grid_jobs() const {
    std::vector<GridJob> out;
    out.reserve(jobs_.size());
    for (const auto& r : jobs_) out.push_back(r.job);
    return out;
  }

  CampaignConfig cfg_;
  Kernel kernel_;
  FabricState fabric_;
  std::vector<JobRun> jobs_;
  std::set<CeId> excluded_;
  bool finished_ = false;

 private:
  void on_submission(JobId j) {
    auto& run = jobs_[j];
    run.job = transition(run.job, JobState::Submitted, kernel_.now());
    auto rng = stream("overhead", j);
    const auto overhead = sample_ms(cfg_.scheduling_overhead, rng);
    kernel_.schedule(kernel_.now() + overhead, EventKind::JobDispatch, j);
  }

  void on_dispatch(JobId j, Event& ev) {
    auto& run = jobs_[j];
    if (run.draw.failure == FailureClass::WorkloadManagement) {
      ev.detail["result"] = "scheduling_failure";
      abort_now(j, FailureClass::WorkloadManagement, "scheduling");
      return;
    }
    std::size_t idx;
    if (ev.detail.contains("direct")) {
      idx = fabric_.ce_index(ev.detail["ce"].get<CeId>());
    } else {
      const auto view = fabric_.information_system.view(fabric_.ces, kernel_.now());
      const auto match = match_job(fabric_.ces, view, excluded_);
      if (!match) {
        ev.detail["result"] = "no_match";
        abort_now(j, FailureClass::WorkloadManagement, "no_match");
        return;
      }
      idx = *match;
      const auto& ad = view.ces[idx];
      const auto& ce = fabric_.ces[idx];
      ev.detail["result"] = "matched";
      ev.detail["ce"] = ce.id();
      ev.detail["adv_up"] = ad.up;
      ev.detail["adv_free"] = ad.free_slots;
      ev.detail["true_up"] = ce.up();
      ev.detail["true_free"] = ce.free_slots();
    }
    run.ce = idx;
    run.job.target_ce = fabric_.ces[idx].id();
    run.job = transition(run.job, JobState::Scheduled, kernel_.now());

    auto& ce = fabric_.ces[idx];
    if (!ce.up()) {
      abort_now(j, FailureClass::Site, "ce_down");
      return;
    }
    if (ce.free_slots() == 0 && ce.queue_full()) {
      abort_now(j, FailureClass::Site, "queue_limit");
      return;
    }
    run.job = transition(run.job, JobState::Queued, kernel_.now());
    ce.enqueue(j);
    try_start(idx);
  }

  void on_start(JobId j) {
    auto& run = jobs_[j];
    run.job = transition(run.job, JobState::Running, kernel_.now());
    run.started = kernel_.now();
    if (!fabric_.ces[*run.ce].up()) {
      abort_now(j, FailureClass::Site, "ce_down");
      return;
    }
    if (run.draw.failure == FailureClass::LicenseServer) {
      abort_now(j, FailureClass::LicenseServer, "license_refused");
      return;
    }
    if (cfg_.license_required && run.job.kind == JobKind::Payload) {
      const auto decision = fabric_.license.acquire_license(kernel_.now());
      if (!decision.granted) {
        abort_now(j, FailureClass::LicenseServer, "license_refused");
        return;
      }
      run.holds_license = true;
    }
    if (run.draw.failure == FailureClass::DataManagement) {
      abort_now(j, FailureClass::DataManagement, "input_staging");
      return;
    }
    derived().on_running(j);
  }

  void on_end(JobId j, Event& ev) {
    auto& run = jobs_[j];
    run.pending_end.reset();
    run.ended = kernel_.now();
    if (run.holds_slot) {
      fabric_.ces[*run.ce].release_slot();
      run.holds_slot = false;
    }
    if (run.holds_license) {
      fabric_.license.release();
      run.holds_license = false;
    }
    const auto ce = run.ce;
    // on_job_end may create jobs and reallocate jobs_; `run` is dead past this point.
    derived().on_job_end(j, ev);
    if (ce) try_start(*ce);
  }

  void on_publish(Event& ev) {
    const auto& snap = fabric_.information_system.publish_snapshot(fabric_.ces, kernel_.now());
    auto ads = nlohmann::json::array();
    for (std::size_t i = 0; i < snap.ces.size(); ++i) {
      ads.push_back({{"ce", fabric_.ces[i].id()},
                     {"up", snap.ces[i].up},
                     {"free", snap.ces[i].free_slots},
                     {"depth", snap.ces[i].queue_depth}});
    }
    ev.detail["ces"] = std::move(ads);
    if (!finished_) {
      kernel_.schedule(kernel_.now() + fabric_.information_system.publish_interval(),
                       EventKind::SnapshotPublish, 0);
    }
  }

  void on_site(CeId id, bool up) {
    const auto idx = fabric_.ce_index(id);
    auto& ce = fabric_.ces[idx];
    ce.set_up(up);
    if (up) {
      try_start(idx);
      return;
    }
    for (JobId j : ce.drain_waiting()) abort_now(j, FailureClass::Site, "ce_down");
    for (auto& run : jobs_) {
      if (run.ce != idx || !run.started || run.ended) continue;
      derived().on_killed(run.job.job_id);
      abort_now(run.job.job_id, FailureClass::Site, "ce_down");
    }
  }

  std::size_t next_broker_ = 0;
};

}  // namespace gridfarm
