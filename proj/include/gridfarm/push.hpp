#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "gridfarm/campaign.hpp"
#include "gridfarm/core.hpp"
#include "gridfarm/grid_runtime.hpp"

namespace gridfarm {

inline constexpr double kProbeSeconds = 1.0;
inline constexpr int kMaxRegistrationAttempts = 10;

enum class CampaignPhase { Install, Test, Production };

/// Number of jobs and size of the last one for a split; no materialisation.
struct SplitShape {
  std::uint64_t jobs = 0;
  std::uint64_t last_job_size = 0;
};

inline SplitShape split_shape(std::uint64_t task_count, std::uint64_t granularity) {
  if (granularity < 1) throw InvalidGranularity("granularity must be >= 1");
  if (task_count < 1) throw InvalidGranularity("task_count must be >= 1");
  const auto jobs = (task_count + granularity - 1) / granularity;
  return {jobs, task_count - (jobs - 1) * granularity};
}

/// Job skeletons (state Created) holding consecutive task ids, `granularity` per job.
inline std::vector<GridJob> split_tasks(std::uint64_t task_count, std::uint64_t granularity) {
  const auto shape = split_shape(task_count, granularity);
  std::vector<GridJob> jobs(shape.jobs);
  TaskId next = 0;
  for (std::uint64_t j = 0; j < shape.jobs; ++j) {
    jobs[j].job_id = j;
    const auto n = j + 1 == shape.jobs ? shape.last_job_size : granularity;
    jobs[j].task_ids.resize(n);
    std::iota(jobs[j].task_ids.begin(), jobs[j].task_ids.end(), next);
    next += n;
  }
  return jobs;
}

/// Task durations are drawn per task id from the campaign seed.
inline std::vector<Task> make_tasks(const CampaignConfig& cfg) {
  std::vector<Task> tasks(cfg.task_count);
  for (std::uint64_t i = 0; i < cfg.task_count; ++i) {
    RngStream rng(cfg.seed, "duration", i);
    tasks[i].task_id = i;
    tasks[i].cpu_cost = sample_ms(cfg.task_duration, rng, 1);
    tasks[i].input_bytes = cfg.input_bytes_per_task;
    tasks[i].output_bytes = cfg.output_bytes_per_task;
  }
  return tasks;
}

/// Splits `cpu` across tasks in run order: earlier tasks are burned first.
inline std::vector<TimeMs> burn_in_order(std::span<const TimeMs> full, TimeMs cpu) {
  std::vector<TimeMs> out;
  out.reserve(full.size());
  for (auto c : full) {
    const auto used = std::min(c, cpu);
    out.push_back(used);
    cpu -= used;
  }
  return out;
}

/// Push scheduler: install, test, then throttled production through the
/// brokers with automatic or operator-style resubmission.
class PushCampaign : public GridRuntime<PushCampaign> {
  friend class GridRuntime<PushCampaign>;

 public:
  explicit PushCampaign(CampaignConfig cfg)
      : GridRuntime(std::move(cfg)), tasks_(make_tasks(cfg_)),
        consecutive_site_(fabric_.ces.size(), 0), blacklist_pending_(fabric_.ces.size(), false) {}

  const std::vector<Task>& tasks() const { return tasks_; }
  CampaignPhase phase() const { return phase_; }

  /// Replicates the dataset to every storage element.
  std::vector<StagingEntry> run_install_phase() {
    if (production_started_) throw Error("install phase requested after production started");
    phase_ = CampaignPhase::Install;
    staging_.clear();
    waiting_on_ = fabric_.ses.size();
    for (const auto& se : fabric_.ses) {
      auto rng = stream("staging", se.id());
      const bool ok = !rng.bernoulli(se.spec().transfer_failure_rate);
      kernel_.schedule(kernel_.now() + se.transfer_time(cfg_.dataset_bytes), EventKind::TransferEnd,
                       se.id(),
                       {{"phase", "install"}, {"se", se.id()}, {"ok", ok}, {"bytes", cfg_.dataset_bytes}});
    }
    if (waiting_on_ > 0) run();
    installed_ = true;
    return staging_;
  }

  /// One probe job per CE; CEs whose probe aborts are kept out of production matchmaking.
  std::vector<ProbeEntry> run_test_phase() {
    if (!installed_) throw Error("test phase requires a completed install phase");
    phase_ = CampaignPhase::Test;
    probes_.clear();
    waiting_on_ = fabric_.ces.size();
    for (std::size_t i = 0; i < fabric_.ces.size(); ++i) {
      const auto probe = create_job(JobKind::Probe, {}, 0);
      probe_ce_.emplace(probe, i);
      dispatch_direct(probe, i);
    }
    if (waiting_on_ > 0) run();
    tested_ = true;
    return probes_;
  }

  CampaignResult run_production() {
    if (!installed_ || !tested_) throw Error("production requires install and test phases");
    phase_ = CampaignPhase::Production;
    production_started_ = true;
    production_start_ = kernel_.now();
    if (excluded_.size() < fabric_.ces.size()) {
      start_publishing();
      for (auto& skeleton : split_tasks(cfg_.task_count, cfg_.job_granularity)) {
        submit(create_job(JobKind::Payload, std::move(skeleton.task_ids), 0));
      }
      std::optional<TimeMs> limit;
      if (cfg_.wall_clock_limit_s) limit = production_start_ + from_seconds(*cfg_.wall_clock_limit_s);
      run(limit);
      if (!finished_) end_time_ = limit ? *limit : kernel_.now();
    } else {
      end_time_ = production_start_;
    }
    return result();
  }

  /// Registers each completed task's output once, with a backup replica on a second SE.
  RegistrationLedger collect_outputs() const {
    RegistrationLedger ledger;
    const auto nse = fabric_.ses.size();
    for (const auto& run : jobs_) {
      if (run.job.kind != JobKind::Payload || run.job.state != JobState::Done) continue;
      const auto primary_idx = output_se_index(run.job.job_id);
      const auto backup_idx = (primary_idx + 1) % nse;
      for (TaskId t : run.job.task_ids) {
        auto rng = stream("registration", t);
        int attempts = 1;
        while (rng.bernoulli(fabric_.ses[backup_idx].spec().transfer_failure_rate)) {
          ++ledger.registration_failures;
          if (++attempts > kMaxRegistrationAttempts) {
            throw RegistrationFailure("could not replicate output of task " + std::to_string(t));
          }
        }
        ledger.entries.push_back({t, run.job.job_id, fabric_.ces[*run.ce].id(),
                                  fabric_.ses[primary_idx].id(), fabric_.ses[backup_idx].id(),
                                  tasks_[t].output_bytes});
        ledger.bytes_registered += tasks_[t].output_bytes;
      }
    }
    return ledger;
  }

 private:
  void run(std::optional<TimeMs> limit = std::nullopt) {
    kernel_.run_until(limit, [this](Kernel& k, Event& ev) { handle(k, ev); });
  }

  std::size_t output_se_index(JobId j) const { return j % fabric_.ses.size(); }

  CampaignResult result() const {
    CampaignResult r;
    r.config = cfg_;
    r.tasks = tasks_;
    r.jobs = grid_jobs();
    r.occupancy = occupancy();
    r.events = kernel_.log();
    r.production_start = production_start_;
    r.end_time = end_time_;
    r.complete = finished_;
    r.staging = staging_;
    r.probes = probes_;
    r.ledger = collect_outputs();
    return r;
  }

  // -- GridRuntime hooks ----------------------------------------------------

  void on_running(JobId j) {
    auto& run = jobs_[j];
    const auto& spec = fabric_.ces[*run.ce].spec();
    if (run.job.kind == JobKind::Probe) {
      const TimeMs probe = from_seconds(kProbeSeconds);
      auto plan = execute_job(spec, std::span<const TimeMs>(&probe, 1), FailureDraw{}, kernel_.now());
      plan.needs_transfer = false;
      schedule_end(j, std::move(plan), "probe");
      return;
    }
    std::vector<TimeMs> costs;
    costs.reserve(run.job.task_ids.size());
    for (TaskId t : run.job.task_ids) {
      advance(tasks_[t], TaskState::Assigned);
      advance(tasks_[t], TaskState::Running);
      costs.push_back(tasks_[t].cpu_cost);
    }
    auto plan = execute_job(spec, costs, run.draw, kernel_.now());
    const auto stage = plan.needs_transfer ? "compute" : "mid_run";
    schedule_end(j, std::move(plan), stage);
  }

  void on_killed(JobId) {}

  void on_job_end(JobId j, Event& ev) {
    auto& run = jobs_[j];
    if (run.job.kind == JobKind::Probe) {
      finish_probe(j);
      return;
    }
    if (run.plan.needs_transfer) {
      const auto se_idx = output_se_index(j);
      const auto& se = fabric_.ses[se_idx];
      std::uint64_t bytes = 0;
      for (TaskId t : run.job.task_ids) bytes += tasks_[t].output_bytes;
      auto rng = stream("transfer", j);
      const bool se_failed = rng.bernoulli(se.spec().transfer_failure_rate);
      const bool ok = run.plan.outcome.success() && !se_failed;
      kernel_.schedule(kernel_.now() + se.transfer_time(bytes), EventKind::TransferEnd, j,
                       {{"phase", "output"}, {"se", se.id()}, {"ok", ok}, {"bytes", bytes}});
      return;
    }
    const auto cls = *run.plan.outcome.failure;
    run.job = transition(run.job, JobState::Aborted, kernel_.now(), cls);
    if (run.started) fail_tasks(run, cls);
    if (cls == FailureClass::Site && run.ce) note_site_failure(*run.ce);
    (void)ev;
    resubmit(run.job.task_ids, run.job.generation);
  }

  void handle_other(Event& ev) {
    switch (ev.kind) {
      case EventKind::TransferEnd:
        if (ev.detail.at("phase") == "install") {
          finish_staging(ev);
        } else {
          finish_transfer(ev.subject_id, ev.detail.at("ok").get<bool>());
        }
        break;
      case EventKind::OperatorAction:
        if (ev.detail.at("action") == "resubmit") {
          submit(ev.subject_id);
        } else {
          const auto idx = fabric_.ce_index(ev.detail.at("ce").get<CeId>());
          excluded_.insert(fabric_.ces[idx].id());
          blacklist_pending_[idx] = false;
        }
        break;
      default: break;
    }
  }

  // -- phases ---------------------------------------------------------------

  void finish_staging(const Event& ev) {
    const auto se = ev.detail.at("se").get<SeId>();
    const bool ok = ev.detail.at("ok").get<bool>();
    StagingEntry e;
    e.se = se;
    e.staging_time = kernel_.now();
    e.ok = ok;
    if (!ok) e.failure = FailureClass::DataManagement;
    staging_.push_back(e);
    if (--waiting_on_ == 0) kernel_.stop();
  }

  void finish_probe(JobId j) {
    auto& run = jobs_[j];
    const bool passed = run.plan.outcome.success();
    if (passed) {
      run.job = transition(run.job, JobState::Done, kernel_.now());
    } else {
      run.job = transition(run.job, JobState::Aborted, kernel_.now(), *run.plan.outcome.failure);
    }
    const auto idx = probe_ce_.at(j);
    probes_.push_back({fabric_.ces[idx].id(), j, passed});
    if (!passed) excluded_.insert(fabric_.ces[idx].id());
    if (--waiting_on_ == 0) kernel_.stop();
  }

  void finish_transfer(JobId j, bool ok) {
    auto& run = jobs_[j];
    run.job = transition(run.job, JobState::Done, kernel_.now());
    if (!ok) {
      run.job = transition(run.job, JobState::Aborted, kernel_.now(), FailureClass::OutputTransferLastMinute);
      fail_tasks(run, FailureClass::OutputTransferLastMinute);
      resubmit(run.job.task_ids, run.job.generation);
      return;
    }
    const auto exec = "ce" + std::to_string(fabric_.ces[*run.ce].id());
    for (std::size_t i = 0; i < run.job.task_ids.size(); ++i) {
      auto& task = tasks_[run.job.task_ids[i]];
      task.attempts.push_back({exec, *run.started, *run.ended, run.plan.task_cpu[i], Outcome::ok()});
      advance(task, TaskState::Completed);
    }
    consecutive_site_[*run.ce] = 0;
    completed_ += run.job.task_ids.size();
    if (completed_ == tasks_.size()) {
      finished_ = true;
      end_time_ = kernel_.now();
      kernel_.stop();
    }
  }

  void fail_tasks(JobRun& run, FailureClass cls) {
    std::vector<TimeMs> full;
    for (TaskId t : run.job.task_ids) full.push_back(scaled_cost(tasks_[t].cpu_cost, fabric_.ces[*run.ce].spec().speed));
    const auto shares = run.plan.task_cpu.size() == full.size() ? run.plan.task_cpu
                                                                : burn_in_order(full, run.plan.cpu_consumed);
    const auto exec = "ce" + std::to_string(fabric_.ces[*run.ce].id());
    for (std::size_t i = 0; i < run.job.task_ids.size(); ++i) {
      auto& task = tasks_[run.job.task_ids[i]];
      if (task.state == TaskState::Pending) {
        // Aborted before the payload started.
        continue;
      }
      task.attempts.push_back({exec, *run.started, *run.ended, shares[i], Outcome::failed(cls)});
      advance(task, TaskState::Failed);
    }
  }

  void note_site_failure(std::size_t ce_idx) {
    ++consecutive_site_[ce_idx];
    const auto& pol = cfg_.resubmission_policy;
    if (pol.mode != ResubmissionMode::Manual) return;
    const auto id = fabric_.ces[ce_idx].id();
    if (consecutive_site_[ce_idx] < pol.blacklist_threshold || excluded_.contains(id) ||
        blacklist_pending_[ce_idx]) {
      return;
    }
    std::size_t eligible = 0;
    for (std::size_t i = 0; i < fabric_.ces.size(); ++i) {
      if (!excluded_.contains(fabric_.ces[i].id()) && !blacklist_pending_[i]) ++eligible;
    }
    if (eligible <= 1) return;
    blacklist_pending_[ce_idx] = true;
    kernel_.schedule(kernel_.now(), EventKind::OperatorAction, id,
                     {{"action", "blacklist"}, {"ce", id}});
  }

  void resubmit(const std::vector<TaskId>& task_ids, std::uint32_t generation) {
    for (TaskId t : task_ids) {
      if (tasks_[t].state == TaskState::Failed) advance(tasks_[t], TaskState::Pending);
    }
    const auto next = create_job(JobKind::Payload, task_ids, generation + 1);
    const auto& pol = cfg_.resubmission_policy;
    if (pol.mode == ResubmissionMode::Automatic) {
      submit(next);
    } else {
      kernel_.schedule(kernel_.now() + from_seconds(pol.manual_delay_s), EventKind::OperatorAction, next,
                       {{"action", "resubmit"}});
    }
  }

  std::vector<Task> tasks_;
  std::vector<int> consecutive_site_;
  std::vector<bool> blacklist_pending_;
  std::map<JobId, std::size_t> probe_ce_;
  std::vector<StagingEntry> staging_;
  std::vector<ProbeEntry> probes_;
  CampaignPhase phase_ = CampaignPhase::Install;
  std::size_t waiting_on_ = 0;
  bool installed_ = false;
  bool tested_ = false;
  bool production_started_ = false;
  std::uint64_t completed_ = 0;
  TimeMs production_start_ = 0;
  TimeMs end_time_ = 0;
};

/// Install, test and production in one call.
inline CampaignResult run_push_campaign(const CampaignConfig& cfg) {
  PushCampaign campaign(cfg);
  campaign.run_install_phase();
  campaign.run_test_phase();
  return campaign.run_production();
}

}  // namespace gridfarm
