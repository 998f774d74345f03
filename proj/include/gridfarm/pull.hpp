#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridfarm/campaign.hpp"
#include "gridfarm/core.hpp"
#include "gridfarm/grid_runtime.hpp"
#include "gridfarm/master.hpp"
#include "gridfarm/push.hpp"

namespace gridfarm {

/// Pull scheduler: pilot jobs on the simulated grid that fetch tasks from a master.
///
/// Worker agents are themselves grid jobs (pilots). Once a pilot reaches a CPU slot it
/// registers with the master, pulls one task at a time and returns each result, until the
/// master answers Shutdown or its wall-time budget runs out. Silent workers are declared
/// Dead after the heartbeat timeout and their task goes back to the head of the queue.
template <ApplicationPlugin App = MockDockingApp>
class PullCampaign : public GridRuntime<PullCampaign<App>> {
  using Base = GridRuntime<PullCampaign<App>>;
  friend Base;

 public:
  explicit PullCampaign(CampaignConfig cfg, App app = {})
      : Base(std::move(cfg)),
        tasks_(make_tasks(this->cfg_)),
        app_(std::move(app)),
        master_(app_.create_plan(tasks_), this->cfg_.heartbeat, session_source(this->cfg_.seed),
                [this](const TaskResult& r) { app_.merge_result(r); }) {}

  /// Kills the n-th initially submitted worker at `at` (or as soon as it starts, if later).
  void inject_worker_death(std::size_t ordinal, TimeMs at) { kills_[ordinal] = at; }

  CampaignResult run() {
    auto& k = this->kernel_;
    production_start_ = k.now();
    this->start_publishing();
    for (int i = 0; i < this->cfg_.pull.worker_count; ++i) submit_pilot(0);
    schedule_master_tick();
    std::optional<TimeMs> limit;
    if (this->cfg_.wall_clock_limit_s) limit = production_start_ + from_seconds(*this->cfg_.wall_clock_limit_s);
    k.run_until(limit, [this](Kernel& kk, Event& ev) { this->handle(kk, ev); });
    if (!this->finished_) end_time_ = limit ? *limit : k.now();
    return result();
  }

  const MasterState& master() const { return master_; }
  const App& app() const { return app_; }
  const std::vector<Task>& tasks() const { return tasks_; }

 private:
  struct Pilot {
    std::string worker_id;
    std::optional<SessionToken> session;
    bool alive = false;
    TimeMs expires_at = 0;
    FailureClass death_class = FailureClass::Unclassified;
    std::optional<TaskId> task;
    TimeMs task_started = 0;
    std::optional<std::uint64_t> task_seq, poll_seq, heartbeat_seq, death_seq;
    bool shutdown = false;
  };

  static MasterState::TokenSource session_source(std::uint64_t seed) {
    return [rng = RngStream(seed, "session")]() mutable {
      SessionToken t;
      t.hi = rng.next_u64();
      t.lo = rng.next_u64();
      return t;
    };
  }

  void submit_pilot(std::uint32_t generation) {
    const auto j = this->create_job(JobKind::Pilot, {}, generation);
    pilots_[j].worker_id = "w" + std::to_string(j);
    ++outstanding_;
    this->submit(j);
  }

  void schedule_master_tick() {
    this->kernel_.schedule(this->kernel_.now() + from_seconds(this->cfg_.heartbeat.interval_s),
                           EventKind::HeartbeatDue, 0, {{"target", "master"}});
  }

  CampaignResult result() const {
    CampaignResult r;
    r.config = this->cfg_;
    r.tasks = tasks_;
    r.jobs = this->grid_jobs();
    r.occupancy = this->occupancy();
    r.events = this->kernel_.log();
    r.decisions = master_.decisions();
    r.production_start = production_start_;
    r.end_time = end_time_;
    r.complete = this->finished_;
    r.requeues = master_.requeues();
    r.dead_workers = master_.dead_workers();
    r.stale_results = master_.stale_results();
    r.merged_results = master_.results().size();
    return r;
  }

  TimeMs now() const { return this->kernel_.now(); }

  // -- GridRuntime hooks ----------------------------------------------------

  void on_running(JobId j) {
    auto& run = this->jobs_[j];
    auto& p = pilots_.at(j);
    const auto& spec = this->fabric_.ces[*run.ce].spec();
    p.session = master_.register_worker(p.worker_id, now());
    p.alive = true;
    const auto lifetime = from_seconds(this->cfg_.pull.worker_lifetime_s);
    p.expires_at = now() + lifetime;

    std::optional<TimeMs> death_at;
    if (run.draw.failure) {
      p.death_class = *run.draw.failure;
      death_at = now() + static_cast<TimeMs>(run.draw.fraction * static_cast<double>(lifetime));
    }
    if (spec.crash_after_s) {
      const auto crash = now() + from_seconds(*spec.crash_after_s);
      if (!death_at || crash < *death_at) {
        death_at = crash;
        p.death_class = FailureClass::Site;
      }
    }
    if (auto it = kills_.find(j); it != kills_.end() && run.job.generation == 0) {
      const auto kill = std::max(now(), it->second);
      if (!death_at || kill < *death_at) {
        death_at = kill;
        p.death_class = FailureClass::Unclassified;
      }
    }
    if (death_at) p.death_seq = this->kernel_.schedule(*death_at, EventKind::WorkerDeath, j);
    p.heartbeat_seq = this->kernel_.schedule(now() + from_seconds(this->cfg_.heartbeat.interval_s),
                                             EventKind::HeartbeatDue, j, {{"target", "worker"}});
    pull(j);
  }

  void on_killed(JobId j) {
    auto& p = pilots_.at(j);
    if (!p.alive) return;
    p.death_class = FailureClass::Site;
    silence(j);
  }

  void on_job_end(JobId j, Event&) {
    auto& run = this->jobs_[j];
    auto& p = pilots_.at(j);
    if (p.alive) silence(j);
    if (run.plan.outcome.success()) {
      run.job = transition(run.job, JobState::Done, now());
    } else {
      run.job = transition(run.job, JobState::Aborted, now(), *run.plan.outcome.failure);
    }
    --outstanding_;
    if (!p.shutdown && !master_.all_completed() && this->cfg_.pull.replace_workers) {
      submit_pilot(run.job.generation + 1);
    }
    maybe_stop();
  }

  void handle_other(Event& ev) {
    switch (ev.kind) {
      case EventKind::TaskEnd: finish_task(ev.detail.at("pilot").get<JobId>(), ev); break;
      case EventKind::WorkerPoll: {
        auto& p = pilots_.at(ev.subject_id);
        p.poll_seq.reset();
        if (p.alive) pull(ev.subject_id);
        break;
      }
      case EventKind::WorkerDeath: {
        auto& p = pilots_.at(ev.subject_id);
        p.death_seq.reset();
        if (!p.alive) break;
        silence(ev.subject_id);
        this->abort_now(ev.subject_id, p.death_class, "worker_death");
        break;
      }
      case EventKind::HeartbeatDue:
        if (ev.detail.at("target") == "master") {
          master_tick();
        } else {
          auto& p = pilots_.at(ev.subject_id);
          p.heartbeat_seq.reset();
          if (!p.alive) break;
          master_.heartbeat(*p.session, now());
          p.heartbeat_seq = this->kernel_.schedule(now() + from_seconds(this->cfg_.heartbeat.interval_s),
                                                   EventKind::HeartbeatDue, ev.subject_id,
                                                   {{"target", "worker"}});
        }
        break;
      default: break;
    }
  }

  // -- worker agent behaviour -------------------------------------------------

  void pull(JobId j) {
    auto& p = pilots_.at(j);
    if (now() >= p.expires_at && !master_.all_completed()) {
      master_.retire_worker(*p.session, now());
      exit_pilot(j);
      return;
    }
    const auto next = master_.next_task(*p.session, now());
    if (const auto* a = std::get_if<Assignment>(&next)) {
      auto& task = tasks_[a->task_id];
      advance(task, TaskState::Assigned);
      advance(task, TaskState::Running);
      const auto& spec = this->fabric_.ces[*this->jobs_[j].ce].spec();
      p.task = a->task_id;
      p.task_started = now() + from_seconds(this->cfg_.pull.pull_latency_s);
      const auto cpu = scaled_cost(task.cpu_cost, spec.speed);
      p.task_seq = this->kernel_.schedule(p.task_started + cpu, EventKind::TaskEnd, a->task_id,
                                          {{"pilot", j}, {"cpu_ms", cpu}});
    } else if (std::holds_alternative<Wait>(next)) {
      p.poll_seq = this->kernel_.schedule(now() + from_seconds(this->cfg_.pull.poll_interval_s),
                                          EventKind::WorkerPoll, j);
    } else {
      p.shutdown = true;
      exit_pilot(j);
    }
  }

  void finish_task(JobId j, Event& ev) {
    const TaskId t = ev.subject_id;
    auto& p = pilots_.at(j);
    p.task_seq.reset();
    p.task.reset();
    auto& task = tasks_[t];
    const auto cpu = now() - p.task_started;
    TaskResult result{t, p.worker_id, app_.execute_task(task), cpu, now()};
    const bool stored = master_.submit_result(*p.session, result, now()) == SubmitStatus::Stored;
    ev.detail["stored"] = stored;
    if (stored) {
      task.attempts.push_back({p.worker_id, p.task_started, now(), cpu, Outcome::ok()});
      advance(task, TaskState::Completed);
      if (master_.all_completed()) {
        this->finished_ = true;
        end_time_ = now();
      }
    }
    pull(j);
  }

  void exit_pilot(JobId j) {
    silence(j);
    const auto start = *this->jobs_[j].started;
    this->schedule_end(j, ExecutionPlan{now(), now() - start, {}, Outcome::ok(), false}, "exit");
  }

  /// Stops every pending worker activity. An interrupted task keeps its master state
  /// (Busy) until the heartbeat timeout fires.
  void silence(JobId j) {
    auto& p = pilots_.at(j);
    auto& k = this->kernel_;
    for (auto* seq : {&p.task_seq, &p.poll_seq, &p.heartbeat_seq, &p.death_seq}) {
      if (*seq) k.cancel(**seq);
      seq->reset();
    }
    if (p.task) {
      const auto start = std::min(p.task_started, now());
      tasks_[*p.task].attempts.push_back(
          {p.worker_id, start, now(), now() - start, Outcome::failed(p.death_class)});
      p.task.reset();
    }
    p.alive = false;
  }

  void master_tick() {
    for (const auto& rq : master_.detect_failures(now())) {
      if (!rq.task) continue;
      advance(tasks_[*rq.task], TaskState::Failed);
      advance(tasks_[*rq.task], TaskState::Pending);
    }
    if (!(this->finished_ && outstanding_ == 0)) schedule_master_tick();
    maybe_stop();
  }

  void maybe_stop() {
    // With replacement off, the last pilot leaving ends the campaign whatever its state.
    if (outstanding_ == 0 && (this->finished_ || !this->cfg_.pull.replace_workers)) this->kernel_.stop();
  }

  std::vector<Task> tasks_;
  App app_;
  MasterState master_;
  std::map<JobId, Pilot> pilots_;
  std::map<std::size_t, TimeMs> kills_;
  std::size_t outstanding_ = 0;
  TimeMs production_start_ = 0;
  TimeMs end_time_ = 0;
};

inline CampaignResult run_pull_campaign(const CampaignConfig& cfg) {
  PullCampaign<> campaign(cfg);
  return campaign.run();
}

}  // namespace gridfarm
