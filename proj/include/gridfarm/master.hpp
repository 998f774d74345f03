#pragma once

#include <concepts>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gridfarm/core.hpp"
#include "gridfarm/errors.hpp"
#include "gridfarm/mock_dock.hpp"
#include "gridfarm/sim_kernel.hpp"

namespace gridfarm {

/// 128-bit worker session token.
struct SessionToken {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  std::string str() const {
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                  static_cast<unsigned long long>(lo));
    return buf;
  }
  static std::optional<SessionToken> parse(std::string_view s) {
    if (s.size() != 32) return std::nullopt;
    SessionToken t;
    for (std::size_t i = 0; i < 32; ++i) {
      const char c = s[i];
      std::uint64_t v;
      if (c >= '0' && c <= '9') v = static_cast<std::uint64_t>(c - '0');
      else if (c >= 'a' && c <= 'f') v = static_cast<std::uint64_t>(c - 'a' + 10);
      else return std::nullopt;
      auto& word = i < 16 ? t.hi : t.lo;
      word = (word << 4) | v;
    }
    return t;
  }
  auto operator<=>(const SessionToken&) const = default;
};

enum class WorkerState { Registering, Idle, Busy, Dead, Retired };

constexpr std::string_view to_string(WorkerState s) {
  switch (s) {
    case WorkerState::Registering: return "Registering";
    case WorkerState::Idle: return "Idle";
    case WorkerState::Busy: return "Busy";
    case WorkerState::Dead: return "Dead";
    case WorkerState::Retired: return "Retired";
  }
  return "?";
}

struct WorkerAgent {
  std::string worker_id;
  SessionToken session;
  WorkerState state = WorkerState::Registering;
  std::optional<TaskId> current_task;
  TimeMs last_heartbeat = 0;
  TimeMs registered_at = 0;
  std::uint64_t tasks_completed = 0;

  bool live() const { return state == WorkerState::Idle || state == WorkerState::Busy; }
};

struct TaskResult {
  TaskId task_id = 0;
  std::string worker_id;
  std::uint64_t score = 0;
  TimeMs cpu_consumed = 0;
  TimeMs produced_at = 0;
};

struct Assignment {
  TaskId task_id = 0;
};
struct Wait {};
struct Shutdown {};
using NextTask = std::variant<Assignment, Wait, Shutdown>;

enum class SubmitStatus { Stored, Stale };

struct Requeue {
  std::string worker_id;
  std::optional<TaskId> task;
};

/// Master decision record; exported in the same newline-JSON schema as the event log.
struct DecisionRecord {
  TimeMs t_ms = 0;
  std::uint64_t seq = 0;
  std::string kind;
  std::uint64_t subject_id = 0;
  nlohmann::json detail = nlohmann::json::object();
};

inline std::string to_ndjson(const std::vector<DecisionRecord>& log) {
  std::string out;
  for (const auto& d : log) {
    out += to_ndjson_line(d.t_ms, d.seq, d.kind, d.subject_id, d.detail);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Application plug-ins: planner, worker execution, integrator.

template <class P>
concept ApplicationPlugin = requires(P& p, std::span<const Task> tasks, const Task& task,
                                     const TaskResult& result) {
  { p.create_plan(tasks) } -> std::convertible_to<std::vector<TaskId>>;
  { p.execute_task(task) } -> std::convertible_to<std::uint64_t>;
  p.merge_result(result);
};

/// Plans tasks in id order, scores with the mock docking kernel and keeps an
/// order-independent digest of everything merged.
struct MockDockingApp {
  std::uint64_t merged = 0;
  std::uint64_t digest = 0;

  std::vector<TaskId> create_plan(std::span<const Task> tasks) const {
    std::vector<TaskId> plan;
    plan.reserve(tasks.size());
    for (const auto& t : tasks) plan.push_back(t.task_id);
    return plan;
  }
  std::uint64_t execute_task(const Task& task) const { return mock_score(task.task_id); }
  void merge_result(const TaskResult& r) {
    ++merged;
    digest ^= splitmix64(r.task_id ^ r.score);
  }
};

static_assert(ApplicationPlugin<MockDockingApp>);

/// The pull-model master: task queue, in-flight map, result store and worker registry.
///
/// A sequential state machine with explicit time inputs. The simulator drives it from
/// the event loop; the live server from its single I/O thread, so all mutations are
/// totally ordered in both settings.
class MasterState {
 public:
  using TokenSource = std::function<SessionToken()>;
  using MergeHook = std::function<void(const TaskResult&)>;

  MasterState(std::vector<TaskId> plan, HeartbeatSettings heartbeat, TokenSource tokens,
              MergeHook merge = {})
      : heartbeat_(heartbeat), tokens_(std::move(tokens)), merge_(std::move(merge)) {
    for (auto id : plan) {
      if (!known_.insert(id).second) throw ConfigError("plan lists task " + std::to_string(id) + " twice");
      pending_.push_back(id);
    }
  }

  SessionToken register_worker(const std::string& worker_id, TimeMs now) {
    if (auto it = live_by_id_.find(worker_id); it != live_by_id_.end()) {
      throw DuplicateWorker("worker " + worker_id + " is already registered");
    }
    SessionToken token = tokens_();
    while (by_session_.contains(token)) token = tokens_();
    const auto index = workers_.size();
    workers_.push_back(WorkerAgent{worker_id, token, WorkerState::Idle, std::nullopt, now, now, 0});
    by_session_.emplace(token, index);
    live_by_id_.emplace(worker_id, index);
    ++live_count_;
    max_live_ = std::max(max_live_, live_count_);
    record(now, "register", index, {{"worker", worker_id}});
    return token;
  }

  NextTask next_task(const SessionToken& session, TimeMs now) {
    auto& w = live_worker(session);
    w.last_heartbeat = now;
    if (w.state == WorkerState::Busy) {
      throw ProtocolError("worker " + w.worker_id + " asked for work while holding task " +
                          std::to_string(*w.current_task));
    }
    if (all_completed()) {
      retire(w, now);
      return Shutdown{};
    }
    if (pending_.empty()) return Wait{};
    const TaskId t = pending_.front();
    pending_.pop_front();
    in_flight_.emplace(t, index_of(session));
    w.state = WorkerState::Busy;
    w.current_task = t;
    record(now, "assign", t, {{"worker", w.worker_id}});
    return Assignment{t};
  }

  /// Stores the result once. Anything not in flight for this session is stale: it is
  /// acknowledged, logged and discarded.
  SubmitStatus submit_result(const SessionToken& session, const TaskResult& result, TimeMs now) {
    auto& w = live_worker(session);
    w.last_heartbeat = now;
    const auto it = in_flight_.find(result.task_id);
    if (it == in_flight_.end() || it->second != index_of(session)) {
      ++stale_;
      record(now, "stale", result.task_id, {{"worker", w.worker_id}});
      return SubmitStatus::Stale;
    }
    in_flight_.erase(it);
    results_.emplace(result.task_id, result);
    w.state = WorkerState::Idle;
    w.current_task.reset();
    ++w.tasks_completed;
    record(now, "complete", result.task_id, {{"worker", w.worker_id}});
    if (merge_) merge_(result);
    return SubmitStatus::Stored;
  }

  void heartbeat(const SessionToken& session, TimeMs now) { live_worker(session).last_heartbeat = now; }

  /// Graceful departure of an idle worker (e.g. its grid job reached its wall-time limit).
  void retire_worker(const SessionToken& session, TimeMs now) {
    auto& w = live_worker(session);
    if (w.state == WorkerState::Busy) {
      throw ProtocolError("worker " + w.worker_id + " cannot leave while holding a task");
    }
    retire(w, now);
  }

  /// Marks silent workers Dead and puts their tasks back at the head of the queue.
  std::vector<Requeue> detect_failures(TimeMs now) {
    std::vector<Requeue> out;
    const auto timeout = from_seconds(heartbeat_.timeout_s);
    for (std::size_t i = 0; i < workers_.size(); ++i) {
      auto& w = workers_[i];
      if (!w.live() || now - w.last_heartbeat < timeout) continue;
      std::optional<TaskId> task = w.current_task;
      w.state = WorkerState::Dead;
      w.current_task.reset();
      live_by_id_.erase(w.worker_id);
      --live_count_;
      ++dead_;
      record(now, "dead", i, {{"worker", w.worker_id}});
      if (task) {
        in_flight_.erase(*task);
        pending_.push_front(*task);
        ++requeues_;
        record(now, "requeue", *task, {{"worker", w.worker_id}});
      }
      out.push_back({w.worker_id, task});
    }
    return out;
  }

  bool all_completed() const { return results_.size() == known_.size(); }
  std::size_t task_count() const { return known_.size(); }
  const std::deque<TaskId>& pending() const { return pending_; }
  const std::map<TaskId, std::size_t>& in_flight() const { return in_flight_; }
  const std::map<TaskId, TaskResult>& results() const { return results_; }
  const std::vector<WorkerAgent>& workers() const { return workers_; }
  const std::vector<DecisionRecord>& decisions() const { return decisions_; }
  std::size_t live_workers() const { return live_count_; }
  std::size_t max_concurrent_workers() const { return max_live_; }
  std::size_t dead_workers() const { return dead_; }
  std::size_t requeues() const { return requeues_; }
  std::size_t stale_results() const { return stale_; }
  const HeartbeatSettings& heartbeat_settings() const { return heartbeat_; }

  const WorkerAgent* find(const SessionToken& session) const {
    const auto it = by_session_.find(session);
    return it == by_session_.end() ? nullptr : &workers_[it->second];
  }

  /// Pending, in-flight and completed partition the task set; no task is held twice.
  bool invariants_hold() const {
    std::set<TaskId> seen;
    for (auto t : pending_) {
      if (!seen.insert(t).second) return false;
    }
    for (const auto& [t, wi] : in_flight_) {
      if (!seen.insert(t).second) return false;
      const auto& w = workers_[wi];
      if (w.state != WorkerState::Busy || w.current_task != t) return false;
    }
    for (const auto& [t, r] : results_) {
      if (!seen.insert(t).second) return false;
    }
    if (seen != known_) return false;
    for (const auto& w : workers_) {
      if ((w.state == WorkerState::Busy) != w.current_task.has_value()) return false;
    }
    return true;
  }

 private:
  std::size_t index_of(const SessionToken& session) const { return by_session_.at(session); }

  WorkerAgent& live_worker(const SessionToken& session) {
    const auto it = by_session_.find(session);
    if (it == by_session_.end()) throw InvalidSession("unknown session " + session.str());
    auto& w = workers_[it->second];
    if (!w.live()) {
      throw InvalidSession("session " + session.str() + " of worker " + w.worker_id + " is " +
                           std::string(to_string(w.state)));
    }
    return w;
  }

  void retire(WorkerAgent& w, TimeMs now) {
    w.state = WorkerState::Retired;
    live_by_id_.erase(w.worker_id);
    --live_count_;
    record(now, "retire", by_session_.at(w.session), {{"worker", w.worker_id}});
  }

  void record(TimeMs now, std::string kind, std::uint64_t subject, nlohmann::json detail) {
    decisions_.push_back({now, decisions_.size(), std::move(kind), subject, std::move(detail)});
  }

  HeartbeatSettings heartbeat_;
  TokenSource tokens_;
  MergeHook merge_;
  std::set<TaskId> known_;
  std::deque<TaskId> pending_;
  std::map<TaskId, std::size_t> in_flight_;
  std::map<TaskId, TaskResult> results_;
  std::vector<WorkerAgent> workers_;
  std::map<SessionToken, std::size_t> by_session_;
  std::map<std::string, std::size_t> live_by_id_;
  std::vector<DecisionRecord> decisions_;
  std::size_t live_count_ = 0;
  std::size_t max_live_ = 0;
  std::size_t dead_ = 0;
  std::size_t requeues_ = 0;
  std::size_t stale_ = 0;
};

}  // namespace gridfarm
