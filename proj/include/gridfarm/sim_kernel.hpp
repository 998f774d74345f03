#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gridfarm/core.hpp"
#include "gridfarm/errors.hpp"
#include "gridfarm/rng.hpp"

namespace gridfarm {

enum class EventKind {
  JobSubmission,
  SnapshotPublish,
  JobDispatch,
  JobStart,
  JobEnd,
  TransferEnd,
  HeartbeatDue,
  WorkerDeath,
  OperatorAction,
  LicenseOutageStart,
  LicenseOutageEnd,
  SiteDown,
  SiteUp,
  TaskEnd,
  WorkerPoll,
};

inline constexpr std::array kAllEventKinds = {
    EventKind::JobSubmission,      EventKind::SnapshotPublish,  EventKind::JobDispatch,
    EventKind::JobStart,           EventKind::JobEnd,           EventKind::TransferEnd,
    EventKind::HeartbeatDue,       EventKind::WorkerDeath,      EventKind::OperatorAction,
    EventKind::LicenseOutageStart, EventKind::LicenseOutageEnd, EventKind::SiteDown,
    EventKind::SiteUp,             EventKind::TaskEnd,          EventKind::WorkerPoll,
};

constexpr std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::JobSubmission: return "JobSubmission";
    case EventKind::SnapshotPublish: return "SnapshotPublish";
    case EventKind::JobDispatch: return "JobDispatch";
    case EventKind::JobStart: return "JobStart";
    case EventKind::JobEnd: return "JobEnd";
    case EventKind::TransferEnd: return "TransferEnd";
    case EventKind::HeartbeatDue: return "HeartbeatDue";
    case EventKind::WorkerDeath: return "WorkerDeath";
    case EventKind::OperatorAction: return "OperatorAction";
    case EventKind::LicenseOutageStart: return "LicenseOutageStart";
    case EventKind::LicenseOutageEnd: return "LicenseOutageEnd";
    case EventKind::SiteDown: return "SiteDown";
    case EventKind::SiteUp: return "SiteUp";
    case EventKind::TaskEnd: return "TaskEnd";
    case EventKind::WorkerPoll: return "WorkerPoll";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (auto k : kAllEventKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct Event {
  TimeMs fire_at = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::JobSubmission;
  std::uint64_t subject_id = 0;
  nlohmann::json detail = nlohmann::json::object();
};

using EventLog = std::vector<Event>;

/// One newline-delimited JSON record: {t_ms, seq, kind, subject_id, detail}.
inline std::string to_ndjson_line(std::int64_t t_ms, std::uint64_t seq, std::string_view kind,
                                  std::uint64_t subject_id, const nlohmann::json& detail) {
  nlohmann::ordered_json rec;
  rec["t_ms"] = t_ms;
  rec["seq"] = seq;
  rec["kind"] = kind;
  rec["subject_id"] = subject_id;
  rec["detail"] = detail;
  return rec.dump();
}

inline std::string to_ndjson(const EventLog& log) {
  std::string out;
  for (const auto& ev : log) {
    out += to_ndjson_line(ev.fire_at, ev.seq, to_string(ev.kind), ev.subject_id, ev.detail);
    out += '\n';
  }
  return out;
}

inline EventLog parse_ndjson(std::string_view text) {
  EventLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    const auto kind = parse_event_kind(rec.at("kind").get<std::string>());
    if (!kind) throw ProtocolError("unknown event kind in log: " + line);
    log.push_back(Event{rec.at("t_ms").get<TimeMs>(), rec.at("seq").get<std::uint64_t>(), *kind,
                        rec.at("subject_id").get<std::uint64_t>(), rec.at("detail")});
  }
  return log;
}

inline std::uint64_t log_hash(const EventLog& log) { return fnv1a64(to_ndjson(log)); }

/// Deterministic discrete-event core: a virtual clock and a (fire_at, seq)-ordered queue.
///
/// Single-threaded by contract. Handlers run inside run_until and may schedule or cancel
/// further events; fired events are appended to the log in firing order.
class Kernel {
 public:
  TimeMs now() const { return now_; }
  bool idle() const { return queue_.size() == cancelled_.size(); }
  const EventLog& log() const { return log_; }
  EventLog take_log() { return std::exchange(log_, {}); }

  std::uint64_t schedule(TimeMs fire_at, EventKind kind, std::uint64_t subject_id,
                         nlohmann::json detail = nlohmann::json::object()) {
    if (fire_at < now_) {
      throw PastEvent(std::string(to_string(kind)) + " scheduled at " + std::to_string(fire_at) +
                      " ms, clock is at " + std::to_string(now_) + " ms");
    }
    const auto seq = next_seq_++;
    queue_.push(Event{fire_at, seq, kind, subject_id, std::move(detail)});
    return seq;
  }

  std::uint64_t schedule(Event ev) {
    return schedule(ev.fire_at, ev.kind, ev.subject_id, std::move(ev.detail));
  }

  /// The event never fires and never reaches the log.
  void cancel(std::uint64_t seq) { cancelled_.insert(seq); }

  /// Ends the current run_until after the handler returns.
  void stop() { stopped_ = true; }

  /// Fires every event with fire_at <= limit (all events when limit is empty), calling
  /// handler(kernel, event) for each. Returns the events fired by this call.
  template <class Handler>
  EventLog run_until(std::optional<TimeMs> limit, Handler&& handler) {
    const auto first = log_.size();
    stopped_ = false;
    while (!stopped_ && !queue_.empty()) {
      if (limit && queue_.top().fire_at > *limit) break;
      Event ev = queue_.top();
      queue_.pop();
      if (auto it = cancelled_.find(ev.seq); it != cancelled_.end()) {
        cancelled_.erase(it);
        continue;
      }
      now_ = ev.fire_at;
      log_.push_back(ev);
      handler(*this, log_.back());
    }
    return EventLog(log_.begin() + static_cast<std::ptrdiff_t>(first), log_.end());
  }

  EventLog run_until(std::optional<TimeMs> limit) {
    return run_until(limit, [](Kernel&, const Event&) {});
  }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.fire_at != b.fire_at ? a.fire_at > b.fire_at : a.seq > b.seq;
    }
  };

  TimeMs now_ = 0;
  std::uint64_t next_seq_ = 0;
  bool stopped_ = false;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::unordered_set<std::uint64_t> cancelled_;
  EventLog log_;
};

}  // namespace gridfarm
