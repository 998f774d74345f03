#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gridfarm/io.hpp"
#include "gridfarm/master.hpp"
#include "gridfarm/metrics.hpp"
#include "gridfarm/mock_dock.hpp"
#include "gridfarm/report_io.hpp"
#include "gridfarm/wire.hpp"

namespace gridfarm {

namespace net {

inline std::string errno_text() { return std::strerror(errno); }

inline void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

/// A listening TCP socket on host:port (port 0 picks a free one).
inline int listen_on(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE | AI_NUMERICSERV;
  addrinfo* res = nullptr;
  const auto service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw BindFailure("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::string last = "no address";
  for (auto* ai = res; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) {
      last = errno_text();
      continue;
    }
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 128) == 0) {
      ::freeaddrinfo(res);
      set_nonblocking(fd);
      return fd;
    }
    last = errno_text();
    ::close(fd);
  }
  ::freeaddrinfo(res);
  throw BindFailure("cannot bind " + host + ":" + service + ": " + last);
}

inline std::uint16_t local_port(int fd) {
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  if (addr.ss_family == AF_INET6) return ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
  return ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
}

/// Blocking connect; throws ConnectionLost.
inline int connect_to(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_NUMERICSERV;
  addrinfo* res = nullptr;
  const auto service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw ConnectionLost("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::string last = "no address";
  for (auto* ai = res; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return fd;
    }
    last = errno_text();
    ::close(fd);
  }
  ::freeaddrinfo(res);
  throw ConnectionLost("cannot connect to " + host + ":" + service + ": " + last);
}

inline void send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ConnectionLost("send failed: " + errno_text());
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace net

// ---------------------------------------------------------------------------
// Master

struct MasterOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::vector<MockDockTask> plan;
  HeartbeatSettings heartbeat;
  double wait_poll_s = 1.0;  // suggested back-off sent with WAIT
  std::size_t max_frame = wire::kDefaultMaxFrame;
  // Once every task is complete, how long to keep answering SHUTDOWN to stragglers.
  double linger_s = 2.0;
  std::optional<std::filesystem::path> output_dir;
};

struct MasterStats {
  std::size_t tasks = 0;
  std::size_t completed = 0;
  std::size_t pending = 0;
  std::size_t in_flight = 0;
  std::size_t requeues = 0;
  std::size_t dead_workers = 0;
  std::size_t stale_results = 0;
  std::size_t live_workers = 0;
  std::size_t max_concurrent_workers = 0;
  std::size_t connections = 0;
  std::uint64_t frames = 0;
  std::uint64_t errors_sent = 0;
  std::uint64_t digest = 0;
  bool invariants_ok = true;
  bool finished = false;
};

struct LiveOutcome {
  CampaignReport report;
  std::vector<DecisionRecord> decisions;
  std::map<TaskId, TaskResult> results;
  MasterStats stats;
};

/// Report for a live run: attempts that ended in a requeue count as lost (Unclassified).
inline CampaignReport live_report(const MasterState& s, TimeMs wall_ms) {
  CampaignReport r;
  r.mode = "live";
  r.task_count = s.task_count();
  r.total_tasks_completed = s.results().size();
  r.tasks_unfinished = r.task_count - r.total_tasks_completed;
  r.complete = s.all_completed();
  TimeMs cpu = 0;
  for (const auto& [id, res] : s.results()) cpu += res.cpu_consumed;
  r.total_cpu_seconds = to_seconds(cpu);
  r.total_cpu_years = r.total_cpu_seconds / kSecondsPerYear;
  r.wall_clock_seconds = to_seconds(wall_ms);
  r.cumulative_grid_jobs = s.workers().size();
  r.max_concurrent_cpus = s.max_concurrent_workers();
  if (wall_ms > 0) {
    r.crunching_factor = crunching_factor(r.total_cpu_seconds, r.wall_clock_seconds);
    const auto tp = throughput(static_cast<double>(r.total_tasks_completed), r.wall_clock_seconds);
    r.throughput_tasks_per_second = tp.tasks_per_second;
    r.seconds_per_task = tp.seconds_per_task;
  }
  if (r.max_concurrent_cpus > 0) {
    r.distribution_efficiency =
        distribution_efficiency(r.crunching_factor, static_cast<double>(r.max_concurrent_cpus));
  }
  const auto terminated = r.total_tasks_completed + s.requeues();
  if (terminated > 0) {
    r.success_rate_logged = static_cast<double>(r.total_tasks_completed) / static_cast<double>(terminated);
    r.success_rate_after_output_check = r.success_rate_logged;
    if (s.requeues() > 0) {
      r.failure_attribution[FailureClass::Unclassified] =
          static_cast<double>(s.requeues()) / static_cast<double>(terminated);
    }
  }
  r.aborted_jobs = s.requeues();
  r.requeues = s.requeues();
  r.dead_workers = s.dead_workers();
  r.stale_results = s.stale_results();
  return r;
}

/// Single-threaded poll() server around one MasterState. Binds in the constructor so
/// the port is known before serve() runs; stop() and stats() may be called from any thread.
class MasterServer {
 public:
  explicit MasterServer(MasterOptions opt)
      : opt_(std::move(opt)),
        listen_fd_(net::listen_on(opt_.host, opt_.port)),
        port_(net::local_port(listen_fd_)),
        state_(make_plan(opt_.plan), opt_.heartbeat, random_tokens(),
               [this](const TaskResult& r) { digest_ ^= splitmix64(r.task_id ^ r.score); }) {
    for (const auto& t : opt_.plan) work_.emplace(t.task_id, t.work_ms);
  }

  MasterServer(const MasterServer&) = delete;
  MasterServer& operator=(const MasterServer&) = delete;

  ~MasterServer() {
    for (auto& c : conns_) ::close(c->fd);
    if (listen_fd_ >= 0) ::close(listen_fd_);
  }

  std::uint16_t port() const { return port_; }
  void stop() { stop_.store(true); }

  MasterStats stats() const {
    std::lock_guard lock(stats_mu_);
    return stats_;
  }

  LiveOutcome serve() {
    start_ = std::chrono::steady_clock::now();
    std::optional<TimeMs> finished_at;
    while (!stop_.load()) {
      poll_once();
      const auto now = now_ms();
      state_.detect_failures(now);
      if (state_.all_completed() && !finished_at) finished_at = now;
      publish_stats(finished_at.has_value());
      if (finished_at && (conns_.empty() || now - *finished_at >= from_seconds(opt_.linger_s))) break;
    }
    const auto wall = finished_at.value_or(now_ms());
    LiveOutcome out;
    out.report = live_report(state_, wall);
    out.decisions = state_.decisions();
    out.results = state_.results();
    out.stats = stats();
    if (opt_.output_dir) {
      write_file_atomic(*opt_.output_dir / "decisions.ndjson", to_ndjson(out.decisions));
      write_file_atomic(*opt_.output_dir / "report.json", report_to_json(out.report).dump(2) + "\n");
    }
    return out;
  }

  const MasterState& state() const { return state_; }

 private:
  struct Conn {
    int fd = -1;
    wire::FrameDecoder decoder;
    std::string out;
    bool closing = false;  // close once `out` drains
    bool dead = false;
  };

  static constexpr std::size_t kMaxOutbox = 8u << 20;

  static std::vector<TaskId> make_plan(const std::vector<MockDockTask>& plan) {
    if (plan.empty()) throw ConfigError("master plan is empty");
    std::vector<TaskId> ids;
    ids.reserve(plan.size());
    for (const auto& t : plan) {
      if (t.work_ms < 0) throw ConfigError("task " + std::to_string(t.task_id) + " has negative work_ms");
      ids.push_back(t.task_id);
    }
    return ids;
  }

  static MasterState::TokenSource random_tokens() {
    return [rd = std::make_shared<std::random_device>()]() {
      auto word = [&] { return (std::uint64_t{(*rd)()} << 32) | (*rd)(); };
      SessionToken t;
      t.hi = word();
      t.lo = word();
      return t;
    };
  }

  TimeMs now_ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_)
        .count();
  }

  void poll_once() {
    std::vector<pollfd> fds;
    fds.reserve(conns_.size() + 1);
    fds.push_back({listen_fd_, POLLIN, 0});
    for (auto& c : conns_) {
      short ev = c->closing ? 0 : POLLIN;
      if (!c->out.empty()) ev |= POLLOUT;
      fds.push_back({c->fd, ev, 0});
    }
    const int rc = ::poll(fds.data(), fds.size(), 20);
    if (rc < 0 && errno != EINTR) throw Error("poll failed: " + net::errno_text());
    if (rc > 0 && (fds[0].revents & POLLIN)) accept_all();
    for (std::size_t i = 0; i + 1 < fds.size() && i < conns_.size(); ++i) {
      auto& c = *conns_[i];
      const auto rev = fds[i + 1].revents;
      if (rev & (POLLIN | POLLHUP | POLLERR)) read_from(c);
      if (!c.out.empty()) flush(c);
      if (c.closing && c.out.empty()) c.dead = true;
    }
    std::erase_if(conns_, [](const std::unique_ptr<Conn>& c) {
      if (c->dead) ::close(c->fd);
      return c->dead;
    });
  }

  void accept_all() {
    while (true) {
      const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
      if (fd < 0) return;
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      auto c = std::make_unique<Conn>();
      c->fd = fd;
      c->decoder = wire::FrameDecoder(opt_.max_frame);
      conns_.push_back(std::move(c));
    }
  }

  void read_from(Conn& c) {
    char buf[65536];
    while (!c.closing) {
      const auto n = ::recv(c.fd, buf, sizeof buf, 0);
      if (n == 0) {
        // Peer closed; a truncated frame left in the decoder is simply dropped.
        c.dead = true;
        return;
      }
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno != EAGAIN && errno != EWOULDBLOCK) c.dead = true;
        return;
      }
      c.decoder.feed(buf, static_cast<std::size_t>(n));
      std::string frame;
      while (!c.closing) {
        const auto st = c.decoder.next(frame);
        if (st == wire::FrameDecoder::Status::NeedMore) break;
        if (st == wire::FrameDecoder::Status::Oversize) {
          send_error(c, "", "frame_too_large",
                     "length prefix exceeds " + std::to_string(opt_.max_frame) + " bytes");
          c.closing = true;
          break;
        }
        ++frames_;
        handle(c, frame);
      }
    }
  }

  void flush(Conn& c) {
    while (!c.out.empty()) {
      const auto n = ::send(c.fd, c.out.data(), c.out.size(), MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno != EAGAIN && errno != EWOULDBLOCK) c.dead = true;
        return;
      }
      c.out.erase(0, static_cast<std::size_t>(n));
    }
  }

  void reply(Conn& c, wire::Kind kind, const std::string& session, nlohmann::json fields = nlohmann::json::object()) {
    c.out += wire::encode(kind, session, std::move(fields));
    if (c.out.size() > kMaxOutbox) c.dead = true;  // peer is not reading
  }

  void send_error(Conn& c, const std::string& session, const std::string& reason, const std::string& message) {
    ++errors_sent_;
    reply(c, wire::Kind::Error, session, {{"reason", reason}, {"message", message}});
  }

  std::optional<SessionToken> session_of(Conn& c, const wire::Message& m) {
    auto token = SessionToken::parse(m.session);
    if (!token) send_error(c, m.session, "invalid_session", "missing or malformed session");
    return token;
  }

  void handle(Conn& c, const std::string& frame) {
    wire::Message m;
    try {
      m = wire::decode_body(frame);
    } catch (const ProtocolError& e) {
      send_error(c, "", "bad_frame", e.what());
      return;
    }
    const auto now = now_ms();
    try {
      switch (m.kind) {
        case wire::Kind::Register: {
          const auto it = m.body.find("worker_id");
          if (it == m.body.end() || !it->is_string() || it->get<std::string>().empty()) {
            send_error(c, "", "bad_request", "REGISTER needs a worker_id string");
            return;
          }
          const auto token = state_.register_worker(it->get<std::string>(), now);
          reply(c, wire::Kind::RegisterAck, token.str(),
                {{"heartbeat_interval_s", opt_.heartbeat.interval_s},
                 {"heartbeat_timeout_s", opt_.heartbeat.timeout_s}});
          return;
        }
        case wire::Kind::TaskRequest: {
          const auto token = session_of(c, m);
          if (!token) return;
          const auto next = state_.next_task(*token, now);
          if (const auto* a = std::get_if<Assignment>(&next)) {
            reply(c, wire::Kind::TaskAssign, m.session, {{"task_id", a->task_id}, {"work_ms", work_.at(a->task_id)}});
          } else if (std::holds_alternative<Wait>(next)) {
            reply(c, wire::Kind::Wait, m.session, {{"poll_s", opt_.wait_poll_s}});
          } else {
            reply(c, wire::Kind::Shutdown, m.session);
          }
          return;
        }
        case wire::Kind::Result: {
          const auto token = session_of(c, m);
          if (!token) return;
          const auto& b = m.body;
          const auto tid = b.find("task_id");
          const auto score = b.find("score");
          const auto cpu = b.find("cpu_ms");
          if (tid == b.end() || !tid->is_number_unsigned() || score == b.end() || !score->is_string() ||
              (cpu != b.end() && !cpu->is_number_integer())) {
            send_error(c, m.session, "bad_request", "RESULT needs task_id, hex score and integer cpu_ms");
            return;
          }
          const auto value = wire::score_from_hex(score->get<std::string>());
          if (!value) {
            send_error(c, m.session, "bad_request", "score is not a hex string");
            return;
          }
          const auto* w = state_.find(*token);
          TaskResult r{tid->get<TaskId>(), w ? w->worker_id : std::string(), *value,
                       cpu == b.end() ? 0 : cpu->get<TimeMs>(), now};
          const auto status = state_.submit_result(*token, r, now);
          reply(c, wire::Kind::ResultAck, m.session,
                {{"task_id", r.task_id}, {"duplicate", status == SubmitStatus::Stale}});
          return;
        }
        case wire::Kind::Heartbeat: {
          const auto token = session_of(c, m);
          if (!token) return;
          state_.heartbeat(*token, now);
          reply(c, wire::Kind::HeartbeatAck, m.session);
          return;
        }
        default:
          send_error(c, m.session, "unexpected_kind",
                     std::string(wire::to_string(m.kind)) + " is not accepted by the master");
          return;
      }
    } catch (const DuplicateWorker& e) {
      send_error(c, m.session, "duplicate_worker", e.what());
    } catch (const InvalidSession& e) {
      send_error(c, m.session, "invalid_session", e.what());
    } catch (const ProtocolError& e) {
      send_error(c, m.session, "protocol", e.what());
    }
  }

  void publish_stats(bool finished) {
    MasterStats s;
    s.tasks = state_.task_count();
    s.completed = state_.results().size();
    s.pending = state_.pending().size();
    s.in_flight = state_.in_flight().size();
    s.requeues = state_.requeues();
    s.dead_workers = state_.dead_workers();
    s.stale_results = state_.stale_results();
    s.live_workers = state_.live_workers();
    s.max_concurrent_workers = state_.max_concurrent_workers();
    s.connections = conns_.size();
    s.frames = frames_;
    s.errors_sent = errors_sent_;
    s.digest = digest_;
    s.finished = finished;
    // The full partition check is O(tasks); plans here are small.
    s.invariants_ok = state_.invariants_hold();
    std::lock_guard lock(stats_mu_);
    stats_ = s;
  }

  MasterOptions opt_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::map<TaskId, TimeMs> work_;
  std::uint64_t digest_ = 0;
  MasterState state_;
  std::vector<std::unique_ptr<Conn>> conns_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
  std::atomic<bool> stop_{false};
  std::uint64_t frames_ = 0;
  std::uint64_t errors_sent_ = 0;
  mutable std::mutex stats_mu_;
  MasterStats stats_;
};

// ---------------------------------------------------------------------------
// Worker

struct WorkerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::string worker_id;
  double poll_interval_s = 0.5;
  // Zero: use the interval the master announces in REGISTER_ACK.
  double heartbeat_interval_s = 0.0;
  int max_reconnects = 5;
  int backoff_ms = 100;
  double reply_timeout_s = 30.0;
  std::size_t max_frame = wire::kDefaultMaxFrame;
  // Fault script: drop the connection right after the k-th TASK_ASSIGN (1-based), stay
  // away for fault_pause_s, then reconnect and deliver the result late.
  std::optional<int> disconnect_after_assign;
  double fault_pause_s = 0.0;
};

struct WorkerSummary {
  int exit_code = 0;
  std::uint64_t tasks_executed = 0;
  std::uint64_t results_stored = 0;
  std::uint64_t duplicate_acks = 0;
  std::uint64_t reconnects = 0;
  std::string error;
};

namespace worker_detail {

/// One connection plus the heartbeat thread that shares it.
class Link {
 public:
  explicit Link(const WorkerOptions& opt) : opt_(opt), decoder_(opt.max_frame) {}
  ~Link() {
    stop_heartbeat();
    close();
  }

  void open() {
    close();
    const int fd = net::connect_to(opt_.host, opt_.port);
    std::lock_guard lock(mu_);
    fd_ = fd;
    decoder_ = wire::FrameDecoder(opt_.max_frame);
  }

  void close() {
    std::lock_guard lock(mu_);
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
    }
    fd_ = -1;
    session_.clear();
  }

  void set_session(std::string s) {
    std::lock_guard lock(mu_);
    session_ = std::move(s);
  }
  std::string session() const {
    std::lock_guard lock(mu_);
    return session_;
  }

  void send(wire::Kind kind, nlohmann::json fields = nlohmann::json::object()) {
    std::lock_guard lock(mu_);
    if (fd_ < 0) throw ConnectionLost("not connected");
    net::send_all(fd_, wire::encode(kind, session_, std::move(fields)));
  }

  /// Next message that is not a heartbeat ack.
  wire::Message receive() {
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::milliseconds(from_seconds(opt_.reply_timeout_s));
    std::string frame;
    while (true) {
      const auto st = decoder_.next(frame);
      if (st == wire::FrameDecoder::Status::Oversize) throw ConnectionLost("oversize frame from master");
      if (st == wire::FrameDecoder::Status::Frame) {
        auto m = wire::decode_body(frame);
        if (m.kind == wire::Kind::HeartbeatAck) continue;
        return m;
      }
      int fd;
      {
        std::lock_guard lock(mu_);
        fd = fd_;
      }
      if (fd < 0) throw ConnectionLost("not connected");
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
      if (left <= 0) throw ConnectionLost("no reply from master");
      pollfd p{fd, POLLIN, 0};
      const int rc = ::poll(&p, 1, static_cast<int>(std::min<long long>(left, 1000)));
      if (rc < 0 && errno != EINTR) throw ConnectionLost("poll failed: " + net::errno_text());
      if (rc <= 0) continue;
      char buf[65536];
      const auto n = ::recv(fd, buf, sizeof buf, 0);
      if (n == 0) throw ConnectionLost("master closed the connection");
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw ConnectionLost("recv failed: " + net::errno_text());
      }
      decoder_.feed(buf, static_cast<std::size_t>(n));
    }
  }

  void start_heartbeat(double interval_s) {
    stop_heartbeat();
    hb_stop_ = false;
    hb_ = std::thread([this, interval_s] {
      std::unique_lock lock(hb_mu_);
      const auto period = std::chrono::milliseconds(std::max<TimeMs>(1, from_seconds(interval_s)));
      while (!hb_cv_.wait_for(lock, period, [this] { return hb_stop_; })) {
        if (session().empty()) continue;
        try {
          send(wire::Kind::Heartbeat);
        } catch (const ConnectionLost&) {
          // The main loop notices on its next exchange.
        }
      }
    });
  }

  void stop_heartbeat() {
    {
      std::lock_guard lock(hb_mu_);
      hb_stop_ = true;
    }
    hb_cv_.notify_all();
    if (hb_.joinable()) hb_.join();
  }

 private:
  const WorkerOptions& opt_;
  mutable std::mutex mu_;  // guards fd_, session_ and every write
  int fd_ = -1;
  std::string session_;
  wire::FrameDecoder decoder_;  // main thread only

  std::thread hb_;
  std::mutex hb_mu_;
  std::condition_variable hb_cv_;
  bool hb_stop_ = false;
};

}  // namespace worker_detail

/// register -> pull -> mock_dock -> result, until SHUTDOWN. Connection losses are retried
/// with exponential backoff up to max_reconnects in a row, then the worker gives up.
inline WorkerSummary run_worker(const WorkerOptions& opt) {
  using wire::Kind;
  WorkerSummary summary;
  worker_detail::Link link(opt);
  double heartbeat_s = opt.heartbeat_interval_s;
  int assigned = 0;
  bool fault_done = false;

  struct Pending {
    TaskId task_id = 0;
    MockDockOutput out;
  };
  Pending pending;
  bool has_pending = false;

  auto sleep_s = [](double s) { std::this_thread::sleep_for(std::chrono::milliseconds(from_seconds(s))); };

  // Registration; a stale registration of ours may still be live on the master, which
  // answers duplicate_worker until it times us out.
  auto connect = [&]() {
    int failures = 0;
    while (true) {
      try {
        link.open();
        while (true) {
          link.send(Kind::Register, {{"worker_id", opt.worker_id}});
          auto m = link.receive();
          if (m.kind == Kind::RegisterAck) {
            link.set_session(m.session);
            if (heartbeat_s <= 0) heartbeat_s = m.body.value("heartbeat_interval_s", 60.0);
            return;
          }
          if (m.kind == Kind::Error && m.body.value("reason", "") == "duplicate_worker") {
            sleep_s(0.05 + 0.001 * opt.backoff_ms);
            continue;
          }
          throw ConnectionLost("registration refused: " + m.body.dump());
        }
      } catch (const ConnectionLost& e) {
        link.close();
        if (++failures > opt.max_reconnects) throw;
        std::this_thread::sleep_for(std::chrono::milliseconds(opt.backoff_ms << std::min(failures - 1, 10)));
      }
    }
  };

  try {
    connect();
    link.start_heartbeat(heartbeat_s);
    while (true) {
      try {
        if (has_pending) {
          link.send(Kind::Result, {{"task_id", pending.task_id},
                                   {"score", wire::score_to_hex(pending.out.score)},
                                   {"cpu_ms", pending.out.cpu_consumed}});
          auto ack = link.receive();
          if (ack.kind == Kind::ResultAck) {
            if (ack.body.value("duplicate", false)) {
              ++summary.duplicate_acks;
            } else {
              ++summary.results_stored;
            }
            has_pending = false;
          } else if (ack.kind == Kind::Error && ack.body.value("reason", "") == "invalid_session") {
            throw ConnectionLost("session rejected");
          } else {
            throw ProtocolError("unexpected reply to RESULT: " + ack.body.dump());
          }
          continue;
        }
        link.send(Kind::TaskRequest);
        auto m = link.receive();
        switch (m.kind) {
          case Kind::TaskAssign: {
            MockDockTask task{m.body.at("task_id").get<TaskId>(), m.body.at("work_ms").get<TimeMs>()};
            ++assigned;
            if (!fault_done && opt.disconnect_after_assign && assigned == *opt.disconnect_after_assign) {
              fault_done = true;
              link.close();
              sleep_s(opt.fault_pause_s);
              pending = Pending{task.task_id, mock_dock(task)};
              has_pending = true;
              ++summary.tasks_executed;
              throw ConnectionLost("scripted disconnect");
            }
            pending = Pending{task.task_id, mock_dock(task)};
            has_pending = true;
            ++summary.tasks_executed;
            break;
          }
          case Kind::Wait: sleep_s(m.body.value("poll_s", opt.poll_interval_s)); break;
          case Kind::Shutdown: return summary;
          case Kind::Error:
            if (m.body.value("reason", "") == "invalid_session") throw ConnectionLost("session rejected");
            throw ProtocolError("master error: " + m.body.dump());
          default: throw ProtocolError("unexpected reply to TASK_REQUEST: " + m.body.dump());
        }
      } catch (const ConnectionLost&) {
        ++summary.reconnects;
        link.close();
        connect();
      }
    }
  } catch (const Error& e) {
    summary.exit_code = 1;
    summary.error = e.what();
  } catch (const std::exception& e) {
    summary.exit_code = 1;
    summary.error = e.what();
  }
  return summary;
}

}  // namespace gridfarm
