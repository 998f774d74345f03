#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "gridfarm/errors.hpp"

namespace gridfarm::wire {

inline constexpr std::size_t kDefaultMaxFrame = 1u << 20;
inline constexpr std::size_t kHeaderBytes = 4;

enum class Kind {
  Register,
  RegisterAck,
  TaskRequest,
  TaskAssign,
  Wait,
  Result,
  ResultAck,
  Heartbeat,
  HeartbeatAck,
  Shutdown,
  Error,
};

inline constexpr std::array kAllKinds = {Kind::Register,  Kind::RegisterAck, Kind::TaskRequest,
                                         Kind::TaskAssign, Kind::Wait,        Kind::Result,
                                         Kind::ResultAck,  Kind::Heartbeat,   Kind::HeartbeatAck,
                                         Kind::Shutdown,   Kind::Error};

constexpr std::string_view to_string(Kind k) {
  switch (k) {
    case Kind::Register: return "REGISTER";
    case Kind::RegisterAck: return "REGISTER_ACK";
    case Kind::TaskRequest: return "TASK_REQUEST";
    case Kind::TaskAssign: return "TASK_ASSIGN";
    case Kind::Wait: return "WAIT";
    case Kind::Result: return "RESULT";
    case Kind::ResultAck: return "RESULT_ACK";
    case Kind::Heartbeat: return "HEARTBEAT";
    case Kind::HeartbeatAck: return "HEARTBEAT_ACK";
    case Kind::Shutdown: return "SHUTDOWN";
    case Kind::Error: return "ERROR";
  }
  return "?";
}

inline std::optional<Kind> parse_kind(std::string_view s) {
  for (auto k : kAllKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct Message {
  Kind kind = Kind::Error;
  std::string session;  // empty when absent
  nlohmann::json body = nlohmann::json::object();
};

inline nlohmann::json make_body(Kind kind, const std::string& session = {},
                                nlohmann::json fields = nlohmann::json::object()) {
  fields["kind"] = to_string(kind);
  if (!session.empty()) fields["session"] = session;
  return fields;
}

inline std::string encode_frame(std::string_view payload) {
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(kHeaderBytes + payload.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(payload);
  return out;
}

inline std::string encode(const nlohmann::json& body) { return encode_frame(body.dump()); }

inline std::string encode(Kind kind, const std::string& session = {},
                          nlohmann::json fields = nlohmann::json::object()) {
  return encode(make_body(kind, session, std::move(fields)));
}

/// Decodes one frame body. Throws ProtocolError for anything that is not a JSON object
/// with a known string `kind`.
inline Message decode_body(std::string_view payload) {
  nlohmann::json j = nlohmann::json::parse(payload, nullptr, false);
  if (j.is_discarded()) throw ProtocolError("frame body is not valid JSON");
  if (!j.is_object()) throw ProtocolError("frame body is not a JSON object");
  const auto it = j.find("kind");
  if (it == j.end() || !it->is_string()) throw ProtocolError("frame body has no kind");
  const auto kind = parse_kind(it->get<std::string>());
  if (!kind) throw ProtocolError("unknown message kind '" + it->get<std::string>() + "'");
  Message m;
  m.kind = *kind;
  if (const auto s = j.find("session"); s != j.end()) {
    if (!s->is_string()) throw ProtocolError("session must be a string");
    m.session = s->get<std::string>();
  }
  m.body = std::move(j);
  return m;
}

/// Incremental splitter for a byte stream of length-prefixed frames.
class FrameDecoder {
 public:
  enum class Status { Frame, NeedMore, Oversize };

  explicit FrameDecoder(std::size_t max_frame = kDefaultMaxFrame) : max_frame_(max_frame) {}

  void feed(const char* data, std::size_t n) { buf_.append(data, n); }
  void feed(std::string_view s) { buf_.append(s); }

  /// Extracts the next complete frame into `out`. After Oversize the stream cannot be
  /// resynchronised and the decoder stays in that state.
  Status next(std::string& out) {
    if (poisoned_) return Status::Oversize;
    if (buf_.size() - pos_ < kHeaderBytes) {
      compact();
      return Status::NeedMore;
    }
    const auto* p = reinterpret_cast<const unsigned char*>(buf_.data() + pos_);
    const std::uint32_t n = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                            (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
    if (n > max_frame_) {
      poisoned_ = true;
      buf_.clear();
      pos_ = 0;
      return Status::Oversize;
    }
    if (buf_.size() - pos_ < kHeaderBytes + n) {
      compact();
      return Status::NeedMore;
    }
    out.assign(buf_, pos_ + kHeaderBytes, n);
    pos_ += kHeaderBytes + n;
    return Status::Frame;
  }

  std::size_t buffered() const { return buf_.size() - pos_; }
  std::size_t max_frame() const { return max_frame_; }

 private:
  void compact() {
    if (pos_ > 0) {
      buf_.erase(0, pos_);
      pos_ = 0;
    }
  }

  std::size_t max_frame_;
  std::string buf_;
  std::size_t pos_ = 0;
  bool poisoned_ = false;
};

inline std::string score_to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::optional<std::uint64_t> score_from_hex(std::string_view s) {
  if (s.empty() || s.size() > 16) return std::nullopt;
  std::uint64_t v = 0;
  for (char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9') {
      v |= static_cast<std::uint64_t>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      v |= static_cast<std::uint64_t>(c - 'a' + 10);
    } else if (c >= 'A' && c <= 'F') {
      v |= static_cast<std::uint64_t>(c - 'A' + 10);
    } else {
      return std::nullopt;
    }
  }
  return v;
}

}  // namespace gridfarm::wire
