#pragma once

#include <cerrno>
#include <cstdlib>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "gridfarm/core.hpp"
#include "gridfarm/errors.hpp"

namespace gridfarm {

// The config tree is built once as JSON; YAML files are a different spelling of the same
// tree. Every reader below refuses keys it does not know.

namespace config_detail {

using nlohmann::json;

inline json duration_to_json(const DurationModel& d) {
  switch (d.kind) {
    case DurationModel::Kind::Constant: return {{"kind", "constant"}, {"value", d.a}};
    case DurationModel::Kind::Uniform: return {{"kind", "uniform"}, {"lo", d.a}, {"hi", d.b}};
    case DurationModel::Kind::LogNormal: return {{"kind", "lognormal"}, {"mean", d.a}, {"sigma", d.b}};
  }
  return nullptr;
}

/// Walks one JSON object, handing out keys and remembering which were used.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected a mapping");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where(key) + ": missing required key");
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    const auto& v = raw(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
        if (std::is_unsigned_v<T> && v.is_number_integer() && v.get<std::int64_t>() < 0 &&
            !v.is_number_unsigned()) {
          throw ConfigError(where(key) + ": expected a non-negative integer");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
      } else {
        if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  template <class T>
  T get_or(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    if (j_.at(key).is_null()) {
      used_.insert(key);
      return fallback;
    }
    return get<T>(key);
  }

  template <class T>
  std::optional<T> optional(const std::string& key) {
    if (!has(key)) {
      used_.insert(key);
      return std::nullopt;
    }
    return get<T>(key);
  }

  Section child(const std::string& key) { return Section(raw(key), where(key)); }

  std::vector<Section> list(const std::string& key) {
    std::vector<Section> out;
    if (!j_.contains(key)) return out;
    const auto& arr = raw(key);
    if (arr.is_null()) return out;
    if (!arr.is_array()) throw ConfigError(where(key) + ": expected a list");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      out.emplace_back(arr[i], where(key) + "[" + std::to_string(i) + "]");
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.contains(key)) throw ConfigError(where(key) + ": unknown key");
    }
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline DurationModel duration_from(Section s) {
  const auto kind = s.get<std::string>("kind");
  DurationModel d;
  if (kind == "constant") {
    d = DurationModel::constant(s.get<double>("value"));
  } else if (kind == "uniform") {
    d = DurationModel::uniform(s.get<double>("lo"), s.get<double>("hi"));
  } else if (kind == "lognormal") {
    d = DurationModel::lognormal(s.get<double>("mean"), s.get<double>("sigma"));
  } else {
    throw ConfigError(s.where("kind") + ": expected constant, uniform or lognormal, got '" + kind + "'");
  }
  s.finish();
  return d;
}

inline Window window_from(Section& s) {
  Window w;
  w.start_s = s.get<double>("start");
  w.end_s = s.get<double>("end");
  return w;
}

}  // namespace config_detail

inline nlohmann::json config_to_json(const CampaignConfig& c) {
  using config_detail::duration_to_json;
  using nlohmann::json;
  json campaign = {
      {"mode", to_string(c.scheduler_mode)},
      {"task_count", c.task_count},
      {"task_duration", duration_to_json(c.task_duration)},
      {"job_granularity", c.job_granularity},
      {"seed", c.seed},
      {"wall_clock_limit", c.wall_clock_limit_s ? json(*c.wall_clock_limit_s) : json(nullptr)},
      {"scheduling_overhead", duration_to_json(c.scheduling_overhead)},
      {"license_required", c.license_required},
      {"input_bytes_per_task", c.input_bytes_per_task},
      {"output_bytes_per_task", c.output_bytes_per_task},
      {"dataset_bytes", c.dataset_bytes},
  };

  json ces = json::array();
  json ce_outages = json::array();
  for (const auto& ce : c.fabric.ces) {
    json e = {{"id", ce.id},
              {"cpu_slots", ce.cpu_slots},
              {"queue_limit", ce.queue_limit},
              {"speed", ce.speed}};
    if (ce.misreported) e["misreported"] = true;
    if (ce.crash_after_s) e["crash_after"] = *ce.crash_after_s;
    ces.push_back(std::move(e));
    for (const auto& w : ce.outages) ce_outages.push_back({{"ce", ce.id}, {"start", w.start_s}, {"end", w.end_s}});
  }
  json brokers = json::array();
  for (const auto& rb : c.fabric.brokers) brokers.push_back({{"id", rb.id}, {"throttle", rb.throttle_per_minute}});
  json ses = json::array();
  for (const auto& se : c.fabric.ses) {
    ses.push_back({{"id", se.id},
                   {"bandwidth", se.bandwidth_bytes_per_s},
                   {"transfer_failure_rate", se.transfer_failure_rate}});
  }
  json license = json::object();
  license["capacity"] = c.fabric.license.token_capacity ? json(*c.fabric.license.token_capacity) : json(nullptr);
  json fabric = {{"ces", ces},
                 {"brokers", brokers},
                 {"information_system", {{"publish_interval", c.fabric.information_system.publish_interval_s}}},
                 {"ses", ses},
                 {"license", license}};

  json failures = {{"success", c.failure_model.success}};
  for (auto cls : kAllFailureClasses) failures[std::string(to_string(cls))] = c.failure_model.rate(cls);
  json license_outages = json::array();
  for (const auto& w : c.fabric.license.outages) license_outages.push_back({{"start", w.start_s}, {"end", w.end_s}});
  failures["ce_outages"] = ce_outages;
  failures["license_outages"] = license_outages;

  json policy = {{"resubmission", to_string(c.resubmission_policy.mode)},
                 {"delay", c.resubmission_policy.manual_delay_s},
                 {"blacklist_threshold", c.resubmission_policy.blacklist_threshold},
                 {"heartbeat_interval", c.heartbeat.interval_s},
                 {"heartbeat_timeout", c.heartbeat.timeout_s}};
  json pull = {{"workers", c.pull.worker_count},
               {"worker_lifetime", c.pull.worker_lifetime_s},
               {"pull_latency", c.pull.pull_latency_s},
               {"poll_interval", c.pull.poll_interval_s},
               {"replace_workers", c.pull.replace_workers}};

  return {{"campaign", campaign}, {"fabric", fabric}, {"failures", failures}, {"policy", policy}, {"pull", pull}};
}

/// Structural parse only; call validate_config for the semantic rules.
inline CampaignConfig config_from_json(const nlohmann::json& root) {
  using namespace config_detail;
  CampaignConfig c;
  Section top(root, "");

  {
    auto s = top.child("campaign");
    const auto mode = s.get<std::string>("mode");
    if (mode == "push") {
      c.scheduler_mode = SchedulerMode::Push;
    } else if (mode == "pull") {
      c.scheduler_mode = SchedulerMode::Pull;
    } else {
      throw ConfigError("campaign.mode: expected push or pull, got '" + mode + "'");
    }
    c.task_count = s.get<std::uint64_t>("task_count");
    c.task_duration = duration_from(s.child("task_duration"));
    c.job_granularity = s.get_or<std::uint64_t>("job_granularity", 1);
    c.seed = s.get_or<std::uint64_t>("seed", c.seed);
    c.wall_clock_limit_s = s.optional<double>("wall_clock_limit");
    if (s.has("scheduling_overhead")) c.scheduling_overhead = duration_from(s.child("scheduling_overhead"));
    c.license_required = s.get_or("license_required", false);
    c.input_bytes_per_task = s.get_or<std::uint64_t>("input_bytes_per_task", 0);
    c.output_bytes_per_task = s.get_or<std::uint64_t>("output_bytes_per_task", 0);
    c.dataset_bytes = s.get_or<std::uint64_t>("dataset_bytes", 0);
    s.finish();
  }

  {
    auto s = top.child("fabric");
    for (auto e : s.list("ces")) {
      ComputingElementSpec ce;
      ce.id = e.get<CeId>("id");
      ce.cpu_slots = e.get<int>("cpu_slots");
      ce.queue_limit = e.get_or("queue_limit", ce.queue_limit);
      ce.speed = e.get_or("speed", 1.0);
      ce.misreported = e.get_or("misreported", false);
      ce.crash_after_s = e.optional<double>("crash_after");
      e.finish();
      c.fabric.ces.push_back(ce);
    }
    for (auto e : s.list("brokers")) {
      BrokerSpec rb;
      rb.id = e.get<BrokerId>("id");
      rb.throttle_per_minute = e.get<int>("throttle");
      e.finish();
      c.fabric.brokers.push_back(rb);
    }
    if (s.has("information_system")) {
      auto is = s.child("information_system");
      c.fabric.information_system.publish_interval_s = is.get_or("publish_interval", 0.0);
      is.finish();
    }
    for (auto e : s.list("ses")) {
      StorageElementSpec se;
      se.id = e.get<SeId>("id");
      se.bandwidth_bytes_per_s = e.get_or("bandwidth", se.bandwidth_bytes_per_s);
      se.transfer_failure_rate = e.get_or("transfer_failure_rate", 0.0);
      e.finish();
      c.fabric.ses.push_back(se);
    }
    if (s.has("license")) {
      auto ls = s.child("license");
      c.fabric.license.token_capacity = ls.optional<int>("capacity");
      ls.finish();
    }
    s.finish();
  }

  {
    auto s = top.child("failures");
    c.failure_model.success = s.get<double>("success");
    for (auto cls : kAllFailureClasses) {
      c.failure_model.set(cls, s.get_or(std::string(to_string(cls)), 0.0));
    }
    for (auto e : s.list("ce_outages")) {
      const auto id = e.get<CeId>("ce");
      const auto w = window_from(e);
      e.finish();
      bool found = false;
      for (auto& ce : c.fabric.ces) {
        if (ce.id == id) {
          ce.outages.push_back(w);
          found = true;
        }
      }
      if (!found) throw ConfigError("failures.ce_outages: no computing element with id " + std::to_string(id));
    }
    for (auto e : s.list("license_outages")) {
      c.fabric.license.outages.push_back(window_from(e));
      e.finish();
    }
    s.finish();
  }

  if (top.has("policy")) {
    auto s = top.child("policy");
    const auto mode = s.get_or<std::string>("resubmission", "automatic");
    if (mode == "automatic") {
      c.resubmission_policy.mode = ResubmissionMode::Automatic;
    } else if (mode == "manual") {
      c.resubmission_policy.mode = ResubmissionMode::Manual;
    } else {
      throw ConfigError("policy.resubmission: expected automatic or manual, got '" + mode + "'");
    }
    c.resubmission_policy.manual_delay_s = s.get_or("delay", c.resubmission_policy.manual_delay_s);
    c.resubmission_policy.blacklist_threshold =
        s.get_or("blacklist_threshold", c.resubmission_policy.blacklist_threshold);
    c.heartbeat.interval_s = s.get_or("heartbeat_interval", c.heartbeat.interval_s);
    c.heartbeat.timeout_s = s.get_or("heartbeat_timeout", c.heartbeat.timeout_s);
    s.finish();
  }

  if (top.has("pull")) {
    auto s = top.child("pull");
    c.pull.worker_count = s.get_or("workers", c.pull.worker_count);
    c.pull.worker_lifetime_s = s.get_or("worker_lifetime", c.pull.worker_lifetime_s);
    c.pull.pull_latency_s = s.get_or("pull_latency", c.pull.pull_latency_s);
    c.pull.poll_interval_s = s.get_or("poll_interval", c.pull.poll_interval_s);
    c.pull.replace_workers = s.get_or("replace_workers", c.pull.replace_workers);
    s.finish();
  }
  top.finish();
  return c;
}

// ---------------------------------------------------------------------------
// YAML spelling

namespace config_detail {

inline void emit(YAML::Emitter& out, const json& j) {
  switch (j.type()) {
    case json::value_t::object:
      out << YAML::BeginMap;
      for (const auto& [k, v] : j.items()) {
        out << YAML::Key << k << YAML::Value;
        emit(out, v);
      }
      out << YAML::EndMap;
      break;
    case json::value_t::array:
      out << YAML::BeginSeq;
      for (const auto& v : j) emit(out, v);
      out << YAML::EndSeq;
      break;
    case json::value_t::null: out << YAML::Null; break;
    case json::value_t::boolean: out << j.get<bool>(); break;
    case json::value_t::number_unsigned: out << j.get<std::uint64_t>(); break;
    case json::value_t::number_integer: out << j.get<std::int64_t>(); break;
    case json::value_t::number_float: {
      // Keep a decimal point so the value reads back as a float.
      const double v = j.get<double>();
      std::string text;
      for (int digits : {15, 16, 17}) {
        std::ostringstream s;
        s.precision(digits);
        s << v;
        text = s.str();
        if (std::strtod(text.c_str(), nullptr) == v) break;
      }
      if (text.find_first_of(".eEn") == std::string::npos) text += ".0";
      out << text;
      break;
    }
    default: out << j.get<std::string>(); break;
  }
}

inline json scalar_to_json(const YAML::Node& n) {
  const auto& text = n.Scalar();
  if (n.Tag() == "!") return text;  // quoted
  if (text.empty() || text == "~" || text == "null" || text == "Null" || text == "NULL") return nullptr;
  if (text == "true" || text == "True" || text == "TRUE") return true;
  if (text == "false" || text == "False" || text == "FALSE") return false;
  const char* begin = text.c_str();
  char* end = nullptr;
  errno = 0;
  if (text.find_first_of(".eE") == std::string::npos || text.find_first_of("xX") != std::string::npos) {
    if (text[0] == '-') {
      const long long v = std::strtoll(begin, &end, 10);
      if (errno == 0 && end && *end == '\0') return v;
    } else {
      const unsigned long long v = std::strtoull(begin, &end, 10);
      if (errno == 0 && end && *end == '\0') return static_cast<std::uint64_t>(v);
    }
  }
  errno = 0;
  const double d = std::strtod(begin, &end);
  if (errno == 0 && end && *end == '\0') return d;
  return text;
}

inline json yaml_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Map: {
      json out = json::object();
      for (const auto& kv : n) {
        const auto key = kv.first.as<std::string>();
        if (out.contains(key)) throw ConfigError(key + ": duplicate key");
        out[key] = yaml_to_json(kv.second);
      }
      return out;
    }
    case YAML::NodeType::Sequence: {
      json out = json::array();
      for (const auto& v : n) out.push_back(yaml_to_json(v));
      return out;
    }
    case YAML::NodeType::Scalar: return scalar_to_json(n);
    default: return nullptr;
  }
}

}  // namespace config_detail

inline std::string config_to_yaml(const CampaignConfig& c) {
  YAML::Emitter out;
  config_detail::emit(out, config_to_json(c));
  return std::string(out.c_str()) + "\n";
}

inline CampaignConfig config_from_yaml(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("config must be a mapping with campaign/fabric/failures sections");
  return config_from_json(config_detail::yaml_to_json(root));
}

}  // namespace gridfarm
