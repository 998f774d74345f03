#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gridfarm/gridfarm.hpp"

namespace fs = std::filesystem;
using namespace gridfarm;

namespace {

enum Exit : int { kOk = 0, kConfigError = 2, kWallClockCutoff = 3, kRuntimeFailure = 4 };

CampaignConfig load_config(const fs::path& path) {
  const auto text = read_file(path);
  if (path.extension() == ".json") {
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + ": not valid JSON");
    return config_from_json(j);
  }
  return config_from_yaml(text);
}

// Prints violations; true when the config is usable.
bool report_violations(const CampaignConfig& cfg, const std::string& source) {
  const auto violations = validate_config(cfg);
  for (const auto& v : violations) std::cerr << source << ": " << v.field << ": " << v.rule << "\n";
  return violations.empty();
}

void apply_seed_override(CampaignConfig& cfg) {
  if (const char* s = std::getenv("GRIDFARM_SEED"); s && *s) {
    try {
      std::size_t used = 0;
      cfg.seed = std::stoull(s, &used);
      if (used != std::string(s).size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError(std::string("GRIDFARM_SEED is not an unsigned integer: ") + s);
    }
  }
}

int cmd_gen_config(const std::string& name, const std::string& out) {
  const auto yaml = config_to_yaml(preset(name));
  if (out.empty() || out == "-") {
    std::cout << yaml;
  } else {
    write_file_atomic(out, yaml);
  }
  return kOk;
}

int cmd_validate(const fs::path& path) {
  const auto cfg = load_config(path);
  if (!report_violations(cfg, path.string())) return kConfigError;
  std::cout << path.string() << ": ok\n";
  return kOk;
}

int cmd_simulate(const fs::path& path, std::uint64_t factor, const fs::path& out_dir, const std::string& format) {
  const auto fmt = parse_report_format(format);
  auto cfg = load_config(path);
  apply_seed_override(cfg);
  if (factor < 1) throw ConfigError("--scale must be >= 1");
  cfg = scale(cfg, factor);
  if (!report_violations(cfg, path.string())) return kConfigError;

  const auto result = cfg.scheduler_mode == SchedulerMode::Push ? run_push_campaign(cfg) : run_pull_campaign(cfg);
  const auto report = compute_report(result);

  write_file_atomic(out_dir / "events.ndjson", to_ndjson(result.events));
  write_file_atomic(out_dir / "decisions.ndjson", to_ndjson(result.decisions));
  write_file_atomic(out_dir / "report.json", report_to_json(report).dump(2) + "\n");
  write_file_atomic(out_dir / "report.csv", report_to_csv(report));
  write_file_atomic(out_dir / "ledger.csv", ledger_to_csv(result.ledger));
  std::cout << emit_report(report, fmt);

  if (!report.complete) {
    std::cerr << "wall-clock limit reached with " << report.tasks_unfinished << " task(s) unfinished\n";
    return kWallClockCutoff;
  }
  return kOk;
}

int cmd_compare(const fs::path& a, const fs::path& b) {
  const auto ra = report_from_json_text(read_file(a));
  const auto rb = report_from_json_text(read_file(b));
  std::cout << compare_reports(ra, rb, a.stem().string(), b.stem().string());
  return kOk;
}

std::vector<MockDockTask> load_plan(const fs::path& path) {
  const auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw ConfigError(path.string() + ": plan must be a JSON array");
  std::vector<MockDockTask> plan;
  for (const auto& t : j) {
    if (!t.is_object() || !t.contains("task_id") || !t["task_id"].is_number_unsigned() ||
        !t.value("work_ms", nlohmann::json(0)).is_number_integer()) {
      throw ConfigError(path.string() + ": each entry needs task_id and integer work_ms");
    }
    plan.push_back({t["task_id"].get<TaskId>(), t.value("work_ms", TimeMs{0})});
  }
  return plan;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridfarm: simulate and run grid task-farming campaigns"};
  app.require_subcommand(1);

  std::string preset_name, gen_out;
  auto* gen = app.add_subcommand("gen-config", "Write a preset campaign config");
  gen->add_option("preset", preset_name, "Preset name")->required();
  gen->add_option("-o,--out", gen_out, "Output file (default stdout)");

  std::string validate_path;
  auto* val = app.add_subcommand("validate", "Check a config file");
  val->add_option("config", validate_path)->required();

  std::string sim_path, sim_out = "out", sim_format = "text";
  std::uint64_t sim_scale = 1;
  auto* sim = app.add_subcommand("simulate", "Run a simulated campaign");
  sim->add_option("config", sim_path)->required();
  sim->add_option("--scale", sim_scale, "Divide task count and concurrency by this factor");
  sim->add_option("--out", sim_out, "Artifact directory");
  sim->add_option("--format", sim_format, "Report printed to stdout: text, json or csv");

  std::string cmp_a, cmp_b;
  auto* cmp = app.add_subcommand("compare", "Side-by-side comparison of two report.json files");
  cmp->add_option("a", cmp_a)->required();
  cmp->add_option("b", cmp_b)->required();

  MasterOptions mo;
  std::string plan_path, master_out;
  std::uint64_t task_count = 0;
  TimeMs work_ms = 50;
  auto* master = app.add_subcommand("master", "Serve a live task plan");
  master->add_option("--bind", mo.host, "Bind address");
  master->add_option("--port", mo.port, "Port (0 picks a free one)");
  auto* plan_opt = master->add_option("--plan", plan_path, "JSON array of {task_id, work_ms}");
  master->add_option("--tasks", task_count, "Generate tasks 0..N-1 instead of a plan file")->excludes(plan_opt);
  master->add_option("--work-ms", work_ms, "Busy-work per generated task");
  master->add_option("--heartbeat-interval", mo.heartbeat.interval_s, "Seconds");
  master->add_option("--heartbeat-timeout", mo.heartbeat.timeout_s, "Seconds");
  master->add_option("--linger", mo.linger_s, "Seconds to keep answering after completion");
  master->add_option("--out", master_out, "Directory for decisions.ndjson and report.json");

  WorkerOptions wo;
  std::string master_addr = "127.0.0.1:7700";
  auto* worker = app.add_subcommand("worker", "Pull and execute tasks from a master");
  worker->add_option("--master", master_addr, "host:port");
  worker->add_option("--id", wo.worker_id, "Worker id")->required();
  worker->add_option("--poll-interval", wo.poll_interval_s, "Seconds between polls when told to wait");
  worker->add_option("--max-reconnects", wo.max_reconnects);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) return cmd_gen_config(preset_name, gen_out);
    if (*val) return cmd_validate(validate_path);
    if (*sim) return cmd_simulate(sim_path, sim_scale, sim_out, sim_format);
    if (*cmp) return cmd_compare(cmp_a, cmp_b);
    if (*master) {
      if (!plan_path.empty()) {
        mo.plan = load_plan(plan_path);
      } else {
        for (TaskId t = 0; t < task_count; ++t) mo.plan.push_back({t, work_ms});
      }
      if (!master_out.empty()) mo.output_dir = master_out;
      MasterServer server(mo);
      std::cout << "listening on " << mo.host << ":" << server.port() << std::endl;
      const auto out = server.serve();
      std::cout << report_to_text(out.report, "live");
      return out.report.complete ? kOk : kRuntimeFailure;
    }
    if (*worker) {
      const auto colon = master_addr.rfind(':');
      if (colon == std::string::npos) throw ConfigError("--master must be host:port");
      wo.host = master_addr.substr(0, colon);
      wo.port = static_cast<std::uint16_t>(std::stoul(master_addr.substr(colon + 1)));
      const auto s = run_worker(wo);
      if (s.exit_code != 0) std::cerr << wo.worker_id << ": " << s.error << "\n";
      return s.exit_code == 0 ? kOk : kRuntimeFailure;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const UnknownPreset& e) {
    std::cerr << e.what() << "\n";
    return kConfigError;
  } catch (const UnknownFormat& e) {
    std::cerr << e.what() << "\n";
    return kConfigError;
  } catch (const SchemaMismatch& e) {
    std::cerr << "schema mismatch: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kRuntimeFailure;
}
