#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "gridfarm/config_io.hpp"
#include "gridfarm/io.hpp"
#include "gridfarm/presets.hpp"
#include "gridfarm/report_io.hpp"

namespace fs = std::filesystem;
using namespace gridfarm;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gridfarm_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + std::string(GRIDFARM_CLI) + " " + args + " >" + (dir_ / "stdout").string() + " 2>" +
                            (dir_ / "stderr").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string out() const { return read_file(dir_ / "stdout"); }
  std::string err() const { return read_file(dir_ / "stderr"); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenConfigAndValidate) {
  ASSERT_EQ(run("gen-config minimal -o " + path("min.yaml")), 0);
  EXPECT_EQ(config_to_json(config_from_yaml(read_file(path("min.yaml")))), config_to_json(preset("minimal")));
  EXPECT_EQ(run("validate " + path("min.yaml")), 0);
  ASSERT_EQ(run("gen-config avianflu-diane"), 0);
  EXPECT_EQ(config_from_yaml(out()).task_count, 308'585u);
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(run("gen-config no-such-preset"), 2);
  write_file_atomic(path("typo.yaml"), "campaign:\n  taks_count: 5\n");
  EXPECT_EQ(run("validate " + path("typo.yaml")), 2);
  auto cfg = preset("minimal");
  cfg.job_granularity = 0;
  write_file_atomic(path("zero.yaml"), config_to_yaml(cfg));
  EXPECT_EQ(run("validate " + path("zero.yaml")), 2);
  EXPECT_NE(err().find("job_granularity"), std::string::npos) << err();
  EXPECT_EQ(run("simulate " + path("zero.yaml") + " --out " + path("o")), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST_F(Cli, SimulateWritesArtifacts) {
  write_file_atomic(path("min.yaml"), config_to_yaml(preset("minimal")));
  ASSERT_EQ(run("simulate " + path("min.yaml") + " --out " + path("out")), 0) << err();
  for (const char* f : {"events.ndjson", "decisions.ndjson", "report.json", "report.csv", "ledger.csv"}) {
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  }
  const auto rep = report_from_json_text(read_file(path("out/report.json")));
  EXPECT_TRUE(rep.complete);
  EXPECT_EQ(rep.total_tasks_completed, 100u);
  EXPECT_NE(out().find("Crunching factor"), std::string::npos);

  ASSERT_EQ(run("simulate " + path("min.yaml") + " --out " + path("again") + " --format json"), 0);
  EXPECT_EQ(read_file(path("out/events.ndjson")), read_file(path("again/events.ndjson")));
  EXPECT_EQ(report_from_json_text(out()), rep);
  EXPECT_EQ(run("simulate " + path("min.yaml") + " --out " + path("x") + " --format xml"), 2);
  EXPECT_FALSE(fs::exists(dir_ / "x"));
}

TEST_F(Cli, JsonConfigAndSeedOverride) {
  auto cfg = preset("minimal");
  cfg.task_duration = DurationModel::lognormal(100.0, 0.5);
  write_file_atomic(path("c.json"), config_to_json(cfg).dump(2));
  ASSERT_EQ(run("simulate " + path("c.json") + " --out " + path("a")), 0) << err();
  ASSERT_EQ(run("simulate " + path("c.json") + " --out " + path("b")), 0);
  EXPECT_EQ(read_file(path("a/events.ndjson")), read_file(path("b/events.ndjson")));

  ASSERT_EQ(run("simulate " + path("c.json") + " --out " + path("s"), "GRIDFARM_SEED=5"), 0);
  EXPECT_EQ(report_from_json_text(read_file(path("s/report.json"))).seed, 5u);
  EXPECT_NE(read_file(path("a/events.ndjson")), read_file(path("s/events.ndjson")));
  EXPECT_EQ(run("simulate " + path("c.json") + " --out " + path("t"), "GRIDFARM_SEED=abc"), 2);
}

TEST_F(Cli, WallClockCutoffExitsThree) {
  auto cfg = preset("minimal");
  cfg.wall_clock_limit_s = 200.0;
  write_file_atomic(path("cut.yaml"), config_to_yaml(cfg));
  EXPECT_EQ(run("simulate " + path("cut.yaml") + " --out " + path("out")), 3);
  const auto rep = report_from_json_text(read_file(path("out/report.json")));
  EXPECT_FALSE(rep.complete);
  EXPECT_GT(rep.tasks_unfinished, 0u);
}

TEST_F(Cli, CompareTwoReports) {
  auto cfg = preset("minimal");
  write_file_atomic(path("a.yaml"), config_to_yaml(cfg));
  cfg.fabric.ces[0].cpu_slots = 20;
  write_file_atomic(path("b.yaml"), config_to_yaml(cfg));
  ASSERT_EQ(run("simulate " + path("a.yaml") + " --out " + path("a")), 0);
  ASSERT_EQ(run("simulate " + path("b.yaml") + " --out " + path("b")), 0);
  ASSERT_EQ(run("compare " + path("a/report.json") + " " + path("b/report.json")), 0) << err();
  EXPECT_NE(out().find("delta"), std::string::npos);
  EXPECT_NE(out().find("Peak concurrent CPUs"), std::string::npos);
  write_file_atomic(path("bad.json"), "{\"report_version\": 1}");
  EXPECT_EQ(run("compare " + path("a/report.json") + " " + path("bad.json")), 2);
}

TEST_F(Cli, MasterAndWorkerProcesses) {
  const std::string cmd = std::string(GRIDFARM_CLI) +
                          " master --tasks 8 --work-ms 2 --linger 0.5 --heartbeat-interval 0.2"
                          " --heartbeat-timeout 1 --out " + path("live");
  FILE* master = ::popen(cmd.c_str(), "r");
  ASSERT_NE(master, nullptr);
  char line[256] = {};
  ASSERT_NE(std::fgets(line, sizeof line, master), nullptr);
  const std::string first(line);
  const auto colon = first.rfind(':');
  ASSERT_NE(colon, std::string::npos) << first;
  const auto port = std::stoi(first.substr(colon + 1));
  EXPECT_EQ(run("worker --master 127.0.0.1:" + std::to_string(port) + " --id cli-w1"), 0) << err();
  while (std::fgets(line, sizeof line, master)) {
  }
  const int status = ::pclose(master);
  EXPECT_TRUE(WIFEXITED(status) && WEXITSTATUS(status) == 0);
  const auto rep = report_from_json_text(read_file(path("live/report.json")));
  EXPECT_EQ(rep.total_tasks_completed, 8u);
}
