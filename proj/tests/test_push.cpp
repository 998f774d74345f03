#include <gtest/gtest.h>

#include <map>

#include "gridfarm/metrics.hpp"
#include "gridfarm/presets.hpp"
#include "gridfarm/push.hpp"
#include "support.hpp"

using namespace gridfarm;

TEST(Split, CeilingArithmetic) {
  const auto a = split_shape(2'160'095, 40);
  EXPECT_EQ(a.jobs, 54'003u);
  EXPECT_EQ(a.last_job_size, 15u);
  EXPECT_EQ(split_shape(46'000'000, 639).jobs, 71'988u);
  EXPECT_EQ(split_shape(100, 10).last_job_size, 10u);
  EXPECT_THROW(split_shape(100, 0), InvalidGranularity);
}

TEST(Split, SkeletonsCoverEveryTaskOnce) {
  const auto jobs = split_tasks(1003, 17);
  std::vector<int> seen(1003, 0);
  for (const auto& j : jobs) {
    EXPECT_EQ(j.state, JobState::Created);
    for (auto t : j.task_ids) ++seen[t];
  }
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }));
  EXPECT_EQ(jobs.back().task_ids.size(), 1003u - 58u * 17u);
}

// Constant durations and no failures: the install phase logs one transfer per SE, each
// probe dispatch/start/end, and each payload job submission/dispatch/start/end/transfer.
TEST(PushCampaign, EventCountMatchesHandBudget) {
  const std::uint64_t tasks = 1000;
  const int ces = 4;
  for (std::uint64_t g : {1u, 7u, 25u}) {
    const auto cfg = fixtures::flat_config(tasks, g, ces, 8);
    const auto r = run_push_campaign(cfg);
    ASSERT_TRUE(r.complete);
    const std::uint64_t jobs = (tasks + g - 1) / g;
    const std::uint64_t budget = cfg.fabric.ses.size() + 3u * ces + 5u * jobs;
    EXPECT_EQ(r.events.size(), budget) << "granularity " << g;
  }
}

TEST(PushCampaign, MinimalPresetHasIdealMetrics) {
  const auto r = run_push_campaign(preset("minimal"));
  const auto rep = compute_report(r);
  EXPECT_TRUE(rep.complete);
  EXPECT_EQ(rep.total_tasks_completed, 100u);
  EXPECT_DOUBLE_EQ(rep.wall_clock_seconds, 1000.0);
  EXPECT_DOUBLE_EQ(rep.crunching_factor, 10.0);
  EXPECT_DOUBLE_EQ(rep.distribution_efficiency, 1.0);
  EXPECT_DOUBLE_EQ(rep.success_rate_logged, 1.0);
  EXPECT_TRUE(rep.failure_attribution.empty());
}

TEST(PushCampaign, PhasesRunInOrder) {
  PushCampaign c(fixtures::flat_config(10, 1, 1, 1));
  EXPECT_THROW(c.run_test_phase(), Error);
  EXPECT_THROW(c.run_production(), Error);
  c.run_install_phase();
  EXPECT_THROW(c.run_production(), Error);
  c.run_test_phase();
  EXPECT_TRUE(c.run_production().complete);
}

TEST(PushCampaign, WallClockCutoffLeavesTasksUnfinished) {
  auto cfg = fixtures::flat_config(100, 1, 1, 2);
  cfg.wall_clock_limit_s = 1000;
  const auto r = run_push_campaign(cfg);
  EXPECT_FALSE(r.complete);
  EXPECT_EQ(r.end_time - r.production_start, 1'000'000);
  const auto rep = compute_report(r);
  EXPECT_GT(rep.tasks_unfinished, 0u);
  EXPECT_EQ(rep.total_tasks_completed + rep.tasks_unfinished, 100u);
}

// Conservation: whatever failed, each task ends Completed with exactly one successful
// attempt, and attempts never overlap for one task.
TEST(PushCampaign, TaskConservationUnderRandomFailures) {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    auto cfg = fixtures::flat_config(240, 1 + seed % 5, 3, 4);
    cfg.seed = seed;
    cfg.failure_model = seed % 2 ? malaria_failure_model() : avianflu_failure_model();
    cfg.task_duration = DurationModel::lognormal(100, 0.5);
    cfg.scheduling_overhead = DurationModel::uniform(0, 60);
    cfg.fabric.ses[1].transfer_failure_rate = 0.05;
    if (seed % 3 == 0) {
      cfg.resubmission_policy.mode = ResubmissionMode::Manual;
      cfg.resubmission_policy.manual_delay_s = 120;
    }
    const auto r = run_push_campaign(cfg);
    ASSERT_TRUE(r.complete) << "seed " << seed;
    for (const auto& t : r.tasks) {
      ASSERT_EQ(t.state, TaskState::Completed);
      const auto ok = std::count_if(t.attempts.begin(), t.attempts.end(),
                                    [](const AttemptRecord& a) { return a.outcome.success(); });
      ASSERT_EQ(ok, 1) << "task " << t.task_id << " seed " << seed;
      for (std::size_t i = 1; i < t.attempts.size(); ++i) ASSERT_GE(t.attempts[i].start, t.attempts[i - 1].end);
    }
    for (std::size_t i = 1; i < r.events.size(); ++i) ASSERT_GE(r.events[i].fire_at, r.events[i - 1].fire_at);
    for (const auto& j : r.jobs) {
      TimeMs prev = -1;
      for (auto s : {JobState::Submitted, JobState::Scheduled, JobState::Queued, JobState::Running,
                     JobState::Done, JobState::Aborted}) {
        if (!j.reached(s)) continue;
        ASSERT_GE(j.timestamps.at(s), prev);
        prev = j.timestamps.at(s);
      }
    }
  }
}

// Second counting route: last terminal status per job id straight off the NDJSON text,
// then tallied against the job records as well.
TEST(PushCampaign, AttributionMatchesIndependentLogScan) {
  auto cfg = fixtures::flat_config(2000, 1, 5, 20);
  cfg.failure_model = avianflu_failure_model();
  cfg.failure_model.success -= 0.05;
  cfg.failure_model.set(FailureClass::LicenseServer, 0.05);
  cfg.fabric.ses[0].transfer_failure_rate = 0.02;
  const auto r = run_push_campaign(cfg);
  const auto rep = compute_report(r);

  std::map<JobId, std::string> terminal;
  std::set<JobId> probes;
  for (const auto& ev : parse_ndjson(to_ndjson(r.events))) {
    if (ev.kind == EventKind::JobEnd) {
      if (ev.detail.at("role").get<std::string>() == "probe") {
        probes.insert(ev.subject_id);
        continue;
      }
      const auto o = ev.detail.at("outcome").get<std::string>();
      terminal[ev.subject_id] = o == "aborted" ? ev.detail.at("class").get<std::string>() : o;
    } else if (ev.kind == EventKind::TransferEnd && ev.detail.at("phase") == "output") {
      terminal[ev.subject_id] = ev.detail.at("ok").get<bool>() ? "ok" : "OutputTransferLastMinute";
    }
  }
  std::map<std::string, int> tally;
  int terminated = 0;
  for (const auto& [job, status] : terminal) {
    if (status == "computed") continue;
    ++terminated;
    ++tally[status];
  }
  ASSERT_GT(terminated, 0);
  std::map<FailureClass, double> expected;
  for (const auto& [status, n] : tally) {
    if (status == "ok" || status == "exited") continue;
    expected[*parse_failure_class(status)] = static_cast<double>(n) / terminated;
  }
  EXPECT_EQ(rep.failure_attribution, expected);
  EXPECT_EQ(rep.success_rate_after_output_check, static_cast<double>(tally["ok"]) / terminated);
  EXPECT_EQ(rep.success_rate_logged,
            static_cast<double>(tally["ok"] + tally["OutputTransferLastMinute"]) / terminated);

  std::map<FailureClass, int> from_jobs;
  for (const auto& j : r.jobs) {
    if (j.kind == JobKind::Probe || !j.failure_class) continue;
    ++from_jobs[*j.failure_class];
  }
  for (const auto& [cls, share] : expected) {
    EXPECT_EQ(from_jobs[cls], static_cast<int>(std::lround(share * terminated))) << to_string(cls);
  }
}

TEST(PushCampaign, ProbesStayOutOfJobCountsAndConcurrency) {
  auto cfg = fixtures::flat_config(50, 5, 3, 1);
  const auto r = run_push_campaign(cfg);
  const auto rep = compute_report(r);
  EXPECT_EQ(rep.cumulative_grid_jobs, 10u);
  EXPECT_EQ(r.jobs.size(), 13u);
  EXPECT_EQ(rep.max_concurrent_cpus, 3u);
  for (const auto& o : r.occupancy) EXPECT_NE(o.kind, JobKind::Probe);
}

TEST(PushCampaign, LicenseRefusalShareTracksCalibration) {
  auto cfg = fixtures::flat_config(4000, 1, 10, 40, 30.0);
  cfg.failure_model = malaria_failure_model();
  cfg.license_required = true;
  const auto rep = compute_report(run_push_campaign(cfg));
  EXPECT_NEAR(rep.failure_attribution.at(FailureClass::LicenseServer), 0.23, 0.02);
}

TEST(PushCampaign, ExhaustedLicensePoolRefusesStarts) {
  auto cfg = fixtures::flat_config(40, 1, 1, 10);
  cfg.license_required = true;
  cfg.fabric.license.token_capacity = 4;
  // Refused jobs come straight back through the broker; keep the retry rate realistic.
  cfg.fabric.brokers[0].throttle_per_minute = 6;
  const auto r = run_push_campaign(cfg);
  ASSERT_TRUE(r.complete);
  EXPECT_LE(max_concurrent(r.occupancy), 10u);
  const auto rep = compute_report(r);
  EXPECT_GT(rep.failure_attribution.at(FailureClass::LicenseServer), 0.0);
  // Only licensed jobs run to completion, and at most four of those overlap.
  std::vector<Occupancy> licensed;
  for (const auto& j : r.jobs) {
    if (j.state != JobState::Done) continue;
    licensed.push_back({j.job_id, 0, j.kind, j.timestamps.at(JobState::Running), j.timestamps.at(JobState::Done)});
  }
  EXPECT_LE(max_concurrent(licensed), 4u);
}

TEST(PushCampaign, OutputRegistrationLedger) {
  auto cfg = fixtures::flat_config(300, 4, 2, 5);
  cfg.output_bytes_per_task = 21'739;
  cfg.fabric.ses[1].transfer_failure_rate = 0.1;
  const auto r = run_push_campaign(cfg);
  const auto rep = compute_report(r);
  ASSERT_EQ(r.ledger.entries.size(), 300u);
  std::set<TaskId> seen;
  for (const auto& e : r.ledger.entries) {
    EXPECT_TRUE(seen.insert(e.task_id).second);
    EXPECT_NE(e.primary_se, e.backup_se);
  }
  EXPECT_EQ(r.ledger.bytes_registered, 300u * 21'739u);
  EXPECT_EQ(rep.bytes_produced, r.ledger.bytes_registered);
  EXPECT_GT(r.ledger.registration_failures, 0u);
}

TEST(PushCampaign, MalariaOutputVolumeIsAboutATerabyte) {
  const auto cfg = preset("malaria-2005");
  const double total = static_cast<double>(cfg.output_bytes_per_task) * static_cast<double>(cfg.task_count);
  EXPECT_NEAR(total, 1e12, 1e10);
  const auto jobs = split_shape(cfg.task_count, cfg.job_granularity).jobs;
  EXPECT_NEAR(total / static_cast<double>(jobs), 14e6, 0.5e6);
}

// Automatic resubmission piles onto the falsely free failing CE; the operator policy
// blacklists it and wastes less CPU on the same seed.
TEST(PushCampaign, SinkholeAndItsSuppression) {
  auto cfg = fixtures::flat_config(600, 1, 4, 10, 600.0);
  cfg.fabric.ces[0].misreported = true;
  cfg.fabric.ces[0].crash_after_s = 60;
  cfg.fabric.information_system.publish_interval_s = 300;
  cfg.fabric.brokers[0].throttle_per_minute = 30;
  cfg.wall_clock_limit_s = 2 * kSecondsPerDay;
  const auto automatic = run_push_campaign(cfg);
  std::size_t resub = 0;
  std::size_t resub_on_sink = 0;
  for (const auto& ev : automatic.events) {
    if (ev.kind != EventKind::JobDispatch || ev.detail.value("result", "") != "matched") continue;
    if (automatic.jobs[ev.subject_id].generation == 0) continue;
    ++resub;
    if (ev.detail.at("ce").get<CeId>() == 0) ++resub_on_sink;
  }
  ASSERT_GT(resub, 0u);
  EXPECT_GT(static_cast<double>(resub_on_sink) / resub, 0.5);

  cfg.resubmission_policy = {ResubmissionMode::Manual, 600.0, 3};
  const auto manual = run_push_campaign(cfg);
  std::optional<TimeMs> blacklisted;
  for (const auto& ev : manual.events) {
    if (ev.kind == EventKind::OperatorAction && ev.detail.value("action", "") == "blacklist") blacklisted = ev.fire_at;
    if (blacklisted && ev.kind == EventKind::JobDispatch && ev.fire_at > *blacklisted) {
      EXPECT_NE(ev.detail.value("ce", 99u), 0u);
    }
  }
  ASSERT_TRUE(blacklisted);
  EXPECT_LT(compute_report(manual).wasted_cpu_seconds, compute_report(automatic).wasted_cpu_seconds);
}
