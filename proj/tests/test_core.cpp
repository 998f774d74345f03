#include <gtest/gtest.h>

#include <map>
#include <random>

#include "gridfarm/core.hpp"
#include "gridfarm/presets.hpp"
#include "gridfarm/push.hpp"
#include "support.hpp"

using namespace gridfarm;

namespace {

constexpr std::array kStates = {JobState::Created, JobState::Submitted, JobState::Scheduled, JobState::Queued,
                                JobState::Running, JobState::Done,      JobState::Aborted};

// Written out by hand from the lifecycle diagram, independent of is_legal_job_edge.
const std::set<std::pair<JobState, JobState>> kLegal = {
    {JobState::Created, JobState::Submitted},   {JobState::Submitted, JobState::Scheduled},
    {JobState::Submitted, JobState::Aborted},   {JobState::Scheduled, JobState::Queued},
    {JobState::Scheduled, JobState::Aborted},   {JobState::Queued, JobState::Running},
    {JobState::Queued, JobState::Aborted},      {JobState::Running, JobState::Done},
    {JobState::Running, JobState::Aborted},     {JobState::Done, JobState::Aborted},
};

GridJob at_state(JobState s) {
  GridJob j;
  j.state = s;
  j.timestamps[s] = 10;
  return j;
}

}  // namespace

TEST(JobTransition, EdgeTableMatchesLifecycle) {
  for (auto from : kStates) {
    for (auto to : kStates) {
      EXPECT_EQ(is_legal_job_edge(from, to), kLegal.contains({from, to}))
          << to_string(from) << " -> " << to_string(to);
    }
  }
}

TEST(JobTransition, HappyPathStampsEveryState) {
  GridJob j;
  j = transition(j, JobState::Submitted, 0);
  j = transition(j, JobState::Scheduled, 5);
  j = transition(j, JobState::Queued, 5);
  j = transition(j, JobState::Running, 7);
  j = transition(j, JobState::Done, 100);
  EXPECT_EQ(j.state, JobState::Done);
  EXPECT_EQ(j.timestamps.size(), 5u);
  EXPECT_EQ(j.timestamps.at(JobState::Running), 7);
  EXPECT_FALSE(j.failure_class);
}

TEST(JobTransition, RejectsIllegalEdges) {
  EXPECT_THROW(transition(at_state(JobState::Created), JobState::Running, 20), IllegalTransition);
  EXPECT_THROW(transition(at_state(JobState::Aborted), JobState::Submitted, 20), IllegalTransition);
  EXPECT_THROW(transition(at_state(JobState::Done), JobState::Running, 20), IllegalTransition);
}

TEST(JobTransition, AbortNeedsClassAndOnlyAbortTakesOne) {
  EXPECT_THROW(transition(at_state(JobState::Running), JobState::Aborted, 20), IllegalTransition);
  EXPECT_THROW(transition(at_state(JobState::Running), JobState::Done, 20, FailureClass::Site), IllegalTransition);
  const auto j = transition(at_state(JobState::Running), JobState::Aborted, 20, FailureClass::Site);
  EXPECT_EQ(j.failure_class, FailureClass::Site);
}

TEST(JobTransition, DoneToAbortedOnlyForLastMinuteTransfer) {
  EXPECT_THROW(transition(at_state(JobState::Done), JobState::Aborted, 20, FailureClass::Site), IllegalTransition);
  const auto j =
      transition(at_state(JobState::Done), JobState::Aborted, 20, FailureClass::OutputTransferLastMinute);
  EXPECT_EQ(j.state, JobState::Aborted);
}

TEST(JobTransition, TimeRegression) {
  EXPECT_THROW(transition(at_state(JobState::Queued), JobState::Running, 9), TimeRegression);
  EXPECT_NO_THROW(transition(at_state(JobState::Queued), JobState::Running, 10));
}

TEST(JobTransition, RandomWalksNeverLeaveTheTable) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    GridJob j;
    TimeMs t = 0;
    for (int step = 0; step < 8; ++step) {
      const auto to = kStates[rng() % kStates.size()];
      std::optional<FailureClass> cls;
      if (to == JobState::Aborted) cls = kAllFailureClasses[rng() % kAllFailureClasses.size()];
      t += static_cast<TimeMs>(rng() % 3);
      const auto before = j.state;
      try {
        j = transition(j, to, t, cls);
        ASSERT_TRUE(kLegal.contains({before, to}));
      } catch (const IllegalTransition&) {
        ASSERT_EQ(j.state, before);
      }
    }
  }
}

TEST(TaskTransition, Edges) {
  Task t;
  advance(t, TaskState::Assigned);
  advance(t, TaskState::Running);
  advance(t, TaskState::Failed);
  advance(t, TaskState::Pending);
  advance(t, TaskState::Assigned);
  advance(t, TaskState::Running);
  advance(t, TaskState::Completed);
  EXPECT_THROW(advance(t, TaskState::Pending), IllegalTransition);
  Task u;
  EXPECT_THROW(advance(u, TaskState::Running), IllegalTransition);
}

// Rebuilds every job's final state from the event log alone and checks it against what
// the simulator holds.
TEST(JobTransition, LogReplayReproducesFinalStates) {
  auto cfg = fixtures::flat_config(100, 1, 4, 10);
  cfg.failure_model = avianflu_failure_model();
  cfg.fabric.ses[0].transfer_failure_rate = 0.05;
  const auto r = run_push_campaign(cfg);
  ASSERT_TRUE(r.complete);

  std::map<JobId, GridJob> replay;
  auto get = [&](JobId id) -> GridJob& {
    auto& j = replay[id];
    j.job_id = id;
    return j;
  };
  for (const auto& ev : r.events) {
    switch (ev.kind) {
      case EventKind::JobSubmission: {
        auto& j = get(ev.subject_id);
        j = transition(j, JobState::Submitted, ev.fire_at);
        break;
      }
      case EventKind::JobDispatch: {
        auto& j = get(ev.subject_id);
        if (ev.detail.contains("direct")) j = transition(j, JobState::Submitted, ev.fire_at);
        if (ev.detail.value("result", "matched") == "matched") j = transition(j, JobState::Scheduled, ev.fire_at);
        break;
      }
      case EventKind::JobStart: {
        auto& j = get(ev.subject_id);
        if (j.state == JobState::Scheduled) j = transition(j, JobState::Queued, j.timestamps.at(JobState::Scheduled));
        j = transition(j, JobState::Running, ev.fire_at);
        break;
      }
      case EventKind::JobEnd: {
        auto& j = get(ev.subject_id);
        const auto outcome = ev.detail.at("outcome").get<std::string>();
        if (outcome == "exited") {
          j = transition(j, JobState::Done, ev.fire_at);
        } else if (outcome == "aborted") {
          j = transition(j, JobState::Aborted, ev.fire_at,
                         parse_failure_class(ev.detail.at("class").get<std::string>()));
        }
        break;
      }
      case EventKind::TransferEnd: {
        if (ev.detail.at("phase") != "output") break;
        auto& j = get(ev.subject_id);
        j = transition(j, JobState::Done, ev.fire_at);
        if (!ev.detail.at("ok").get<bool>()) {
          j = transition(j, JobState::Aborted, ev.fire_at, FailureClass::OutputTransferLastMinute);
        }
        break;
      }
      default: break;
    }
  }

  ASSERT_EQ(replay.size(), r.jobs.size());
  EXPECT_GE(r.jobs.size(), 100u);
  std::size_t aborted = 0;
  for (const auto& job : r.jobs) {
    const auto& j = replay.at(job.job_id);
    EXPECT_EQ(j.state, job.state) << "job " << job.job_id;
    EXPECT_EQ(j.failure_class, job.failure_class) << "job " << job.job_id;
    if (job.reached(JobState::Done)) {
      EXPECT_EQ(j.timestamps.at(JobState::Done), job.timestamps.at(JobState::Done));
    }
    if (job.state == JobState::Aborted) ++aborted;
  }
  EXPECT_GT(aborted, 0u);
}

TEST(ValidateConfig, MalariaFailureRatesAreAccepted) {
  auto c = fixtures::with_malaria_failures(fixtures::flat_config(10, 1, 1, 1));
  EXPECT_TRUE(validate_config(c).empty());
  EXPECT_NEAR(c.failure_model.total(), 1.0, 1e-12);
}

TEST(ValidateConfig, ReportsEachBrokenRule) {
  auto c = fixtures::flat_config(10, 1, 1, 1);
  c.task_count = 0;
  c.failure_model.success = 0.9;
  c.fabric.ces[0].speed = 1.5;
  c.fabric.ses.pop_back();
  const auto v = validate_config(c);
  auto has = [&](const std::string& field) {
    return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.field == field; });
  };
  EXPECT_TRUE(has("campaign.task_count"));
  EXPECT_TRUE(has("failures"));
  EXPECT_TRUE(has("fabric.ces[0].speed"));
  EXPECT_TRUE(has("fabric.ses"));
  EXPECT_EQ(v.size(), 4u);
}

TEST(ValidateConfig, RatesOffByMoreThanRoundingFail) {
  auto c = fixtures::flat_config(10, 1, 1, 1);
  c.failure_model = malaria_failure_model();
  c.failure_model.set(FailureClass::Site, 0.10);
  const auto v = validate_config(c);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].rule.find("1.01"), std::string::npos);
}

TEST(ValidateConfig, PresetsAreValid) {
  for (const auto& name : preset_names()) EXPECT_TRUE(validate_config(preset(name)).empty()) << name;
}
