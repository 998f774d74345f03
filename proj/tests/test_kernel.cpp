#include <gtest/gtest.h>

#include <random>

#include "gridfarm/push.hpp"
#include "gridfarm/rng.hpp"
#include "gridfarm/sim_kernel.hpp"
#include "support.hpp"

using namespace gridfarm;

TEST(Kernel, FiresInTimeThenSequenceOrder) {
  Kernel k;
  k.schedule(50, EventKind::JobStart, 1);
  k.schedule(10, EventKind::JobStart, 2);
  k.schedule(50, EventKind::JobStart, 3);
  k.schedule(10, EventKind::JobStart, 4);
  const auto fired = k.run_until(std::nullopt);
  std::vector<std::uint64_t> order;
  for (const auto& e : fired) order.push_back(e.subject_id);
  EXPECT_EQ(order, (std::vector<std::uint64_t>{2, 4, 1, 3}));
  EXPECT_EQ(k.now(), 50);
}

TEST(Kernel, PastEventIsRejected) {
  Kernel k;
  k.schedule(100, EventKind::JobStart, 0);
  k.run_until(std::nullopt);
  EXPECT_THROW(k.schedule(99, EventKind::JobEnd, 0), PastEvent);
  EXPECT_NO_THROW(k.schedule(100, EventKind::JobEnd, 0));
}

TEST(Kernel, HandlersScheduleAndCancel) {
  Kernel k;
  k.schedule(0, EventKind::JobSubmission, 0);
  std::uint64_t doomed = 0;
  k.run_until(std::nullopt, [&](Kernel& kk, const Event& e) {
    if (e.kind == EventKind::JobSubmission) {
      kk.schedule(kk.now() + 5, EventKind::JobStart, 0);
      doomed = kk.schedule(kk.now() + 6, EventKind::JobEnd, 0);
    } else if (e.kind == EventKind::JobStart) {
      kk.cancel(doomed);
    }
  });
  ASSERT_EQ(k.log().size(), 2u);
  EXPECT_EQ(k.log()[1].kind, EventKind::JobStart);
  EXPECT_TRUE(k.idle());
}

TEST(Kernel, LimitAndStop) {
  Kernel k;
  for (int i = 0; i < 10; ++i) k.schedule(i * 10, EventKind::HeartbeatDue, static_cast<std::uint64_t>(i));
  EXPECT_EQ(k.run_until(35).size(), 4u);
  k.run_until(std::nullopt, [](Kernel& kk, const Event& e) {
    if (e.subject_id == 6) kk.stop();
  });
  EXPECT_EQ(k.log().size(), 7u);
  EXPECT_FALSE(k.idle());
}

TEST(Kernel, HeapOrderMatchesSortedOrderOnRandomLoads) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Kernel k;
    std::vector<std::pair<TimeMs, std::uint64_t>> expect;
    for (std::uint64_t i = 0; i < 300; ++i) {
      const TimeMs t = static_cast<TimeMs>(rng() % 40);
      k.schedule(t, EventKind::WorkerPoll, i);
      expect.emplace_back(t, i);
    }
    std::sort(expect.begin(), expect.end());
    const auto fired = k.run_until(std::nullopt);
    ASSERT_EQ(fired.size(), expect.size());
    for (std::size_t i = 0; i < fired.size(); ++i) {
      ASSERT_EQ(fired[i].fire_at, expect[i].first);
      ASSERT_EQ(fired[i].subject_id, expect[i].second);
    }
  }
}

TEST(EventLog, NdjsonRoundTrip) {
  auto cfg = fixtures::with_malaria_failures(fixtures::flat_config(200, 5, 3, 4));
  const auto r = run_push_campaign(cfg);
  const auto text = to_ndjson(r.events);
  const auto back = parse_ndjson(text);
  EXPECT_EQ(to_ndjson(back), text);
  EXPECT_EQ(log_hash(back), log_hash(r.events));
  const auto first = nlohmann::ordered_json::parse(text.substr(0, text.find('\n')));
  std::vector<std::string> keys;
  for (const auto& [key, value] : first.items()) keys.push_back(key);
  EXPECT_EQ(keys, (std::vector<std::string>{"t_ms", "seq", "kind", "subject_id", "detail"}));
}

TEST(Determinism, SameSeedSameLogDifferentSeedDifferentLog) {
  auto cfg = fixtures::with_malaria_failures(fixtures::flat_config(300, 3, 3, 5));
  cfg.scheduling_overhead = DurationModel::lognormal(60, 1.0);
  cfg.task_duration = DurationModel::lognormal(100, 0.5);
  const auto a = run_push_campaign(cfg);
  const auto b = run_push_campaign(cfg);
  EXPECT_EQ(to_ndjson(a.events), to_ndjson(b.events));
  cfg.seed += 1;
  const auto c = run_push_campaign(cfg);
  EXPECT_NE(log_hash(a.events), log_hash(c.events));
}

TEST(Rng, StreamsAreIndependentOfEachOther) {
  RngStream a(5, "outcome", 3);
  RngStream b(5, "outcome", 3);
  RngStream other(5, "overhead", 3);
  for (int i = 0; i < 100; ++i) other.next_u64();
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(RngStream(5, "outcome", 3).next_u64(), RngStream(5, "outcome", 4).next_u64());
  EXPECT_NE(RngStream(5, "outcome", 3).next_u64(), RngStream(6, "outcome", 3).next_u64());
}

TEST(Rng, LognormalHasRequestedMean) {
  RngStream r(1, "t");
  double sum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += r.lognormal_with_mean(1800.0, 1.0);
  EXPECT_NEAR(sum / n, 1800.0, 1800.0 * 0.02);
}

TEST(Rng, CategoricalFrequencies) {
  RngStream r(2, "t");
  const std::vector<double> w = {0.46, 0.10, 0.04, 0.09, 0.04, 0.23, 0.04};
  std::vector<int> hits(w.size());
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++hits[r.categorical(w)];
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(hits[i] / double(n), w[i], 0.006) << i;
}
