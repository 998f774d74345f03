#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gridfarm/core.hpp"
#include "gridfarm/errors.hpp"

namespace gridfarm {

/// Published campaign aggregates and the per-task figures derived from them.
namespace constants {

inline constexpr double kWeek = 7.0 * kSecondsPerDay;

// Malaria data challenge, summer 2005.
inline constexpr std::uint64_t kMalariaDockings = 46'000'000;
inline constexpr double kMalariaCpuYears = 80.0;
inline constexpr double kMalariaWallSeconds = 6.0 * kWeek;
inline constexpr std::uint64_t kMalariaJobs = 72'000;
inline constexpr int kMalariaMaxCpus = 1'700;
inline constexpr double kMalariaOutputBytes = 1e12;
// 80 y / 46e6 dockings = 54.88 s per docking.
inline constexpr double kMalariaMeanTaskSeconds = kMalariaCpuYears * kSecondsPerYear / kMalariaDockings;
// 46e6 / 72,000 = 638.9 dockings per job, rounded up so the split gives 71,987 jobs.
inline constexpr std::uint64_t kMalariaGranularity = 639;
// 1 TB / 46e6 = 21,739 bytes per docking.
inline constexpr std::uint64_t kMalariaOutputBytesPerTask = 21'739;

// Avian flu challenge, push side.
inline constexpr std::uint64_t kAvianFluPushDockings = 2'160'095;
inline constexpr double kAvianFluPushCpuYears = 88.3;
inline constexpr double kAvianFluPushWallSeconds = 6.0 * kWeek;
inline constexpr std::uint64_t kAvianFluPushJobs = 54'000;
inline constexpr int kAvianFluPushMaxCpus = 1'700;
inline constexpr int kAvianFluPushCes = 69;
// 88.3 y / 2,160,095 = 1,290 s per docking.
inline constexpr double kAvianFluPushMeanTaskSeconds = kAvianFluPushCpuYears * kSecondsPerYear / kAvianFluPushDockings;
// 2,160,095 / 54,000 = 40.0 dockings per job.
inline constexpr std::uint64_t kAvianFluPushGranularity = 40;

// Avian flu challenge, pull side.
inline constexpr std::uint64_t kAvianFluPullDockings = 308'585;
inline constexpr double kAvianFluPullCpuYears = 16.7;
inline constexpr double kAvianFluPullWallSeconds = 30.0 * kSecondsPerDay;
inline constexpr std::uint64_t kAvianFluPullWorkerAgents = 2'585;
inline constexpr int kAvianFluPullMaxCpus = 240;
inline constexpr int kAvianFluPullCes = 36;
// 16.7 y / 308,585 = 1,707.8 s per docking.
inline constexpr double kAvianFluPullMeanTaskSeconds = kAvianFluPullCpuYears * kSecondsPerYear / kAvianFluPullDockings;
// 30 d x 240 slots / 2,585 agents = 240,627 s average agent lifetime.
inline constexpr double kAvianFluPullWorkerLifetimeSeconds = kAvianFluPullWallSeconds * kAvianFluPullMaxCpus / kAvianFluPullWorkerAgents;

// About 750 GB over both avian flu runs: 750e9 / (2,160,095 + 308,585) = 303,806 bytes.
inline constexpr std::uint64_t kAvianFluOutputBytesPerTask = 303'806;

// Lognormal spread of docking times and of grid scheduling latency.
inline constexpr double kTaskSigma = 0.5;
inline constexpr double kOverheadMeanSeconds = 1800.0;
inline constexpr double kOverheadSigma = 1.0;

inline constexpr double kPublishIntervalSeconds = 300.0;

}  // namespace constants

/// Success, WM, DM, Site, Unclassified, License, Application (docking script failures).
inline FailureModel malaria_failure_model() {
  FailureModel m;
  m.success = 0.46;
  m.set(FailureClass::WorkloadManagement, 0.10)
      .set(FailureClass::DataManagement, 0.04)
      .set(FailureClass::Site, 0.09)
      .set(FailureClass::Unclassified, 0.04)
      .set(FailureClass::LicenseServer, 0.23)
      .set(FailureClass::Application, 0.04);
  return m;
}

/// 83% logged success, 80% after the output check; the rest spread over the usual causes
/// with scheduling-time errors dominant.
inline FailureModel avianflu_failure_model() {
  FailureModel m;
  m.success = 0.80;
  m.set(FailureClass::OutputTransferLastMinute, 0.03)
      .set(FailureClass::WorkloadManagement, 0.10)
      .set(FailureClass::Site, 0.03)
      .set(FailureClass::DataManagement, 0.01)
      .set(FailureClass::Application, 0.02)
      .set(FailureClass::Unclassified, 0.01);
  return m;
}

/// `count` CEs sharing `total_slots` as evenly as possible, lower ids getting the extra slot.
inline std::vector<ComputingElementSpec> even_ces(int count, int total_slots, int queue_limit) {
  std::vector<ComputingElementSpec> out;
  for (int i = 0; i < count; ++i) {
    ComputingElementSpec ce;
    ce.id = static_cast<CeId>(i);
    ce.cpu_slots = total_slots / count + (i < total_slots % count ? 1 : 0);
    ce.queue_limit = queue_limit;
    out.push_back(ce);
  }
  return out;
}

inline std::vector<StorageElementSpec> two_ses() {
  return {{0, 100e6, 0.0}, {1, 100e6, 0.0}};
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"malaria-2005", "avianflu-wisdom", "avianflu-diane",
                                                 "minimal"};
  return names;
}

inline CampaignConfig preset(std::string_view name) {
  using namespace constants;
  CampaignConfig c;
  c.seed = 2005;
  c.scheduling_overhead = DurationModel::lognormal(kOverheadMeanSeconds, kOverheadSigma);
  c.fabric.ses = two_ses();
  c.fabric.brokers = {{0, 60}, {1, 60}};

  if (name == "malaria-2005") {
    c.scheduler_mode = SchedulerMode::Push;
    c.task_count = kMalariaDockings;
    c.task_duration = DurationModel::lognormal(kMalariaMeanTaskSeconds, kTaskSigma);
    c.job_granularity = kMalariaGranularity;
    c.fabric.ces = even_ces(17, kMalariaMaxCpus, 1000);
    c.fabric.information_system.publish_interval_s = kPublishIntervalSeconds;
    c.failure_model = malaria_failure_model();
    c.resubmission_policy = ResubmissionPolicy::automatic();
    c.license_required = true;
    c.output_bytes_per_task = kMalariaOutputBytesPerTask;
    c.dataset_bytes = 10'000'000'000ULL;
  } else if (name == "avianflu-wisdom") {
    c.scheduler_mode = SchedulerMode::Push;
    c.task_count = kAvianFluPushDockings;
    c.task_duration = DurationModel::lognormal(kAvianFluPushMeanTaskSeconds, kTaskSigma);
    c.job_granularity = kAvianFluPushGranularity;
    c.fabric.ces = even_ces(kAvianFluPushCes, kAvianFluPushMaxCpus, 1000);
    c.fabric.information_system.publish_interval_s = kPublishIntervalSeconds;
    c.failure_model = avianflu_failure_model();
    c.resubmission_policy = ResubmissionPolicy::manual(600.0, 3);
    c.output_bytes_per_task = kAvianFluOutputBytesPerTask;
    c.dataset_bytes = 10'000'000'000ULL;
  } else if (name == "avianflu-diane") {
    c.scheduler_mode = SchedulerMode::Pull;
    c.task_count = kAvianFluPullDockings;
    c.task_duration = DurationModel::lognormal(kAvianFluPullMeanTaskSeconds, kTaskSigma);
    c.fabric.ces = even_ces(kAvianFluPullCes, kAvianFluPullMaxCpus, 1000);
    c.fabric.information_system.publish_interval_s = kPublishIntervalSeconds;
    c.failure_model = avianflu_failure_model();
    c.resubmission_policy = ResubmissionPolicy::automatic();
    c.output_bytes_per_task = kAvianFluOutputBytesPerTask;
    c.pull.worker_count = kAvianFluPullMaxCpus;
    c.pull.worker_lifetime_s = kAvianFluPullWorkerLifetimeSeconds;
  } else if (name == "minimal") {
    c.scheduler_mode = SchedulerMode::Push;
    c.seed = 1;
    c.task_count = 100;
    c.task_duration = DurationModel::constant(100.0);
    c.job_granularity = 10;
    c.fabric.ces = even_ces(1, 10, 100);
    c.fabric.brokers = {{0, 600}};
    c.scheduling_overhead = DurationModel::constant(0.0);
  } else {
    throw UnknownPreset("unknown preset '" + std::string(name) + "'");
  }
  return c;
}

/// Shrinks a campaign by `factor`: task count and every concurrency cap (CE slots, worker
/// count) are divided, with a floor of one. Durations and per-job overheads are untouched.
inline CampaignConfig scale(CampaignConfig c, std::uint64_t factor) {
  if (factor <= 1) return c;
  auto shrink = [factor](std::uint64_t v) { return std::max<std::uint64_t>(1, v / factor); };
  c.task_count = shrink(c.task_count);
  for (auto& ce : c.fabric.ces) ce.cpu_slots = static_cast<int>(shrink(static_cast<std::uint64_t>(ce.cpu_slots)));
  c.pull.worker_count = static_cast<int>(shrink(static_cast<std::uint64_t>(c.pull.worker_count)));
  if (c.fabric.license.token_capacity) {
    c.fabric.license.token_capacity =
        static_cast<int>(shrink(static_cast<std::uint64_t>(*c.fabric.license.token_capacity)));
  }
  return c;
}

}  // namespace gridfarm
