#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gridfarm/core.hpp"
#include "gridfarm/master.hpp"
#include "gridfarm/sim_kernel.hpp"

namespace gridfarm {

/// A CPU slot held by a grid job: [start, end).
struct Occupancy {
  JobId job = 0;
  CeId ce = 0;
  JobKind kind = JobKind::Payload;
  TimeMs start = 0;
  TimeMs end = 0;
};

struct StagingEntry {
  SeId se = 0;
  TimeMs staging_time = 0;
  bool ok = true;
  std::optional<FailureClass> failure;
};

struct ProbeEntry {
  CeId ce = 0;
  JobId probe_job = 0;
  bool passed = false;
};

struct LedgerEntry {
  TaskId task_id = 0;
  JobId job_id = 0;
  CeId ce_id = 0;
  SeId primary_se = 0;
  SeId backup_se = 0;
  std::uint64_t bytes = 0;
};

struct RegistrationLedger {
  std::vector<LedgerEntry> entries;
  std::uint64_t registration_failures = 0;  // retried attempts
  std::uint64_t bytes_registered = 0;
};

/// Everything a finished (or cut-off) simulated campaign leaves behind.
struct CampaignResult {
  CampaignConfig config;
  std::vector<Task> tasks;
  std::vector<GridJob> jobs;
  std::vector<Occupancy> occupancy;
  EventLog events;
  std::vector<DecisionRecord> decisions;
  TimeMs production_start = 0;
  TimeMs end_time = 0;
  bool complete = false;

  std::vector<StagingEntry> staging;
  std::vector<ProbeEntry> probes;
  RegistrationLedger ledger;

  std::uint64_t requeues = 0;
  std::uint64_t dead_workers = 0;
  std::uint64_t stale_results = 0;
  std::uint64_t merged_results = 0;
};

}  // namespace gridfarm
