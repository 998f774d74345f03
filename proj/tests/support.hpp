#pragma once

#include "gridfarm/core.hpp"
#include "gridfarm/presets.hpp"

namespace gridfarm::fixtures {

// n CEs of `slots` each, one fast broker, live information system, two clean SEs.
inline CampaignConfig flat_config(std::uint64_t tasks, std::uint64_t granularity, int ces, int slots,
                                  double task_s = 100.0) {
  CampaignConfig c;
  c.task_count = tasks;
  c.job_granularity = granularity;
  c.task_duration = DurationModel::constant(task_s);
  for (int i = 0; i < ces; ++i) {
    ComputingElementSpec ce;
    ce.id = static_cast<CeId>(i);
    ce.cpu_slots = slots;
    ce.queue_limit = 100000;
    c.fabric.ces.push_back(ce);
  }
  c.fabric.brokers = {BrokerSpec{0, 100000}};
  c.fabric.ses = {StorageElementSpec{0, 1e9, 0.0}, StorageElementSpec{1, 1e9, 0.0}};
  c.seed = 7;
  return c;
}

inline CampaignConfig with_malaria_failures(CampaignConfig c) {
  c.failure_model = malaria_failure_model();
  return c;
}

}  // namespace gridfarm::fixtures
