#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>

#include "gridfarm/core.hpp"
#include "gridfarm/rng.hpp"

namespace gridfarm {

struct MockDockTask {
  TaskId task_id = 0;
  TimeMs work_ms = 0;
  std::uint64_t seed() const { return splitmix64(task_id ^ kSeedSalt); }

  static constexpr std::uint64_t kSeedSalt = 0x6d6f636b'646f636bULL;
};

/// Stand-in docking score: a 64-round splitmix chain over (task seed, fixed constant).
/// Pure function of the task id; tools/reference_hash_chain.py recomputes it.
constexpr std::uint64_t mock_score(TaskId task_id) {
  constexpr std::uint64_t kChainConstant = 0xd1b54a32d192ed03ULL;
  std::uint64_t h = splitmix64(task_id ^ MockDockTask::kSeedSalt);
  for (int round = 0; round < 64; ++round) h = splitmix64(h ^ kChainConstant);
  return h;
}

struct MockDockOutput {
  std::uint64_t score = 0;
  TimeMs cpu_consumed = 0;
};

namespace detail {

inline TimeMs thread_cpu_ms() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<TimeMs>(ts.tv_sec) * 1000 + ts.tv_nsec / 1'000'000;
}

}  // namespace detail

/// Burns CPU for about work_ms of wall time, then returns the deterministic score.
inline MockDockOutput mock_dock(const MockDockTask& task) {
  const auto cpu_before = detail::thread_cpu_ms();
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(task.work_ms);
  volatile std::uint64_t sink = task.seed();
  while (task.work_ms > 0 && std::chrono::steady_clock::now() < deadline) {
    std::uint64_t x = sink;
    for (int i = 0; i < 4096; ++i) x = x * 6364136223846793005ULL + 1442695040888963407ULL;
    sink = x;
  }
  return {mock_score(task.task_id), detail::thread_cpu_ms() - cpu_before};
}

}  // namespace gridfarm
