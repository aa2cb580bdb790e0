#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace mddmd {

/// Independent random streams derived from one master seed. A stream is a
/// pure function of (seed, purpose, index), so results never depend on the
/// order in which work items are scheduled.
enum class StreamPurpose : std::uint32_t {
  HiddenInitialConditions = 0x48494443u,
  KernelSamples = 0x4b45524eu,
};

inline std::mt19937_64 make_stream(std::uint64_t seed, StreamPurpose purpose,
                                   std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(i) for i in [0, count) on up to `threads` workers. If any call
/// throws, the exception from the smallest index is rethrown after all
/// workers finish.
template <typename Body>
void parallel_for(std::int64_t count, int threads, Body&& body) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(std::max<std::int64_t>(count, 1))));
  if (threads == 1) {
    for (std::int64_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::int64_t first_error_index = count;

  auto worker = [&] {
    for (;;) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (i < first_error_index) {
          first_error_index = i;
          first_error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace mddmd
