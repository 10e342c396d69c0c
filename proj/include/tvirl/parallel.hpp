#pragma once

#include <cstddef>
#include <functional>

namespace tvirl {

/// Environment variable holding the worker count for repetition batches.
inline constexpr const char* kWorkersEnv = "TVIRL_WORKERS";

/// TVIRL_WORKERS if set to a positive integer, else the hardware concurrency (at least 1).
unsigned worker_count();

/**
 * Runs task(i) for i in [0, count) on up to `workers` threads. Every index
 * runs exactly once; the first exception thrown by a task is rethrown after
 * all threads have joined.
 */
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& task, unsigned workers = worker_count());

}  // namespace tvirl
