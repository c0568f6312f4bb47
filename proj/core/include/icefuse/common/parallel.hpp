#pragma once

#include <cstddef>
#include <functional>

namespace icefuse {

/// Worker cap from ICEFUSE_THREADS (default 1, clamped to >= 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to `workers` threads. Each index is
/// processed exactly once; callers write results into slot i so the
/// outcome never depends on scheduling. Exceptions are rethrown (lowest
/// failing index first).
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body);

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  parallel_for(n, worker_count(), body);
}

}  // namespace icefuse
