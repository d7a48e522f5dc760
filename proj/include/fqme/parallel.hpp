#pragma once

#include <cstddef>
#include <functional>

namespace fqme {

// Number of worker threads to use for a requested job count; values ≤ 0 mean
// "all available cores".
int resolve_jobs(int jobs);

// Calls body(i) for every i in [0, count) on up to `jobs` threads. Indices are
// handed out dynamically, so bodies must write only to their own slot. The
// first exception thrown by any body is rethrown after all workers finish.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body);

}  // namespace fqme
