#pragma once

#include <cstddef>
#include <functional>

namespace rmap {

/// Worker count used by parallel sections; 0 selects std::thread::hardware_concurrency().
void set_thread_count(int n);
int thread_count();

/// Runs body(i) for i in [0, n). Indices are split into contiguous static
/// chunks, so any body that writes only to slot i yields thread-count
/// independent output. The first exception thrown by a worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body);

} // namespace rmap
