#pragma once

#include <cstddef>
#include <functional>

namespace catbond {

// Runs body(i) for i in [0, n) on up to `threads` workers (<= 0 means one per
// hardware thread). Callers write results into per-index slots, so output
// never depends on scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

int resolve_threads(int threads);

}  // namespace catbond
