#pragma once

#include <cstddef>
#include <functional>

namespace mvgw {

/// Caps the worker count used by every parallel loop in the library.
/// Zero restores the default (hardware concurrency).
void set_max_threads(std::size_t count);
std::size_t max_threads();

/// Runs `body(i)` for i in [0, count) across up to max_threads() workers.
/// Each index is visited exactly once; callers must write to disjoint
/// locations. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace mvgw
