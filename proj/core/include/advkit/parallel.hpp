#pragma once

#include <cstddef>
#include <functional>

namespace advkit {

/// Process-wide cap on worker threads used by per-image loops. Results never
/// depend on this value: work is split into fixed chunks and reduced in order.
void set_thread_count(unsigned n);
unsigned thread_count() noexcept;

/// Calls body(i) for every i in [0, count), spread across thread_count()
/// workers. Each index is visited exactly once; body must write only to
/// index-owned state. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace advkit
