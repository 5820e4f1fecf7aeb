#pragma once

#include <cstddef>
#include <functional>

namespace sbical {

// Worker count used by parallel_for; 1 runs inline. 0 means hardware
// concurrency.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Calls fn(i) for i in [0, n) on up to thread_count() threads. Results must
// not depend on scheduling: callers seed per item. If any call throws, the
// exception from the lowest index is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace sbical
