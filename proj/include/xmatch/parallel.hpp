#pragma once

#include <cstddef>
#include <functional>

namespace xmatch {

// Worker cap shared by every parallel loop; 0 means hardware concurrency.
void set_thread_count(unsigned count);
unsigned thread_count();

// Calls fn(i) for i in [0, n). Iterations must only write to slots they own,
// so results never depend on the number of workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace xmatch
