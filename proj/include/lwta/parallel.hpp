#pragma once

#include <cstddef>
#include <functional>

namespace lwta {

// Worker count for internal loops. Read once from LWTA_NUM_THREADS (default 1).
std::size_t num_threads();
void set_num_threads(std::size_t n);

// Runs body(i) for i in [0, n). Every index is handled by exactly one worker,
// so per-index results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace lwta
