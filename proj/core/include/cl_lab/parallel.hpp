#pragma once

#include <cstddef>
#include <functional>

namespace cl_lab {

// Worker count: CL_LAB_THREADS if set and positive, else hardware concurrency (at least 1).
unsigned worker_count();

// Calls body(i) for i in [0, n) on up to worker_count() threads. Exceptions are rethrown
// (the one from the lowest index wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace cl_lab
