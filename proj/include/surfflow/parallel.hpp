#pragma once

#include <functional>

namespace surfflow {

// Upper bound on worker threads used by parallel_for (default 1).
void set_thread_count(int n);
int thread_count();

// Calls fn(i) for i in [0, n), split into contiguous chunks across workers.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace surfflow
