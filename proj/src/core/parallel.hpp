#pragma once

#include <cstddef>
#include <functional>

namespace ody {

// Global worker count. 0 means "hardware concurrency". The ODYSSEY_THREADS
// environment variable, when set, wins over any value passed here.
void set_thread_count(int n);
int thread_count();

// Splits [0, count) into contiguous chunks, one per worker. fn(begin, end)
// must not touch rows outside its chunk; per-row work stays sequential so
// results are identical for any worker count.
void parallel_for_rows(std::size_t count, const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace ody
