#include "parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace ody {

namespace {

std::atomic<int> g_threads{0};

int resolve_threads() {
    if (const char* env = std::getenv("ODYSSEY_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    int n = g_threads.load(std::memory_order_relaxed);
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

} // namespace

void set_thread_count(int n) {
    g_threads.store(n, std::memory_order_relaxed);
}

int thread_count() {
    return resolve_threads();
}

void parallel_for_rows(std::size_t count, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (count == 0) return;
    std::size_t workers = static_cast<std::size_t>(resolve_threads());
    workers = std::min(workers, count);
    if (workers <= 1) {
        fn(0, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(begin + chunk, count);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& t : pool) t.join();
}

} // namespace ody
