#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace triscale {

/// Runs fn(i) for i in [0,n) on up to `workers` threads. Each index must write only
/// to its own output slot; the result is then independent of scheduling. The
/// exception thrown by the lowest failing index is rethrown.
template <typename Fn>
void parallel_for(long n, int workers, Fn &&fn) {
    if (workers <= 1 || n <= 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    std::mutex guard;
    long failed_at = n;
    std::exception_ptr failure;
    auto run = [&] {
        for (long i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(guard);
                if (i < failed_at) {
                    failed_at = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    const long count = std::min<long>(workers, n);
    for (long t = 1; t < count; ++t) pool.emplace_back(run);
    run();
    for (auto &t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

inline int default_workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

} // namespace triscale
