#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dermbench {

/// Number of worker threads used by parallel_for; 0 means hardware concurrency.
inline std::atomic<std::size_t>& worker_threads() {
    static std::atomic<std::size_t> n{0};
    return n;
}

/// Runs fn(i) for i in [0, n). Callers write results by index, so the outcome
/// does not depend on scheduling. The lowest-index exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    std::size_t threads = worker_threads().load();
    if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::size_t error_index = n;
    std::exception_ptr error;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (i < error_index) {
                        error_index = i;
                        error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace dermbench
