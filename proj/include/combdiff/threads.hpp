#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace combdiff {

inline unsigned worker_count(unsigned requested = 0) {
    if (requested > 0) return requested;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? hc : 1;
}

// Runs f(i) for i in [0, n). Each index owns its output slot and RNG stream,
// so results do not depend on the number of workers or the scheduling order.
template <class F>
void parallel_for(std::int64_t n, F&& f, unsigned workers = 0) {
    const unsigned w = worker_count(workers);
    if (w <= 1 || n < 2) {
        for (std::int64_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto run = [&] {
        for (;;) {
            const std::int64_t i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < w; ++k) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace combdiff
