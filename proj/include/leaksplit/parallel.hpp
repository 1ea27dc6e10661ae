#ifndef LEAKSPLIT_PARALLEL_HPP
#define LEAKSPLIT_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace leaksplit {

/**
 * Runs `fn(i)` for every `i` in `[0, n)`, splitting the range into contiguous
 * chunks over `threads` workers. Callers must only write to per-index state so
 * that the result does not depend on the thread count.
 */
template <class Function>
void parallel_for(std::size_t n, int threads, Function fn) {
    const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }

    std::exception_ptr failure;
    std::mutex failure_lock;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t start = w * chunk;
        const std::size_t end = std::min(n, start + chunk);
        pool.emplace_back([&, start, end]() {
            try {
                for (std::size_t i = start; i < end; ++i) {
                    fn(i);
                }
            } catch (...) {
                std::lock_guard<std::mutex> guard(failure_lock);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}

#endif
