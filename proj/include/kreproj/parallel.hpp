#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace kreproj {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is split into
/// contiguous index ranges so results written by index are reduced
/// deterministically. The first exception thrown by any worker is rethrown.
template <typename Fn>
void parallel_for(std::ptrdiff_t n, int threads, Fn&& fn)
{
    if (n <= 0) return;
    const std::ptrdiff_t workers = std::clamp<std::ptrdiff_t>(threads, 1, n);
    if (workers == 1) {
        for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
        return;
    }

    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (std::ptrdiff_t w = 0; w < workers; ++w) {
        const std::ptrdiff_t begin = n * w / workers;
        const std::ptrdiff_t end = n * (w + 1) / workers;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::ptrdiff_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace kreproj
