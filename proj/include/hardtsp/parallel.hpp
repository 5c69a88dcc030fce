#pragma once

#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hardtsp {

/// Worker cap: HARDTSP_THREADS if set (minimum 1), hardware otherwise.
inline int max_threads() {
    if (const char* env = std::getenv("HARDTSP_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
        return 1;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, count) across up to max_threads() workers.
///
/// Work is split into contiguous static chunks, so the set of iterations a
/// worker executes is deterministic. Callers must write results into
/// per-index slots; no reduction happens here, which keeps outputs identical
/// for every thread count. The first exception thrown by any iteration is
/// rethrown on the calling thread.
template <typename Fn>
void parallel_for(int count, Fn&& fn) {
    if (count <= 0) return;
    int workers = std::min(max_threads(), count);
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }

    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));

    int chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        int begin = w * chunk;
        int end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                for (int i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace hardtsp
