#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace odm {

/// Process-wide cap on worker threads (the CLI's --threads flag).
inline std::atomic<unsigned>& thread_cap() {
    static std::atomic<unsigned> cap{0};
    return cap;
}

inline unsigned worker_count() {
    const unsigned hw = std::max(1U, std::thread::hardware_concurrency());
    const unsigned cap = thread_cap().load();
    return cap == 0 ? hw : std::min(cap, hw);
}

/// Runs body(i) for i in [0, n). Work items must write to disjoint slots;
/// callers reduce afterwards in index order so results do not depend on
/// scheduling.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next.store(n);
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace odm
