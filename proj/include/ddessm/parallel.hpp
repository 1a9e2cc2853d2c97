#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ddessm {

/// Runs f(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots so the outcome does not depend on scheduling.
template <typename F>
void parallel_for(int n, int threads, F&& f) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mutex;
    auto worker = [&]() {
        for (int i = next++; i < n; i = next++) {
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!err) err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const int k = std::min(threads, n);
    for (int t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace ddessm
