#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lvv {

// out[i] = fn(i) for i in [0,n). Work is handed out in chunks; every result
// lands in its own slot, so the output does not depend on the worker count.
template <class R, class Fn>
std::vector<R> parallel_map(std::size_t n, int workers, Fn&& fn, std::size_t chunk = 16) {
    std::vector<R> out(n);
    int w = std::max(1, workers);
    if (w == 1 || n <= chunk) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto body = [&]() {
        for (;;) {
            std::size_t lo = next.fetch_add(chunk);
            if (lo >= n) return;
            std::size_t hi = std::min(n, lo + chunk);
            try {
                for (std::size_t i = lo; i < hi; ++i) out[i] = fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                next = n;
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < w; ++i) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
    return out;
}

inline int default_workers() {
    unsigned h = std::thread::hardware_concurrency();
    return h == 0 ? 1 : static_cast<int>(h);
}

}  // namespace lvv
