#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace tte::detail {

// Runs fn(block_index, lo, hi) over fixed-size blocks of [0, n). The block
// decomposition depends only on n and block_size, never on the worker count,
// so callers that reduce per-block partials in block order get output that is
// bit-identical for any --threads value.
inline void parallel_blocks(std::size_t n, std::size_t block_size, int threads,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (block_size == 0) block_size = 1;
    const std::size_t n_blocks = (n + block_size - 1) / block_size;

    auto run_block = [&](std::size_t b) {
        const std::size_t lo = b * block_size;
        const std::size_t hi = std::min(n, lo + block_size);
        fn(b, lo, hi);
    };

    if (threads <= 1 || n_blocks == 1) {
        for (std::size_t b = 0; b < n_blocks; ++b) run_block(b);
        return;
    }

    const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n_blocks);
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= n_blocks) return;
            try {
                run_block(b);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace tte::detail
