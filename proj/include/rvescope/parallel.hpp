#ifndef RVESCOPE_PARALLEL_HPP
#define RVESCOPE_PARALLEL_HPP

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace rvescope {

// Runs fn(begin, end) over [0, n) split into contiguous blocks, one block per
// worker. Blocks are a pure function of (n, threads), so results that combine
// per-block partials in block order are reproducible for a fixed thread count.
template <typename Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
    if (n <= 0) return;
    int workers = std::max(1, threads);
    workers = static_cast<int>(std::min<std::int64_t>(workers, n));
    if (workers == 1) {
        fn(std::int64_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    const std::int64_t chunk = (n + workers - 1) / workers;
    for (int t = 0; t < workers; ++t) {
        const std::int64_t lo = t * chunk;
        const std::int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

} // namespace rvescope

#endif
