#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace dmm {

// Worker count: DMM_THREADS caps it, hardware concurrency is the default.
inline int thread_count() {
    static const int n = [] {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw <= 0) hw = 1;
        if (const char* env = std::getenv("DMM_THREADS")) {
            const int cap = std::atoi(env);
            if (cap >= 1) hw = std::min(hw, cap);
        }
        return hw;
    }();
    return n;
}

// Splits [0, n) into a fixed chunk grid (independent of the worker count) and
// runs body(chunk_index, begin, end) over it. Results that depend only on the
// chunk index are therefore identical no matter how many threads run.
inline void parallel_for_chunks(std::size_t n, std::size_t chunk_size,
                                const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
    if (n == 0) return;
    chunk_size = std::max<std::size_t>(1, chunk_size);
    const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
    const int workers = std::min<int>(thread_count(), static_cast<int>(n_chunks));
    if (workers <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c)
            body(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t c = static_cast<std::size_t>(w); c < n_chunks;
                 c += static_cast<std::size_t>(workers))
                body(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        });
    }
    for (auto& t : pool) t.join();
}

// Deterministic parallel reduction: per-chunk partial sums are written into a
// chunk-indexed table and combined in index order.
inline double parallel_sum(std::size_t n, std::size_t chunk_size,
                           const std::function<double(std::size_t, std::size_t, std::size_t)>& chunk_sum) {
    if (n == 0) return 0.0;
    chunk_size = std::max<std::size_t>(1, chunk_size);
    const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
    std::vector<double> partials(n_chunks, 0.0);
    parallel_for_chunks(n, chunk_size, [&](std::size_t c, std::size_t b, std::size_t e) {
        partials[c] = chunk_sum(c, b, e);
    });
    double total = 0.0;
    for (double p : partials) total += p;
    return total;
}

}  // namespace dmm
