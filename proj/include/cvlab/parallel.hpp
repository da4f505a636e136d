#pragma once
// Deterministic work partitioning. Results must be independent of the worker
// count, so reductions accumulate fixed-size chunk partials that are combined
// in chunk order afterwards.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdlib>
#include <cstddef>
#include <string>
#include <thread>
#include <vector>

namespace cvlab {

// Worker count: CVLAB_THREADS if set (clamped to [1,64]), else hardware.
inline int thread_count() {
    static const int cached = [] {
        if (const char* env = std::getenv("CVLAB_THREADS")) {
            char* end = nullptr;
            long v = std::strtol(env, &end, 10);
            if (end != env && v >= 1) return static_cast<int>(std::min(v, 64L));
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw ? static_cast<int>(std::min(hw, 32u)) : 4;
    }();
    return cached;
}

constexpr std::size_t kChunk = 4096;  // fixed chunk size, never tied to thread count

// Runs body(begin, end, chunk_index) over [0, total) split into kChunk pieces.
// Chunks are handed out round-robin by index, so any per-chunk output slot
// depends only on the chunk index.
template <typename Body>
void parallel_for_chunks(std::size_t total, Body&& body) {
    if (total == 0) return;
    const std::size_t nchunks = (total + kChunk - 1) / kChunk;
    int workers = std::min<std::size_t>(thread_count(), nchunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c)
            body(c * kChunk, std::min(total, (c + 1) * kChunk), c);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t c = static_cast<std::size_t>(w); c < nchunks;
                 c += static_cast<std::size_t>(workers))
                body(c * kChunk, std::min(total, (c + 1) * kChunk), c);
        });
    }
    for (auto& t : pool) t.join();
}

// Compensated (Neumaier) accumulator.
struct KahanSum {
    double sum = 0.0;
    double comp = 0.0;
    void add(double x) {
        double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }
    double result() const { return sum + comp; }
};

// Deterministic parallel reduction: chunk_fn(begin, end) -> double partial.
// Partials are combined in chunk order with compensation.
template <typename ChunkFn>
double parallel_reduce(std::size_t total, ChunkFn&& chunk_fn) {
    if (total == 0) return 0.0;
    const std::size_t nchunks = (total + kChunk - 1) / kChunk;
    std::vector<double> partial(nchunks, 0.0);
    parallel_for_chunks(total, [&](std::size_t b, std::size_t e, std::size_t c) {
        partial[c] = chunk_fn(b, e);
    });
    KahanSum acc;
    for (double p : partial) acc.add(p);
    return acc.result();
}

}  // namespace cvlab
