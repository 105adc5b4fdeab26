#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace airgap {

struct BlerEstimate {
    double bler = 0.0;
    double ci_halfwidth = 0.0;
    long long errors = 0;
    long long samples = 0;
};

struct MseEstimate {
    double mse = 0.0;
    double ci_halfwidth = 0.0;
    long long samples = 0;
};

// Wilson 95% interval half-width for k errors out of n trials.
inline double wilson_halfwidth(long long k, long long n, double z = 1.959963984540054) {
    if (n <= 0) return 0.0;
    const double p = static_cast<double>(k) / static_cast<double>(n);
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    return (z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * static_cast<double>(n) * n))) / denom;
}

// Evaluation fan-out cap: AIRGAP_AE_THREADS if set, hardware concurrency
// otherwise. Thread count never affects results; work is split into a fixed
// shard grid with per-shard substreams, reduced in shard order.
inline unsigned eval_thread_cap() {
    if (const char* env = std::getenv("AIRGAP_AE_THREADS")) {
        const long v = std::atol(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

// Runs fn(shard) for shard in [0, n_shards) on up to eval_thread_cap()
// threads. fn must write only to its own shard's slot.
inline void run_sharded(int n_shards, const std::function<void(int)>& fn) {
    const unsigned threads = std::min<unsigned>(eval_thread_cap(), static_cast<unsigned>(n_shards));
    if (threads <= 1) {
        for (int s = 0; s < n_shards; ++s) fn(s);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (int s = static_cast<int>(t); s < n_shards; s += static_cast<int>(threads)) fn(s);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace airgap
