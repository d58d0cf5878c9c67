#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace nnest {

/// Worker count: NNEST_THREADS if set and positive, otherwise the hardware concurrency.
inline int thread_count()
{
    if (const char* env = std::getenv("NNEST_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/**
 * Runs fn(chunk) for chunk in [0, num_chunks). Chunks are assigned round-robin to workers;
 * callers write per-chunk results and reduce them in chunk order, so results do not depend
 * on the worker count.
 */
template <class Fn>
void parallel_chunks(int num_chunks, Fn&& fn)
{
    const int workers = std::min(thread_count(), num_chunks);
    if (workers <= 1) {
        for (int c = 0; c < num_chunks; ++c) fn(c);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int c = t; c < num_chunks; c += workers) fn(c);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace nnest
