#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace partial_em::detail {

/// Runs fn(chunk) for chunk in [0, n_chunks) on up to `threads` workers.
template <class Fn>
void parallel_chunks(std::size_t n_chunks, std::size_t threads, Fn&& fn) {
    const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n_chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t c; (c = next.fetch_add(1)) < n_chunks;) {
            try {
                fn(c);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

/// Computes partial(c) for every chunk, `threads` chunks at a time, and folds
/// them into `total` strictly in chunk order. The result is the same for any
/// thread count.
template <class T, class Partial, class Fold>
void ordered_reduce(std::size_t n_chunks, std::size_t threads, T& total, Partial&& partial, Fold&& fold) {
    const std::size_t batch = std::max<std::size_t>(threads, 1);
    std::vector<T> partials(std::min(batch, n_chunks));
    for (std::size_t start = 0; start < n_chunks; start += batch) {
        const std::size_t count = std::min(batch, n_chunks - start);
        parallel_chunks(count, threads, [&](std::size_t i) { partials[i] = partial(start + i); });
        for (std::size_t i = 0; i < count; ++i) fold(total, partials[i]);
    }
}

}  // namespace partial_em::detail
