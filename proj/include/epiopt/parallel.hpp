#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace epiopt
{

/// 0 means "use hardware concurrency".
inline std::size_t resolve_workers(std::size_t requested)
{
    if (requested > 0) {
        return requested;
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/**
 * Calls body(i) for every i in [begin, end) on up to `workers` threads.
 *
 * Work is handed out in index order; results must be written to per-index
 * slots so that any reduction afterwards is independent of the schedule.
 * The first exception thrown by a body is rethrown on the calling thread.
 */
template <class Body>
void parallel_for(std::size_t begin, std::size_t end, std::size_t workers, Body&& body)
{
    if (end <= begin) {
        return;
    }
    const std::size_t count   = end - begin;
    const std::size_t threads = std::min(resolve_workers(workers), count);
    if (threads == 1) {
        for (std::size_t i = begin; i < end; ++i) {
            body(i);
        }
        return;
    }

    std::atomic<std::size_t> next{begin};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        try {
            for (std::size_t i = next.fetch_add(1); i < end; i = next.fetch_add(1)) {
                body(i);
            }
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) {
                error = std::current_exception();
            }
            next.store(end);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& th : pool) {
        th.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

} // namespace epiopt
