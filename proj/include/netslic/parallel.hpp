#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace netslic {

/// Worker count for `jobs` (0 = all cores), capped at `tasks`.
inline unsigned resolve_jobs(unsigned jobs, std::size_t tasks) {
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(jobs, tasks)));
}

/// Calls fn(k) for k in [0, tasks) on `jobs` threads. Returns the message of
/// every task that threw, indexed by task (empty when it succeeded).
template <typename Fn>
std::vector<std::string> parallel_for(std::size_t tasks, unsigned jobs, Fn&& fn) {
    std::vector<std::string> errors(tasks);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < tasks; k = next++) {
            try {
                fn(k);
            } catch (const std::exception& e) {
                errors[k] = e.what();
                if (errors[k].empty()) errors[k] = "unknown error";
            }
        }
    };
    jobs = resolve_jobs(jobs, tasks);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    return errors;
}

}  // namespace netslic
