#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace shrubmap::detail
{

inline unsigned resolve_workers(unsigned requested, std::size_t items)
{
  unsigned w = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
  return static_cast<unsigned>(std::clamp<std::size_t>(items, 1, w));
}

/// Calls fn(worker, i) for every i in [0, n) on up to `workers` threads.
/// Rethrows the first exception after all threads stop.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn && fn)
{
  workers = resolve_workers(workers, n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(0u, i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr failure;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < n && !failed; i = next++) {
            fn(w, i);
          }
        } catch (...) {
          if (!failed.exchange(true)) {
            failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
}

}  // namespace shrubmap::detail
