#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace umt {

/// Runs fn(0..n-1) across up to `jobs` threads. Tasks must be independent
/// and write only to their own output slots; the call is deterministic as
/// long as each task is a pure function of its index. The first exception
/// thrown by any task is rethrown on the calling thread after all workers
/// finish.
inline void parallel_for(int jobs, int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (jobs < 1) jobs = 1;
  const int workers = std::min(jobs, n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace umt
