#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mdn {

// Worker cap: explicit request, else MDN_NUM_WORKERS, else hardware concurrency.
inline int worker_count(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MDN_NUM_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Like parallel_for, but fn(i, worker) also receives the worker slot in [0, workers).
template <typename Fn>
void parallel_for_workers(int n, int workers, Fn&& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&, t] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i, t);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  parallel_for_workers(n, workers, [&](int i, int) { fn(i); });
}

}  // namespace mdn
