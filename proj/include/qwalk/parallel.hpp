#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace qwalk {

/**
 * Run fn(i) for i in [0, n). Work items must be independent; results written
 * to disjoint slots stay deterministic regardless of the thread count.
 */
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace qwalk
