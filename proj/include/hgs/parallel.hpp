#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace hgs {

/// Worker-pool size: HGS_THREADS when set, else 1. Jobs write to their own
/// slots, so results are deterministic regardless of the pool size.
inline int worker_count() {
  if (const char* env = std::getenv("HGS_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

inline void parallel_for(int jobs, const std::function<void(int)>& fn) {
  int workers = std::min(worker_count(), jobs);
  if (workers <= 1) {
    for (int i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < jobs; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace hgs
