#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace ddn {

// Thread cap: DDN_THREADS env var if set, else hardware concurrency.
inline int max_threads() {
  static int cached = [] {
    if (const char* env = std::getenv("DDN_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? (int)hw : 1;
  }();
  return cached;
}

// Static-chunked parallel loop over [0, n). Each index is handled by exactly
// one thread and the per-index work must only write state owned by that index,
// so results do not depend on the thread count.
inline void parallel_for(int64_t n, const std::function<void(int64_t)>& body) {
  int nt = (int)std::min<int64_t>(max_threads(), n);
  if (nt <= 1 || n < 2) {
    for (int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  int64_t chunk = (n + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    int64_t lo = t * chunk;
    int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (int64_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace ddn
