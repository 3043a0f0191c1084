#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace apn {

// Worker cap from APN_THREADS (default 1). Read once per process.
int thread_count();

// Runs fn(i) for i in [0, n). Indices are split into contiguous chunks, one per
// worker; each fn(i) must write disjoint memory, which keeps results bitwise
// identical to the serial loop.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const int lo = n * w / workers;
    const int hi = n * (w + 1) / workers;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace apn
