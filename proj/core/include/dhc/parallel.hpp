#pragma once

#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace dhc {

// Worker cap from DHC_THREADS (0 or unset = hardware concurrency).
inline int worker_threads() {
  if (const char* env = std::getenv("DHC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<int>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(i) for i in [0, n). Work items must be independent; callers keep
// determinism by writing into index-addressed slots so the merge order is
// fixed regardless of scheduling.
template <typename Fn>
void parallel_for_indexed(std::int64_t n, Fn&& fn) {
  const int threads = std::min<std::int64_t>(worker_threads(), n);
  if (threads <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::int64_t i = t; i < n; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace dhc
