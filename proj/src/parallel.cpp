#include "ldmr/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace ldmr {

namespace {
int g_threads = 0;

int detect_threads() {
  if (const char* env = std::getenv("LDMR_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}
}  // namespace

int thread_count() {
  if (g_threads <= 0) g_threads = detect_threads();
  return g_threads;
}

void set_thread_count(int n) { g_threads = n > 0 ? n : 0; }

void parallel_chunks(int64_t n, int n_chunks,
                     const std::function<void(int, int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  if (n_chunks > n) n_chunks = static_cast<int>(n);
  if (n_chunks < 1) n_chunks = 1;
  auto range = [&](int c, int64_t& lo, int64_t& hi) {
    lo = n * c / n_chunks;
    hi = n * (c + 1) / n_chunks;
  };
  int workers = std::min(thread_count(), n_chunks);
  if (workers <= 1) {
    for (int c = 0; c < n_chunks; ++c) {
      int64_t lo, hi;
      range(c, lo, hi);
      fn(c, lo, hi);
    }
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        int c = next.fetch_add(1);
        if (c >= n_chunks) break;
        int64_t lo, hi;
        range(c, lo, hi);
        fn(c, lo, hi);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ldmr
