#pragma once

#include <cstdint>
#include <functional>

namespace ldmr {

// Global worker count. Defaults to LDMR_THREADS if set, else the hardware
// concurrency. Results never depend on it: work is split into a fixed chunk
// grid and every chunk writes disjoint output.
int thread_count();
void set_thread_count(int n);

// Runs fn(chunk, lo, hi) over [0,n) split into n_chunks half-open ranges.
// Chunks may execute on any worker; fn must only write chunk-local output.
void parallel_chunks(int64_t n, int n_chunks,
                     const std::function<void(int, int64_t, int64_t)>& fn);

}  // namespace ldmr
