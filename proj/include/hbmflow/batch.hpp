// Index-parallel execution of independent jobs (sweep points, test trials).
// Every job owns its outputs, so the only shared state is the index range;
// the serial path is the reference the parallel path must match.
#pragma once

#include <cstddef>
#include <functional>

namespace hbmflow {

// Runs fn(0..n-1) on the calling thread, in order.
void run_indexed_serial(std::size_t n, const std::function<void(std::size_t)>& fn);

// Runs fn(0..n-1) across up to `jobs` OpenMP threads (jobs <= 0 picks the
// hardware default).  Falls back to the serial path when OpenMP is absent
// or jobs == 1.  The first exception thrown by any job is rethrown on the
// caller once all jobs have stopped.
void run_indexed_parallel(std::size_t n, const std::function<void(std::size_t)>& fn,
                          int jobs = 0);

// Number of threads run_indexed_parallel would use for `jobs`.
int effective_jobs(int jobs);

} // namespace hbmflow
