#include "hbmflow/batch.hpp"

#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hbmflow {

void run_indexed_serial(std::size_t n, const std::function<void(std::size_t)>& fn) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
}

int effective_jobs(int jobs) {
#ifdef _OPENMP
    if (jobs <= 0) return omp_get_max_threads();
    return jobs;
#else
    (void)jobs;
    return 1;
#endif
}

void run_indexed_parallel(std::size_t n, const std::function<void(std::size_t)>& fn,
                          int jobs) {
    const int threads = effective_jobs(jobs);
    if (threads <= 1 || n <= 1) {
        run_indexed_serial(n, fn);
        return;
    }
#ifdef _OPENMP
    std::exception_ptr first;
    std::mutex first_mu;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (long long i = 0; i < (long long)n; ++i) {
        try {
            fn((std::size_t)i);
        } catch (...) {
            std::lock_guard<std::mutex> lk(first_mu);
            if (!first) first = std::current_exception();
        }
    }
    if (first) std::rethrow_exception(first);
#else
    run_indexed_serial(n, fn);
#endif
}

} // namespace hbmflow
