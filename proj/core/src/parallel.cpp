#include "sonarp/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sonarp {

namespace {

std::size_t initial_threads() {
    if (const char* env = std::getenv("SONARP_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (...) {
        }
    }
#ifdef _OPENMP
    return static_cast<std::size_t>(omp_get_max_threads());
#else
    return 1;
#endif
}

std::size_t& thread_cap() {
    static std::size_t cap = initial_threads();
    return cap;
}

}  // namespace

std::size_t num_threads() { return thread_cap(); }

void set_num_threads(std::size_t n) { thread_cap() = n == 0 ? 1 : n; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
#ifdef _OPENMP
    const int workers = static_cast<int>(num_threads());
    if (workers > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(workers)
        for (long i = 0; i < static_cast<long>(n); ++i) body(static_cast<std::size_t>(i));
        return;
    }
#endif
    for (std::size_t i = 0; i < n; ++i) body(i);
}

}  // namespace sonarp
