#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fan {

// Caps OpenMP parallelism process-wide. 0 keeps the runtime default.
inline void set_thread_cap(int threads) {
#ifdef _OPENMP
    if (threads > 0) {
        omp_set_num_threads(threads);
    }
#else
    (void)threads;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace fan
