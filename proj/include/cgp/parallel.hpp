#pragma once

#include <cstddef>

namespace cgp {

// Global switch between the OpenMP kernels and the serial reference path.
// Both paths fill per-index slots and reduce in a fixed order afterwards,
// so they produce bit-identical results; tests assert that.
bool parallel_enabled();
void set_parallel_enabled(bool on);
int max_threads();

template <class F>
void parallel_for(std::ptrdiff_t n, F&& body) {
#ifdef _OPENMP
    if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
        return;
    }
#endif
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
}

}  // namespace cgp
