#pragma once

#include <cstddef>

namespace dnf::parallel {

// Global worker count for OpenMP regions. 0 = library default.
void set_workers(int n);
int workers();

// Runs fn(i) for i in [0, n). Iterations must be independent; every
// reduction in this codebase gathers per-iteration results and combines
// them in index order afterwards, so output bytes do not depend on the
// worker count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn);

namespace detail {
int resolved_workers();
}

}  // namespace dnf::parallel

#ifdef _OPENMP
#include <omp.h>

template <typename Fn>
void dnf::parallel::parallel_for(std::size_t n, Fn&& fn) {
    const int nw = detail::resolved_workers();
    if (nw <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
#pragma omp parallel for schedule(dynamic) num_threads(nw)
    for (long long i = 0; i < static_cast<long long>(n); ++i)
        fn(static_cast<std::size_t>(i));
}
#else
template <typename Fn>
void dnf::parallel::parallel_for(std::size_t n, Fn&& fn) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
}
#endif
