#include "dnf/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dnf::parallel {

namespace {
int g_workers = 0;
}

void set_workers(int n) { g_workers = n < 0 ? 0 : n; }

int workers() { return g_workers; }

namespace detail {
int resolved_workers() {
#ifdef _OPENMP
    return g_workers > 0 ? g_workers : omp_get_max_threads();
#else
    return 1;
#endif
}
}  // namespace detail

}  // namespace dnf::parallel
