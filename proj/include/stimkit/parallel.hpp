#pragma once
// OpenMP helpers. Every parallel kernel in the library is written as a loop
// over independent work items with its own deterministic RNG stream, so
// results are identical for any thread count; these wrappers only control how
// the items are scheduled. set_max_threads(1) gives the serial reference
// execution used by the equivalence tests and the benchmark tool.

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stimkit::parallel {

// 0 = use the OpenMP default. Returns the previous setting.
int set_max_threads(int n);
int max_threads();

// Runs fn(i) for i in [0, n). Parallel when OpenMP is available and the
// configured thread cap allows it; plain loop otherwise.
template <typename Fn>
void parallel_for(size_t n, Fn&& fn) {
#ifdef _OPENMP
  if (max_threads() != 1) {
    const int cap = max_threads();
#pragma omp parallel for schedule(dynamic, 16) num_threads(cap > 0 ? cap : omp_get_max_threads())
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      fn(static_cast<size_t>(i));
    }
    return;
  }
#endif
  for (size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace stimkit::parallel
