#pragma once

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace celldet {

// Execution mode for the data-parallel kernels. The parallel path must
// produce bit-identical output to the serial path: kernels either compute
// each output element independently or reduce through fixed-order partials,
// so the choice of mode (and the thread count) never changes results.
// Tests assert this equality; the bench target times the two modes.
enum class Exec { serial, openmp };

inline int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Runs fn(i) for i in [0, n). Grain of one row/column/tile per index.
template <class Fn>
inline void parallel_for(Exec ex, int n, Fn&& fn) {
#if defined(_OPENMP)
  if (ex == Exec::openmp) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
#else
  (void)ex;
#endif
  for (int i = 0; i < n; ++i) fn(i);
}

}  // namespace celldet
