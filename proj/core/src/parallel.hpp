#pragma once

namespace ssmpc::detail {

// Runs fn(i) for i in [begin, end). Iterations must be independent; each one
// writes only its own output slots so the result does not depend on the
// number of threads.
template <class Fn>
void parallel_for(int begin, int end, int threads, Fn&& fn) {
#ifdef SSMPC_HAVE_OPENMP
  if (threads > 1 && end - begin > 1) {
#pragma omp parallel for schedule(static) num_threads(threads)
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
#endif
  for (int i = begin; i < end; ++i) fn(i);
}

}  // namespace ssmpc::detail
