#pragma once

#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mtseg {

inline int& thread_count_ref() {
  static int n = static_cast<int>(std::thread::hardware_concurrency());
  return n;
}

inline int num_threads() { return thread_count_ref() > 0 ? thread_count_ref() : 1; }

/// Caps intra-op parallelism. Sweep jobs set this to 1 and parallelise at the
/// job level instead.
inline void set_num_threads(int n) { thread_count_ref() = n > 0 ? n : 1; }

/// Parallel loop over [begin, end). Iterations must write disjoint outputs;
/// scheduling is static so results do not depend on the thread count.
template <typename F>
void parallel_for(int begin, int end, F&& body) {
  const int nt = num_threads();
  if (nt <= 1 || end - begin <= 1) {
    for (int i = begin; i < end; ++i) body(i);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt)
  for (int i = begin; i < end; ++i) body(i);
#else
  for (int i = begin; i < end; ++i) body(i);
#endif
}

}  // namespace mtseg
