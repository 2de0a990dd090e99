#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tg {

// Worker count for parallel kernels. Capped by the TG_THREADS environment
// variable when set. Every parallel region in this library partitions
// disjoint output ranges with a fixed per-element accumulation order, so
// results are bit-identical for any thread count.
inline int thread_count() {
  static const int n = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("TG_THREADS")) {
      int cap = std::atoi(env);
      if (cap >= 1) hw = std::min(hw, cap);
    }
    return hw;
  }();
  return n;
}

}  // namespace tg
