#include "cspat/core.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cspat {

namespace {
std::atomic<int> g_threads{1};
}

void set_threads(int n) {
  g_threads.store(n < 1 ? 1 : n);
#ifdef _OPENMP
  omp_set_num_threads(g_threads.load());
#endif
}

int threads() { return g_threads.load(); }

}  // namespace cspat
