#include "s2ct/threads.hpp"

#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace s2ct {

static int detect_threads() {
  if (const char* env = std::getenv("S2CT_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
    return 1;
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int worker_threads() {
  static int n = detect_threads();
  return n;
}

}  // namespace s2ct
