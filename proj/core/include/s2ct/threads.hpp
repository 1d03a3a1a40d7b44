#pragma once

namespace s2ct {

// Worker thread count for parallel loops. Honors the S2CT_THREADS
// environment variable (clamped to >= 1); falls back to the OpenMP
// default otherwise. Cached after the first call.
int worker_threads();

}  // namespace s2ct
