#pragma once

#include <stdexcept>
#include <string>

namespace s2ct {

// Error categories map to process exit codes in the CLI:
// usage 2, data 3, numeric 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad command line or config: unknown keys, missing arguments, out-of-range
// counts.
struct UsageError : Error {
  using Error::Error;
};

// Bad data: malformed files, shape mismatches, inconsistent volumes.
struct DataError : Error {
  using Error::Error;
};

// Numerical failure: non-finite loss, degenerate geometry mid-computation.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace s2ct
