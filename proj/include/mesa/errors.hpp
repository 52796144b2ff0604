#pragma once

#include <stdexcept>
#include <string>

namespace mesa {

/// Eigensolver or other low-level numeric routine failed to converge.
struct numeric_failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Fewer admissible spectral roots than requested sources.
struct degenerate_spectrum : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Coarray has no usable contiguous segment (V < 2).
struct degenerate_coarray : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mesa
