#pragma once

#include <stdexcept>
#include <string>

namespace tenseg {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// All nodes lie numerically on one line; stress synthesis is impossible.
struct CollinearError : Error {
  using Error::Error;
};

// Two connected nodes are closer than the force-law singularity guard.
struct CoincidenceError : Error {
  using Error::Error;
};

// SE(2) alignment has no well-defined rotation (zero correlation sums).
struct DegenerateAlignmentError : Error {
  using Error::Error;
};

// A simulated coordinate left the finite range.
struct BlowUpError : Error {
  using Error::Error;
};

// Eigenstructure does not match the expected symmetry pattern.
struct SpectralError : Error {
  using Error::Error;
};

// Bad scenario or command-line input.
struct UsageError : Error {
  using Error::Error;
};

}  // namespace tenseg
