#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qtinv {

/// Operand shapes do not agree (matrix dimensions, block sizes, leaf sizes).
class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A Cholesky pivot was not strictly positive.
class NotPositiveDefinite : public std::runtime_error {
 public:
  NotPositiveDefinite(std::size_t pivot, double value)
      : std::runtime_error("matrix is not positive definite: pivot " + std::to_string(pivot) +
                           " is " + std::to_string(value)),
        pivot_(pivot),
        value_(value) {}

  std::size_t pivot() const noexcept { return pivot_; }
  double value() const noexcept { return value_; }

 private:
  std::size_t pivot_;
  double value_;
};

/// Iterative refinement left the convergence region.
class Divergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace qtinv
