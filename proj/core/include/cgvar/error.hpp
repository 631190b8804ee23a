#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cgvar {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input or output vector does not have the declared length.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation was called out of order (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// A function evaluation produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an argument was violated.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A configuration failed validation before any compute started.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The tempering scheme shrank its increment below the underflow floor.
class StallError : public Error {
 public:
  using Error::Error;
};

/// A ratio estimate has a denominator indistinguishable from zero.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// The quadrature grid does not contain the density's mass.
class GridError : public Error {
 public:
  using Error::Error;
};

/// An ADAM step was refused because a gradient component is not finite.
class NonFiniteGradientError : public Error {
 public:
  NonFiniteGradientError(std::size_t index, double value)
      : Error("non-finite gradient component at index " + std::to_string(index) + " (" +
              std::to_string(value) + ")"),
        index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

inline void require_shape(std::size_t actual, std::size_t expected, const char* what) {
  if (actual != expected) {
    throw ShapeError(std::string(what) + ": expected length " + std::to_string(expected) +
                     ", got " + std::to_string(actual));
  }
}

}  // namespace cgvar
