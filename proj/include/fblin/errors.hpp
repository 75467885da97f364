#pragma once

#include <stdexcept>
#include <string>

namespace fblin {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An iteration failed to converge or produced non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A linear system is singular, e.g. shared eigenvalues in a Sylvester solve.
class SingularityError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// A matrix that must be inverted is not invertible.
class InvertibilityError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// A map was evaluated outside its domain of validity.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration or input files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fblin
