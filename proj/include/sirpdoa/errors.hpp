#pragma once

#include <stdexcept>
#include <string>

namespace sirpdoa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or invalid configuration (sizes, grids, experiment setup).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Rank-deficient or non-positive-definite matrix.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// A root finder was handed an interval without a sign change.
class BracketError : public Error {
 public:
  using Error::Error;
};

/// A residual vanished where a closed-form update divides by its norm.
class DegenerateResidualError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sirpdoa
