#pragma once

#include <stdexcept>
#include <string>

namespace mmem {

// Base for every error the toolkit raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input files.
class DataError : public Error {
 public:
  using Error::Error;
};

// An operation was called outside its documented domain.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Iterative fitting failed to reach a usable optimum.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Non-finite values appeared during a computation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration (maps to CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmem
