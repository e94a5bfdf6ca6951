#pragma once

#include <stdexcept>
#include <string>

namespace spdot {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operands whose dimensions do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A value outside the mathematical domain of an operation, e.g. a
// non-positive eigenvalue handed to the matrix logarithm.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Iterative routine failed or produced non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied arguments that violate a precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents. The message carries line/field context.
class ParseError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace spdot
