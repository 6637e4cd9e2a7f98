#pragma once

#include <stdexcept>
#include <string>

namespace prmim {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An argument is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// An API is called in a state where the call makes no sense.
class UsageError : public Error {
 public:
  using Error::Error;
};

// A selection vector violates the retain-count constraint.
class ConstraintError : public Error {
 public:
  using Error::Error;
};

// An exhaustive search would exceed its combinatorial guard.
class SizeError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (config, PPM, checkpoint).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace prmim
