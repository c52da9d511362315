#pragma once

#include <stdexcept>
#include <string>

namespace slab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data or configuration: missing columns, unparseable cells,
/// malformed archives, unknown names.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Operation not supported by the engine family it was called on.
class FamilyError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace slab
