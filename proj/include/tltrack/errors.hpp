#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tltrack {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid caller configuration (bad flags, inconsistent options, unmet preconditions).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Vector/matrix dimensions do not line up.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Argument outside its admissible interval.
class RangeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Input data is structurally fine but cannot support the requested computation.
class DataError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyInputError : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientLengthError : public DataError {
 public:
  using DataError::DataError;
};

/// A conditional distribution was requested far outside the mixture's support.
class OutOfSupportError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed serialized input; carries the byte offset where decoding failed.
class ParseError : public DataError {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : DataError("offset " + std::to_string(offset) + ": " + what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace tltrack
