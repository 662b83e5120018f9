#pragma once

#include <stdexcept>
#include <string>

namespace fcnt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor extent does not match what an operation requires.
class DimensionError : public Error {
 public:
  DimensionError(std::string axis, std::string what)
      : Error("dimension error on axis '" + axis + "': " + what), axis_(std::move(axis)) {}
  const std::string& axis() const { return axis_; }

 private:
  std::string axis_;
};

/// Invalid argument or configuration value.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or manifest content does not match its recorded checksum.
class ChecksumError : public IoError {
 public:
  using IoError::IoError;
};

/// A label image uses gray levels outside the class palette.
class PaletteError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Non-finite values or a diverged computation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace fcnt
