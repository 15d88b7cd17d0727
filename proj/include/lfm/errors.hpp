#pragma once

#include <stdexcept>
#include <string>

namespace lfm {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configuration value or combination violates its contract.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes or parameter sets do not fit together.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// A NaN/Inf appeared, or an operation is numerically undefined.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied data (labels, indices) is out of range.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A binary or text file is malformed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Missing or unwritable files.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lfm
