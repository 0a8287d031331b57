#pragma once

#include <stdexcept>
#include <string>

namespace scnn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operands disagree in shape (tensor dims, channel counts, checkpoint tables).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is outside its documented domain.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An operation received input it cannot produce a value for, e.g. a loss
/// with no valid pixels or a metric over an empty set.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// File or stream could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its content violates the expected format.
class FormatError : public Error {
 public:
  enum class Kind { BadMagic, BadVersion, WrongMaxval, Truncated, BadHeader, Inconsistent };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace scnn
