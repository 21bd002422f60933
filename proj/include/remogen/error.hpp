#pragma once

#include <stdexcept>
#include <string>

namespace remogen {

// Base of every error raised by the library. The CLI maps subclasses onto
// process exit codes (see tools/remogen_cli.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DegeneracyError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class InsufficientFramesError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class CorruptArchiveError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Raised by rollout when a per-segment context provider fails.
class ProviderError : public Error {
 public:
  ProviderError(int segment, const std::string& what)
      : Error("context provider failed at segment " + std::to_string(segment) +
              ": " + what),
        segment_(segment) {}
  int segment() const { return segment_; }

 private:
  int segment_;
};

}  // namespace remogen
