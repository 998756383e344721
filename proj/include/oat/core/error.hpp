#pragma once

#include <stdexcept>
#include <string>

namespace oat {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage ran before the stage it depends on (CLI exit code 3).
class PrerequisiteError : public Error {
 public:
  PrerequisiteError(const std::string& stage, const std::string& detail)
      : Error("missing prerequisite stage '" + stage + "': " + detail), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Non-finite values, divergence or other numerical breakdown (CLI exit code 4).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised when the time window of the sinogram cannot hold every arrival.
/// Callers may choose to downgrade it to a warning.
class TruncationError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace oat
