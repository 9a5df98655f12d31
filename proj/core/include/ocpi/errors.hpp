#pragma once

#include <stdexcept>
#include <string>

namespace ocpi {

// Base for every error raised by the library. The CLI maps subclasses to
// exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IndexError : public Error { using Error::Error; };
class RangeError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class SamplingError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class TrainingError : public Error { using Error::Error; };

// Raised when the filtered object clusters are too small; the caller is
// expected to discard the scan.
class ScanError : public Error {
 public:
  ScanError(const std::string& what, std::size_t kept_points)
      : Error(what), kept_points_(kept_points) {}
  std::size_t kept_points() const noexcept { return kept_points_; }

 private:
  std::size_t kept_points_;
};

}  // namespace ocpi
