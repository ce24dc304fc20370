#pragma once

#include <stdexcept>
#include <string>

namespace tetraloc {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidParameterError : Error {
  using Error::Error;
};

// Antenna geometry cannot support a 3D solve (coplanar/coincident antennas,
// rank-deficient sub-matrix).
struct DegenerateGeometryError : Error {
  using Error::Error;
};

// Coincident agents: bearing undefined.
struct DegeneratePoseError : Error {
  using Error::Error;
};

// Fewer than 3 antenna-pair rows survived rejection.
struct InsufficientGeometryError : Error {
  using Error::Error;
};

// Raw bearing solution is the zero vector.
struct AmbiguousBearingError : Error {
  using Error::Error;
};

// No detected first path in an I/Q sample.
struct NoFirstPathError : Error {
  using Error::Error;
};

struct RangingFailureError : Error {
  using Error::Error;
};

struct CalibrationError : Error {
  using Error::Error;
};

struct InsufficientDataError : Error {
  using Error::Error;
};

struct InvalidSeriesError : Error {
  using Error::Error;
};

struct CrcError : Error {
  using Error::Error;
};

struct MissingFrameError : Error {
  using Error::Error;
};

struct MessageTooLongError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  ConfigError(const std::string& msg, int line = 0) : Error(format(msg, line)), line_number(line) {}
  int line_number;

 private:
  static std::string format(const std::string& msg, int line) {
    if (line > 0) return "config line " + std::to_string(line) + ": " + msg;
    return "config: " + msg;
  }
};

}  // namespace tetraloc
