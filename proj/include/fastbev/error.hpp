#pragma once

#include <stdexcept>
#include <string>

namespace fastbev {

// Base of every error the library throws. `name()` is the stable error class
// string the CLI prints and maps to an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* name() const noexcept { return "error"; }
  virtual int exit_code() const noexcept { return 1; }
};

// Bad parameters: grid presets, strides, unknown presets, iteration counts.
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* name() const noexcept override { return "config-error"; }
  int exit_code() const noexcept override { return 2; }
};

// A camera rig that cannot be used as a whole (mismatched image dims, ids).
class RigError : public Error {
 public:
  using Error::Error;
  const char* name() const noexcept override { return "rig-error"; }
  int exit_code() const noexcept override { return 3; }
};

// Tensor shape disagreement between arguments.
class ContractError : public Error {
 public:
  using Error::Error;
  const char* name() const noexcept override { return "contract-error"; }
  int exit_code() const noexcept override { return 4; }
};

// Malformed geometric input (non-rigid extrinsics, bad intrinsics).
class GeometryError : public Error {
 public:
  using Error::Error;
  const char* name() const noexcept override { return "geometry-error"; }
  int exit_code() const noexcept override { return 5; }
};

// Binary container decode failures (LUT and tensor files).
class DecodeError : public Error {
 public:
  enum class Kind {
    bad_magic,
    version_mismatch,
    truncated,
    entry_out_of_range,
    rank_zero,
    dims_overflow,
    trailing_bytes,
  };

  DecodeError(Kind kind, const std::string& detail = {})
      : Error(detail.empty() ? std::string(describe(kind))
                             : std::string(describe(kind)) + ": " + detail),
        kind_(kind) {}

  Kind kind() const noexcept { return kind_; }
  const char* name() const noexcept override { return "decode-error"; }
  int exit_code() const noexcept override { return 6; }

  static const char* describe(Kind kind) noexcept {
    switch (kind) {
      case Kind::bad_magic: return "bad magic";
      case Kind::version_mismatch: return "version mismatch";
      case Kind::truncated: return "truncated stream";
      case Kind::entry_out_of_range: return "entry out of range";
      case Kind::rank_zero: return "rank must be \xE2\x89\xA5" "1";
      case Kind::dims_overflow: return "dims overflow";
      case Kind::trailing_bytes: return "trailing bytes";
    }
    return "decode error";
  }

 private:
  Kind kind_;
};

// Calibration document failures.
class ParseError : public Error {
 public:
  enum class Kind { non_unit_quaternion, missing_field, non_positive_focal, malformed };

  ParseError(Kind kind, const std::string& detail = {})
      : Error(detail.empty() ? std::string(describe(kind))
                             : std::string(describe(kind)) + ": " + detail),
        kind_(kind) {}

  Kind kind() const noexcept { return kind_; }
  const char* name() const noexcept override { return "parse-error"; }
  int exit_code() const noexcept override { return 7; }

  static const char* describe(Kind kind) noexcept {
    switch (kind) {
      case Kind::non_unit_quaternion: return "non-unit quaternion";
      case Kind::missing_field: return "missing field";
      case Kind::non_positive_focal: return "non-positive focal";
      case Kind::malformed: return "malformed calibration";
    }
    return "parse error";
  }

 private:
  Kind kind_;
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* name() const noexcept override { return "io-error"; }
  int exit_code() const noexcept override { return 8; }
};

// The dense and sparse paths disagreed; raised by the benchmark before timing.
class EquivalenceError : public Error {
 public:
  using Error::Error;
  const char* name() const noexcept override { return "equivalence-error"; }
  int exit_code() const noexcept override { return 9; }
};

}  // namespace fastbev
