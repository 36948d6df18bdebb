#pragma once

#include <stdexcept>
#include <string>

namespace mvgw {

/// Process exit status reported by the CLI for each error family.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Invalid caller input (bad parameter ranges, too few rows).
class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

// Malformed file contents (bad magic, unparseable header).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ExitCode::kData, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ExitCode::kData, what) {}
};

// Well-formed input whose values violate an invariant (NaN/Inf, duplicate ids).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::kData, what) {}
};

// A curve metric was requested on input lacking one of the two classes.
class MetricUndefinedError : public Error {
 public:
  explicit MetricUndefinedError(const std::string& what) : Error(ExitCode::kData, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kNumeric, what) {}
};

// Color scale whose maximum collapsed to zero.
class DegenerateScaleError : public Error {
 public:
  explicit DegenerateScaleError(const std::string& what) : Error(ExitCode::kNumeric, what) {}
};

}  // namespace mvgw
