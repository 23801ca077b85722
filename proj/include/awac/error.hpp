#pragma once

#include <stdexcept>
#include <string>

namespace awac {

// Process exit codes used by the CLI; each error family maps to one.
enum class ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kIo = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kFailure; }
};

// Invalid configuration, arguments or preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

// File or network I/O failure, including corrupt or malformed files.
class IoError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kIo; }
};

// NaN/Inf or other numerical breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
};

// Operation invoked in the wrong state (stepping a finished episode,
// answering a prompt that is not open, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace awac
