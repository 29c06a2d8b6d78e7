#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace loralife {

// Bad argument to a library call (spreading factor out of range, negative
// duration, ...). Maps to CLI exit code 2.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Frame longer than the regional maximum for its data rate.
class PayloadTooLargeError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

// A required calibration entry is absent (unknown Tx power level, missing
// RX1-ACK energy with no fallback allowed).
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Scenario or calibration document rejected. Carries one message per
// offending key so the CLI can list all of them.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> issues)
      : std::runtime_error(join(issues)), issues_(std::move(issues)) {}

  explicit ValidationError(const std::string& issue)
      : ValidationError(std::vector<std::string>{issue}) {}

  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& issues) {
    std::string out = "invalid configuration:";
    for (const auto& s : issues) {
      out += "\n  - ";
      out += s;
    }
    return out;
  }

  std::vector<std::string> issues_;
};

}  // namespace loralife
