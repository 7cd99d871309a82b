#pragma once

#include <stdexcept>
#include <string>

namespace nvphoto {

enum class ErrorKind {
  invalid_parameter,
  oscillatory_regime,
  no_steady_state,
  undefined_contrast,
  unsupported_wavelength,
  uncalibrated_wavelength,
  calibration_failure,
  fit_failure,
  config,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_parameter: return "invalid parameter";
    case ErrorKind::oscillatory_regime: return "oscillatory regime";
    case ErrorKind::no_steady_state: return "no unique steady state";
    case ErrorKind::undefined_contrast: return "undefined contrast";
    case ErrorKind::unsupported_wavelength: return "unsupported wavelength";
    case ErrorKind::uncalibrated_wavelength: return "uncalibrated wavelength";
    case ErrorKind::calibration_failure: return "calibration failure";
    case ErrorKind::fit_failure: return "fit failure";
    case ErrorKind::config: return "config error";
    case ErrorKind::io: return "i/o error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // CLI exit code: 1 for usage/config/io problems, 2 for numerical failures.
  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::config:
      case ErrorKind::io:
      case ErrorKind::unsupported_wavelength:
      case ErrorKind::uncalibrated_wavelength:
        return 1;
      default:
        return 2;
    }
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace nvphoto
