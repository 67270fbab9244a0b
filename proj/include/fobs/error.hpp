#pragma once

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>

namespace fobs {

enum class ErrorCode {
  NonFinite,
  DimensionMismatch,
  NoConvergence,
  ParseError,
  DimensionError,
  IoError,
  PreconditionViolated,
  TooLarge,
  H1Failed,
  H2Failed,
  NotDetectable,
  ResidualTooLarge,
  Infeasible,
  InconsistentDynamics,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimensionError: return "DimensionError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::H1Failed: return "H1Failed";
    case ErrorCode::H2Failed: return "H2Failed";
    case ErrorCode::NotDetectable: return "NotDetectable";
    case ErrorCode::ResidualTooLarge: return "ResidualTooLarge";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::InconsistentDynamics: return "InconsistentDynamics";
  }
  return "Unknown";
}

/// Single exception type for the library. The code identifies the failure
/// class; H2Failed and NotDetectable may carry the offending eigenvalue.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::complex<double>> witness = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        witness_(witness) {}

  ErrorCode code() const noexcept { return code_; }
  const std::optional<std::complex<double>>& witness() const noexcept { return witness_; }

 private:
  ErrorCode code_;
  std::optional<std::complex<double>> witness_;
};

}  // namespace fobs
