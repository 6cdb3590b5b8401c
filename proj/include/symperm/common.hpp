#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace symperm {

/// Index into the canonical countable ground set (natural numbers).
using Point = std::uint64_t;

enum class ErrorCode {
  PreconditionViolation,
  UnresolvedOrbits,
  MatchStall,
  CaseStall,
  DegreeTooLarge,
  SetTooLarge,
  StageCapExceeded,
  ParseError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::PreconditionViolation: return "PRECONDITION_VIOLATION";
    case ErrorCode::UnresolvedOrbits: return "UNRESOLVED_ORBITS";
    case ErrorCode::MatchStall: return "MATCH_STALL";
    case ErrorCode::CaseStall: return "CASE_STALL";
    case ErrorCode::DegreeTooLarge: return "DEGREE_TOO_LARGE";
    case ErrorCode::SetTooLarge: return "SET_TOO_LARGE";
    case ErrorCode::StageCapExceeded: return "STAGE_CAP_EXCEEDED";
    case ErrorCode::ParseError: return "PARSE_ERROR";
  }
  return "UNKNOWN";
}

class SymError : public std::runtime_error {
public:
  SymError(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg),
        code_(code) {}

  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

} // namespace symperm
