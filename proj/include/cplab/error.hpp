#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cplab {

enum class ErrorCode {
  InvalidArgument,
  OutOfDomain,
  DegenerateMetric,
  ZeroVector,
  FDUnstable,
  InvalidInitialState,
  NonFiniteRHS,
  NotIncomplete,
  GridMismatch,
  NonPositiveAlpha,
  NotNondecreasing,
  EnergyTooLow,
  EmptyRegion,
  NonPositiveInput,
  TooFewSamples,
  NotStronglyConvex,
  BadDimension,
  LightlikeUOrbit,
  ZeroV,
  UnknownScenario,
  ParseError,
  UnknownIdentifier,
  EvalError,
  ConfigError,
  NumericFailure,
};

constexpr std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::DegenerateMetric: return "DegenerateMetric";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::FDUnstable: return "FDUnstable";
    case ErrorCode::InvalidInitialState: return "InvalidInitialState";
    case ErrorCode::NonFiniteRHS: return "NonFiniteRHS";
    case ErrorCode::NotIncomplete: return "NotIncomplete";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::NonPositiveAlpha: return "NonPositiveAlpha";
    case ErrorCode::NotNondecreasing: return "NotNondecreasing";
    case ErrorCode::EnergyTooLow: return "EnergyTooLow";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NotStronglyConvex: return "NotStronglyConvex";
    case ErrorCode::BadDimension: return "BadDimension";
    case ErrorCode::LightlikeUOrbit: return "LightlikeUOrbit";
    case ErrorCode::ZeroV: return "ZeroV";
    case ErrorCode::UnknownScenario: return "UnknownScenario";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownIdentifier: return "UnknownIdentifier";
    case ErrorCode::EvalError: return "EvalError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace cplab
