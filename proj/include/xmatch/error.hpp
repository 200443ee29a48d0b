#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xmatch {

enum class ErrorKind {
  DegenerateProjection,
  ParseError,
  MissingProperty,
  UnsupportedFormat,
  InsufficientNeighborhood,
  ImageTooSmall,
  SupportOutOfBounds,
  PoolExhausted,
  EmptyDataset,
  DegenerateData,
  DimensionMismatch,
  DegenerateConfiguration,
  NoRealSolution,
  InsufficientCorrespondences,
  NoHypothesisFound,
  RefinementDiverged,
  LocalizationFailed,
  EmptySet,
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so
// callers (and the CLI exit-code mapping) can dispatch without string parsing.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by localize(); cause() names the stage error that stopped the pipeline.
class LocalizationFailed : public Error {
 public:
  LocalizationFailed(ErrorKind cause, const std::string& message)
      : Error(ErrorKind::LocalizationFailed,
              std::string(to_string(cause)) + ": " + message),
        cause_(cause) {}

  ErrorKind cause() const noexcept { return cause_; }

 private:
  ErrorKind cause_;
};

}  // namespace xmatch
