#pragma once

#include <stdexcept>
#include <string>

namespace nar {

enum class ErrorKind {
  // structural / validation
  OverlappingGroups,
  IncompleteCover,
  EmptyGroup,
  IndexOutOfRange,
  ShapeMismatch,
  EmptyPanel,
  InsufficientHistory,
  InvalidConfig,
  // numerical
  SingularDesign,
  SingularPrecision,
  NotPositiveDefinite,
  NonFinite,
  ExplosivePath,
  InfeasiblePattern,
  TooManyIndicators,
  // metrics
  AllCellsExcluded,
  ZeroNormalizer,
  // io
  ParseError,
  RaggedRows,
  NonFiniteCell,
  IoError,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace nar
