#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace laic {

enum class ErrorKind {
  // embed-io
  MagicMismatch,
  TruncatedFile,
  NonFiniteValue,
  DimensionZero,
  IoFailure,
  ZeroRow,
  // algorithms
  KTooLarge,
  EmptyCandidateSet,
  DimMismatch,
  FactorizationFailure,
  NonSquare,
  LengthMismatch,
  KHatTooLarge,
  EmptySelection,
  ZeroVector,
  EmptyBatch,
  MissingView,
  DivergenceDetected,
  BadDims,
  InvalidArgument,
  // pipeline
  Config,
  InvariantViolation,
};

std::string_view to_string(ErrorKind kind);

/// Every failure in the library surfaces as this exception; `kind()` is stable
/// and suitable for dispatch, `what()` is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

  /// Same kind, message prefixed with `context: `.
  Error with_context(std::string_view context) const;

 private:
  ErrorKind kind_;
};

/// Process exit code for an error: 2 config, 3 stage failure, 4 invariant violation.
int exit_code_for(ErrorKind kind);

}  // namespace laic
