#include "laic/error.hpp"

namespace laic {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MagicMismatch: return "MagicMismatch";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::DimensionZero: return "DimensionZero";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::ZeroRow: return "ZeroRow";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::EmptyCandidateSet: return "EmptyCandidateSet";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::FactorizationFailure: return "FactorizationFailure";
    case ErrorKind::NonSquare: return "NonSquare";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::KHatTooLarge: return "KHatTooLarge";
    case ErrorKind::EmptySelection: return "EmptySelection";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::MissingView: return "MissingView";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::BadDims: return "BadDims";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Config: return "Config";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

Error Error::with_context(std::string_view context) const {
  std::string msg = what();
  // strip our own "Kind: " prefix so it is not repeated
  const auto prefix = std::string(to_string(kind_)) + ": ";
  if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
  return Error(kind_, std::string(context) + ": " + msg);
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::InvalidArgument:
      return 2;
    case ErrorKind::InvariantViolation:
    case ErrorKind::NonFiniteValue:
    case ErrorKind::ZeroRow:
      return 4;
    default:
      return 3;
  }
}

}  // namespace laic
