#ifndef CALX_ERROR_HPP
#define CALX_ERROR_HPP

#include <stdexcept>
#include <string>

namespace calx {

/// Stable error codes so callers can branch on failure kinds without
/// parsing messages.
enum class Errc {
  MissingColumn,
  UnknownCategoryCode,
  NonNumericValue,
  BadSchema,
  InsufficientRows,
  EmptyTraining,
  SchemaMismatch,
  BadModelFile,
  EmptyCalibration,
  InvalidCalibration,
  MissingSigma,
  InvalidPercentiles,
  EmptyInput,
  NonBinaryLabel,
  PayloadMismatch,
  KTooLarge,
  UninitializedState,
  NonFiniteThreshold,
  OrderUnsupported,
  IncompatiblePlotKind,
  ConflictingFlags,
  IoFailure,
  BadDocument,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline void require(bool condition, Errc code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::UnknownCategoryCode: return "UnknownCategoryCode";
    case Errc::NonNumericValue: return "NonNumericValue";
    case Errc::BadSchema: return "BadSchema";
    case Errc::InsufficientRows: return "InsufficientRows";
    case Errc::EmptyTraining: return "EmptyTraining";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::BadModelFile: return "BadModelFile";
    case Errc::EmptyCalibration: return "EmptyCalibration";
    case Errc::InvalidCalibration: return "InvalidCalibration";
    case Errc::MissingSigma: return "MissingSigma";
    case Errc::InvalidPercentiles: return "InvalidPercentiles";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::NonBinaryLabel: return "NonBinaryLabel";
    case Errc::PayloadMismatch: return "PayloadMismatch";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::UninitializedState: return "UninitializedState";
    case Errc::NonFiniteThreshold: return "NonFiniteThreshold";
    case Errc::OrderUnsupported: return "OrderUnsupported";
    case Errc::IncompatiblePlotKind: return "IncompatiblePlotKind";
    case Errc::ConflictingFlags: return "ConflictingFlags";
    case Errc::IoFailure: return "IoFailure";
    case Errc::BadDocument: return "BadDocument";
  }
  return "UnknownError";
}

}  // namespace calx

#endif
