#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace skill {

enum class ErrorCode {
  InvalidArgument,
  NotPositiveDefinite,
  EmptyInput,
  BadMagic,
  DimMismatch,
  LabelOutOfRange,
  TruncatedFile,
  IoError,
  MissingClassSamples,
  ZeroNormRow,
  MixedNormModes,
  ShapeMismatch,
  EmptySelection,
  TooFewSamples,
  DuplicateTask,
  EmptyBank,
  EmptyClass,
  SingularAfterRegularization,
  NotFinalized,
  NotAllReceived,
  PayloadMismatch,
  UnknownSender,
  ZeroNormEmbedding,
  CountMismatch,
  TaskNeverLearned,
  ConfigInvalid,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingClassSamples: return "MissingClassSamples";
    case ErrorCode::ZeroNormRow: return "ZeroNormRow";
    case ErrorCode::MixedNormModes: return "MixedNormModes";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DuplicateTask: return "DuplicateTask";
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::SingularAfterRegularization: return "SingularAfterRegularization";
    case ErrorCode::NotFinalized: return "NotFinalized";
    case ErrorCode::NotAllReceived: return "NotAllReceived";
    case ErrorCode::PayloadMismatch: return "PayloadMismatch";
    case ErrorCode::UnknownSender: return "UnknownSender";
    case ErrorCode::ZeroNormEmbedding: return "ZeroNormEmbedding";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::TaskNeverLearned: return "TaskNeverLearned";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

// Every failure in the library is reported as an Error carrying a code, so
// callers and tests can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace skill
