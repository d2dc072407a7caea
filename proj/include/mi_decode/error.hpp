#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mi {

// Every failure the library reports carries one of these codes. The CLI maps
// them all to exit status 1; usage errors never reach this type.
enum class ErrorCode {
  MissingFile,
  MalformedMeta,
  LengthMismatch,
  UnsortedEvents,
  IoFailure,
  RaggedRows,
  NonNumericCell,
  UnknownEventCode,
  InvalidBand,
  ChannelCountMismatch,
  TooFewChannels,
  OrphanMarker,
  OverlappingTrials,
  TrialTooShort,
  NonIntegerWindow,
  BadK,
  DimensionMismatch,
  WindowTooShort,
  SingleClass,
  EmptyTrial,
  NoTrials,
  EmptyGrid,
  InvalidConfig,
  TooFewRuns,
  LayoutMismatch,
  MissingSession,
  BadSpec,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedMeta: return "MalformedMeta";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UnsortedEvents: return "UnsortedEvents";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::UnknownEventCode: return "UnknownEventCode";
    case ErrorCode::InvalidBand: return "InvalidBand";
    case ErrorCode::ChannelCountMismatch: return "ChannelCountMismatch";
    case ErrorCode::TooFewChannels: return "TooFewChannels";
    case ErrorCode::OrphanMarker: return "OrphanMarker";
    case ErrorCode::OverlappingTrials: return "OverlappingTrials";
    case ErrorCode::TrialTooShort: return "TrialTooShort";
    case ErrorCode::NonIntegerWindow: return "NonIntegerWindow";
    case ErrorCode::BadK: return "BadK";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::WindowTooShort: return "WindowTooShort";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::EmptyTrial: return "EmptyTrial";
    case ErrorCode::NoTrials: return "NoTrials";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TooFewRuns: return "TooFewRuns";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::MissingSession: return "MissingSession";
    case ErrorCode::BadSpec: return "BadSpec";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace mi
