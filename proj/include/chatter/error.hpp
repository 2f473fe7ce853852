#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chatter {

/// Failure categories raised by the pipeline. The CLI reports them by name.
enum class ErrorKind {
  IoFailure,
  MalformedContainer,
  UnsupportedEncoding,
  SampleRateTooLow,
  AmplitudeOutOfRange,
  ParseError,
  UnknownLabel,
  OverlappingIntervals,
  EmptyTrack,
  InvalidArgument,
  WindowTooShort,
  BandExceedsNyquist,
  InfeasibleSpec,
  EmptyDataset,
  MissingClass,
  CorruptDataset,
  WrongInputLength,
  CorruptModel,
  LengthMismatch,
  Empty,
  EmptyMatrix,
  DegenerateClass,
};

std::string_view error_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace chatter
