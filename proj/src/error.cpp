#include "chatter/error.hpp"

namespace chatter {

std::string_view error_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::MalformedContainer: return "MalformedContainer";
    case ErrorKind::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorKind::SampleRateTooLow: return "SampleRateTooLow";
    case ErrorKind::AmplitudeOutOfRange: return "AmplitudeOutOfRange";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::OverlappingIntervals: return "OverlappingIntervals";
    case ErrorKind::EmptyTrack: return "EmptyTrack";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::WindowTooShort: return "WindowTooShort";
    case ErrorKind::BandExceedsNyquist: return "BandExceedsNyquist";
    case ErrorKind::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::MissingClass: return "MissingClass";
    case ErrorKind::CorruptDataset: return "CorruptDataset";
    case ErrorKind::WrongInputLength: return "WrongInputLength";
    case ErrorKind::CorruptModel: return "CorruptModel";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::Empty: return "Empty";
    case ErrorKind::EmptyMatrix: return "EmptyMatrix";
    case ErrorKind::DegenerateClass: return "DegenerateClass";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& detail)
    : std::runtime_error(std::string(error_name(kind)) + ": " + detail), kind_(kind) {}

}  // namespace chatter
