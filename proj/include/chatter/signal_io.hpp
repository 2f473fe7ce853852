#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace chatter {

/// The three machining states. The integer encoding is stable and used in
/// every on-disk format.
enum class MachiningClass : std::uint8_t {
  Chatter = 0,
  MachiningNoChatter = 1,
  RotationNoMachining = 2,
};

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<MachiningClass, kNumClasses> kAllClasses = {
    MachiningClass::Chatter, MachiningClass::MachiningNoChatter,
    MachiningClass::RotationNoMachining};

constexpr std::size_t class_index(MachiningClass c) noexcept {
  return static_cast<std::size_t>(c);
}

/// Short names used in label files and reports: chatter, machining, rotation.
std::string_view class_name(MachiningClass c) noexcept;
std::optional<MachiningClass> parse_class(std::string_view name) noexcept;
std::optional<MachiningClass> class_from_index(std::uint32_t index) noexcept;

inline constexpr double kMinSampleRateHz = 5000.0;

struct TimeSignal {
  std::vector<double> samples;
  double sample_rate_hz = 0.0;

  double duration_s() const noexcept {
    return sample_rate_hz > 0.0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
  }
};

/// Throws SampleRateTooLow or InvalidArgument (empty samples).
void validate_signal(const TimeSignal& signal);

struct LabelInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  MachiningClass label = MachiningClass::Chatter;

  bool operator==(const LabelInterval&) const = default;
};

/// Sorted, non-overlapping labeled intervals. Gaps are unlabeled.
struct LabelTrack {
  std::vector<LabelInterval> intervals;

  bool operator==(const LabelTrack&) const = default;
};

TimeSignal load_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Every sample must lie in [-1, 1].
void save_wav(const TimeSignal& signal, const std::filesystem::path& path);

LabelTrack load_labels(const std::filesystem::path& path);
void save_labels(const LabelTrack& track, const std::filesystem::path& path);

/// Sorts and validates a track in place (OverlappingIntervals, EmptyTrack,
/// ParseError for start >= end).
void normalize_track(LabelTrack& track);

}  // namespace chatter
