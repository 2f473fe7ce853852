#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chatter/signal_io.hpp"
#include "chatter/spectral.hpp"

namespace chatter {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2, Test2Ambiguous = 3 };

inline constexpr std::size_t kNumSplits = 4;
inline constexpr std::array<Split, kNumSplits> kAllSplits = {Split::Train, Split::Val, Split::Test,
                                                             Split::Test2Ambiguous};

std::string_view split_name(Split s) noexcept;
std::optional<Split> parse_split(std::string_view name) noexcept;

using ClassCounts = std::array<std::size_t, kNumClasses>;

struct Sample {
  SpectralFrame frame;
  MachiningClass label = MachiningClass::Chatter;
  std::string source_id;
  bool ambiguous = false;
  Split split = Split::Train;

  bool operator==(const Sample&) const = default;
};

/// Provenance of one input recording.
struct SourceRecord {
  std::string id;
  std::string origin;  // "synth:<spec>" or "wav:<file>"
  bool ambiguous = false;
  std::size_t frames_kept = 0;
  std::size_t frames_dropped = 0;

  bool operator==(const SourceRecord&) const = default;
};

struct Manifest {
  SpectralConfig config;
  std::uint64_t split_seed = 0;
  double test_fraction = 0.0;
  std::vector<SourceRecord> sources;
  std::array<ClassCounts, kNumSplits> counts{};

  std::size_t dropped_frames() const noexcept;

  bool operator==(const Manifest&) const = default;
};

struct LabeledDataset {
  std::vector<Sample> samples;
  Manifest manifest;

  bool operator==(const LabeledDataset&) const = default;
};

/// One input to build_dataset.
struct SourceRecording {
  std::string id;
  std::string origin;
  TimeSignal signal;
  LabelTrack labels;
  bool ambiguous = false;
};

/// Frames each recording, labels frames that sit fully inside one interval,
/// drops the rest, then splits per class: floor(test_fraction * n) to Test,
/// the remainder 70/30 Train/Val (Val rounded to nearest). Ambiguous samples
/// all go to Test2Ambiguous. Line values are stored at 32-bit precision.
LabeledDataset build_dataset(std::span<const SourceRecording> recordings,
                             const SpectralConfig& config, std::uint64_t split_seed,
                             double test_fraction);

/// Assigns unambiguous sample indices (grouped by class) to splits. Exposed
/// for testing the stratification rule on its own.
struct StratifiedCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};
StratifiedCounts stratified_counts(std::size_t n, double test_fraction) noexcept;

ClassCounts class_distribution(const LabeledDataset& ds, Split split);

/// Recomputes per-split counts from the samples.
std::array<ClassCounts, kNumSplits> count_samples(std::span<const Sample> samples);

/// Throws CorruptDataset when any dataset invariant fails.
void validate_dataset(const LabeledDataset& ds);

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 4 + 4 + 4 + 8 + kNumSplits * kNumClasses * 4;
inline constexpr std::size_t kDatasetRecordOverheadBytes = 4 + 4 + 4 + 8;

/// Writes `manifest` and `frames.bin` into `dir`.
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir);
LabeledDataset load_dataset(const std::filesystem::path& dir);

}  // namespace chatter
