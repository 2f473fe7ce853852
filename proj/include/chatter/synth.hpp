#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "chatter/signal_io.hpp"

namespace chatter {

inline constexpr double kSynthSampleRateHz = 22050.0;

/// Minimum distance between a chatter tone and any tooth-passing harmonic.
/// Larger than the nominal 5 Hz so the strongest output line, which can sit
/// up to half a grid step away from the tone, still clears 5 Hz.
inline constexpr double kChatterHarmonicMarginHz = 8.0;

struct SynthSpec {
  double spindle_rpm = 3000.0;
  std::uint32_t n_teeth = 4;
  double structural_mode_hz = 1130.0;
  double chatter_ratio = 3.0;
  double noise_sigma = 0.0;
  double amplitude_scale = 1.0;
  double duration_s = 1.0;
  std::uint64_t seed = 0;
  MachiningClass label = MachiningClass::Chatter;
  double ambiguity = 0.0;

  double tooth_passing_hz() const noexcept { return n_teeth * spindle_rpm / 60.0; }
  double spindle_hz() const noexcept { return spindle_rpm / 60.0; }

  bool operator==(const SynthSpec&) const = default;
};

void validate_spec(const SynthSpec& spec);

/// Chatter tone frequency the generator will use for `spec` (structural mode
/// plus a seeded offset of at most 3 Hz). Throws InfeasibleSpec.
double chatter_frequency(const SynthSpec& spec);

TimeSignal generate(const SynthSpec& spec);

/// min over k >= 1 of |frequency - k * f_tp|.
double harmonic_grid_distance(double frequency_hz, double f_tp_hz);

/// `key=value;...` encoding used in manifests; lossless for every field.
std::string to_string(const SynthSpec& spec);
SynthSpec parse_synth_spec(const std::string& text);

struct CorpusEntry {
  std::string id;
  SynthSpec spec;
  TimeSignal signal;
  LabelTrack labels;
  bool ambiguous = false;
};

struct CorpusOptions {
  double duration_s = 0.5;
  std::uint32_t n_teeth = 4;
  double min_mode_hz = 600.0;
  double max_mode_hz = 2200.0;
  double min_chatter_ratio = 2.0;
  double max_chatter_ratio = 4.0;
  double max_noise_sigma = 0.02;
  double min_ambiguity = 0.1;
  double max_ambiguity = 0.45;
};

/// n_per_class signals per class, of which round(ambiguous_fraction *
/// n_per_class) are ambiguous. Spindle speeds cycle through `rpm_choices`.
/// Signals are generated in parallel from per-signal derived seeds.
std::vector<CorpusEntry> generate_corpus(std::size_t n_per_class, double ambiguous_fraction,
                                         std::span<const double> rpm_choices, std::uint64_t seed,
                                         const CorpusOptions& options = {});

/// Seed for the signal at `index` of a corpus seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// On-disk corpus: <id>.wav, <id>.csv and corpus.manifest.
void write_corpus(std::span<const CorpusEntry> corpus, const std::filesystem::path& dir);

struct CorpusIndexEntry {
  std::string id;
  std::string origin;
  bool ambiguous = false;
  std::filesystem::path wav;
  std::filesystem::path labels;
};

/// Reads corpus.manifest when present, otherwise pairs every *.wav with the
/// same-stem .csv and marks it unambiguous.
std::vector<CorpusIndexEntry> read_corpus_index(const std::filesystem::path& dir);

}  // namespace chatter
