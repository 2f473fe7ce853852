#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "chatter/signal_io.hpp"

namespace chatter {

enum class WindowFunction { Hann, Rectangular };

struct SpectralConfig {
  double hop_s = 0.1;
  double window_s = 0.1;
  std::size_t n_lines = 1024;
  double f_min_hz = 0.0;
  double f_max_hz = 2500.0;
  double crop_db = 20.0;
  WindowFunction window = WindowFunction::Hann;

  bool operator==(const SpectralConfig&) const = default;
};

/// Checks the rate-independent invariants; throws InvalidArgument.
void validate_config(const SpectralConfig& config);

/// One analysis frame: n_lines dB values in [-crop_db, 0] with max exactly 0,
/// or all equal to -crop_db for a silent frame.
struct SpectralFrame {
  std::vector<double> lines;
  std::size_t frame_index = 0;
  double t_start_s = 0.0;

  bool operator==(const SpectralFrame&) const = default;
};

/// Half-open sample range [begin, begin + length) of one frame.
struct FrameWindow {
  std::size_t frame_index = 0;
  std::size_t begin = 0;
  std::size_t length = 0;
};

struct FrameGeometry {
  std::size_t window_n = 0;
  std::size_t hop_n = 0;
};

FrameGeometry frame_geometry(double sample_rate_hz, const SpectralConfig& config);

/// Frames that fit entirely inside the signal. Throws WindowTooShort when a
/// window would hold fewer than 16 samples.
std::vector<FrameWindow> frame_signal(const TimeSignal& signal, const SpectralConfig& config);

/// Smallest power of two whose bin spacing is no coarser than the output grid
/// and which holds at least `window_n` samples.
std::size_t fft_size_for(double sample_rate_hz, std::size_t window_n, const SpectralConfig& config);

/// Unnormalized forward DFT of `input` zero-padded to `n_fft`, bins 0..n_fft/2.
std::vector<std::complex<double>> real_fft(std::span<const double> input, std::size_t n_fft);

/// Frequency of output line j.
double line_frequency(std::size_t j, const SpectralConfig& config) noexcept;

/// Windowed, zero-padded FFT magnitude resampled onto the n_lines grid.
std::vector<double> magnitude_spectrum(std::span<const double> window, double sample_rate_hz,
                                       const SpectralConfig& config);

/// dB relative to the frame maximum, floored at -crop_db.
std::vector<double> renormalize(std::span<const double> magnitudes, const SpectralConfig& config);

/// frame_signal -> magnitude_spectrum -> renormalize, frames in parallel.
std::vector<SpectralFrame> extract_frames(const TimeSignal& signal, const SpectralConfig& config);

/// Same result as extract_frames computed on the calling thread only.
std::vector<SpectralFrame> extract_frames_serial(const TimeSignal& signal,
                                                 const SpectralConfig& config);

inline constexpr std::size_t kPgmHeight = 64;

/// 8-bit P5 image, n_lines wide and 64 tall, bar height proportional to dB.
void export_frame_pgm(const SpectralFrame& frame, const SpectralConfig& config,
                      const std::filesystem::path& path);

}  // namespace chatter
