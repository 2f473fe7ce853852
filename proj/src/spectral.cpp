#include "chatter/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include "chatter/error.hpp"

namespace chatter {

namespace {

constexpr std::size_t kMinWindowSamples = 16;

// FFTW planning is not thread-safe, execution with new arrays is. Plans are
// created once per size and live for the process.
fftw_plan plan_for(std::size_t n_fft) {
  static std::mutex mutex;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard lock(mutex);
  auto it = plans.find(n_fft);
  if (it != plans.end()) return it->second;
  std::vector<double> in(n_fft);
  std::vector<std::complex<double>> out(n_fft / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), in.data(),
                                        reinterpret_cast<fftw_complex*>(out.data()),
                                        FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans.emplace(n_fft, plan);
  return plan;
}

void check_band(double sample_rate_hz, const SpectralConfig& config) {
  if (config.f_max_hz > sample_rate_hz / 2.0) {
    throw Error(ErrorKind::BandExceedsNyquist,
                "f_max " + std::to_string(config.f_max_hz) + " Hz exceeds Nyquist " +
                    std::to_string(sample_rate_hz / 2.0) + " Hz");
  }
}

template <bool Parallel>
std::vector<SpectralFrame> extract_impl(const TimeSignal& signal, const SpectralConfig& config) {
  validate_config(config);
  validate_signal(signal);
  check_band(signal.sample_rate_hz, config);
  const auto windows = frame_signal(signal, config);
  const auto geometry = frame_geometry(signal.sample_rate_hz, config);
  // Warm the plan cache outside the parallel region.
  plan_for(fft_size_for(signal.sample_rate_hz, geometry.window_n, config));

  std::vector<SpectralFrame> frames(windows.size());
  const auto n = static_cast<std::ptrdiff_t>(windows.size());
  const std::span<const double> samples(signal.samples);

#pragma omp parallel for schedule(static) if (Parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& w = windows[static_cast<std::size_t>(i)];
    auto& frame = frames[static_cast<std::size_t>(i)];
    frame.frame_index = w.frame_index;
    frame.t_start_s = static_cast<double>(w.begin) / signal.sample_rate_hz;
    frame.lines = renormalize(
        magnitude_spectrum(samples.subspan(w.begin, w.length), signal.sample_rate_hz, config),
        config);
  }
  return frames;
}

}  // namespace

void validate_config(const SpectralConfig& config) {
  if (!(config.hop_s > 0.0)) throw Error(ErrorKind::InvalidArgument, "hop_s must be > 0");
  if (!(config.window_s > 0.0)) throw Error(ErrorKind::InvalidArgument, "window_s must be > 0");
  if (config.n_lines < 2) throw Error(ErrorKind::InvalidArgument, "n_lines must be >= 2");
  if (!(config.f_min_hz >= 0.0) || !(config.f_min_hz < config.f_max_hz)) {
    throw Error(ErrorKind::InvalidArgument, "need 0 <= f_min_hz < f_max_hz");
  }
  if (!(config.crop_db > 0.0)) throw Error(ErrorKind::InvalidArgument, "crop_db must be > 0");
}

FrameGeometry frame_geometry(double sample_rate_hz, const SpectralConfig& config) {
  return {static_cast<std::size_t>(std::llround(config.window_s * sample_rate_hz)),
          static_cast<std::size_t>(std::llround(config.hop_s * sample_rate_hz))};
}

std::vector<FrameWindow> frame_signal(const TimeSignal& signal, const SpectralConfig& config) {
  validate_config(config);
  validate_signal(signal);
  const auto g = frame_geometry(signal.sample_rate_hz, config);
  if (g.window_n < kMinWindowSamples) {
    throw Error(ErrorKind::WindowTooShort,
                std::to_string(g.window_n) + " samples per window, need at least 16");
  }
  if (g.hop_n == 0) throw Error(ErrorKind::InvalidArgument, "hop rounds to zero samples");

  std::vector<FrameWindow> frames;
  const std::size_t len = signal.samples.size();
  if (len < g.window_n) return frames;
  const std::size_t count = (len - g.window_n) / g.hop_n + 1;
  frames.reserve(count);
  for (std::size_t k = 0; k < count; ++k) frames.push_back({k, k * g.hop_n, g.window_n});
  return frames;
}

std::size_t fft_size_for(double sample_rate_hz, std::size_t window_n,
                         const SpectralConfig& config) {
  const double grid_step =
      (config.f_max_hz - config.f_min_hz) / static_cast<double>(config.n_lines - 1);
  std::size_t n = 1;
  while (n < window_n || sample_rate_hz / static_cast<double>(n) > grid_step) n <<= 1;
  return n;
}

std::vector<std::complex<double>> real_fft(std::span<const double> input, std::size_t n_fft) {
  if (n_fft < input.size() || n_fft == 0) {
    throw Error(ErrorKind::InvalidArgument, "FFT size smaller than input");
  }
  std::vector<double> buffer(n_fft, 0.0);
  std::copy(input.begin(), input.end(), buffer.begin());
  std::vector<std::complex<double>> out(n_fft / 2 + 1);
  fftw_execute_dft_r2c(plan_for(n_fft), buffer.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

double line_frequency(std::size_t j, const SpectralConfig& config) noexcept {
  if (j + 1 == config.n_lines) return config.f_max_hz;
  return config.f_min_hz + static_cast<double>(j) * (config.f_max_hz - config.f_min_hz) /
                               static_cast<double>(config.n_lines - 1);
}

std::vector<double> magnitude_spectrum(std::span<const double> window, double sample_rate_hz,
                                       const SpectralConfig& config) {
  if (window.empty()) throw Error(ErrorKind::InvalidArgument, "empty window");
  validate_config(config);
  check_band(sample_rate_hz, config);

  const std::size_t n = window.size();
  std::vector<double> tapered(window.begin(), window.end());
  if (config.window == WindowFunction::Hann && n > 1) {
    const double denom = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      tapered[i] *= 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom);
    }
  }

  const std::size_t n_fft = fft_size_for(sample_rate_hz, n, config);
  const auto spectrum = real_fft(tapered, n_fft);
  const std::size_t last_bin = spectrum.size() - 1;

  std::vector<double> out(config.n_lines);
  for (std::size_t j = 0; j < config.n_lines; ++j) {
    const double pos = line_frequency(j, config) * static_cast<double>(n_fft) / sample_rate_hz;
    const auto k = std::min(static_cast<std::size_t>(pos), last_bin);
    const double frac = std::clamp(pos - static_cast<double>(k), 0.0, 1.0);
    const double a = std::abs(spectrum[k]);
    const double b = k < last_bin ? std::abs(spectrum[k + 1]) : a;
    out[j] = a + frac * (b - a);
  }
  return out;
}

std::vector<double> renormalize(std::span<const double> magnitudes, const SpectralConfig& config) {
  const double floor_db = -config.crop_db;
  std::vector<double> lines(magnitudes.size(), floor_db);
  const double peak = magnitudes.empty() ? 0.0 : *std::max_element(magnitudes.begin(), magnitudes.end());
  if (!(peak > 0.0)) return lines;
  for (std::size_t j = 0; j < magnitudes.size(); ++j) {
    const double m = magnitudes[j];
    if (m > 0.0) lines[j] = std::max(20.0 * std::log10(m / peak), floor_db);
  }
  return lines;
}

std::vector<SpectralFrame> extract_frames(const TimeSignal& signal, const SpectralConfig& config) {
  return extract_impl<true>(signal, config);
}

std::vector<SpectralFrame> extract_frames_serial(const TimeSignal& signal,
                                                 const SpectralConfig& config) {
  return extract_impl<false>(signal, config);
}

void export_frame_pgm(const SpectralFrame& frame, const SpectralConfig& config,
                      const std::filesystem::path& path) {
  const std::size_t width = frame.lines.size();
  std::vector<std::size_t> heights(width);
  for (std::size_t j = 0; j < width; ++j) {
    const double h = std::round(static_cast<double>(kPgmHeight) * (frame.lines[j] + config.crop_db) /
                                config.crop_db);
    heights[j] = static_cast<std::size_t>(std::clamp(h, 0.0, static_cast<double>(kPgmHeight)));
  }

  std::string pixels(width * kPgmHeight, '\0');
  for (std::size_t row = 0; row < kPgmHeight; ++row) {
    const std::size_t from_bottom = kPgmHeight - row;
    for (std::size_t j = 0; j < width; ++j) {
      if (from_bottom <= heights[j]) pixels[row * width + j] = static_cast<char>(255);
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << "P5\n" << width << ' ' << kPgmHeight << "\n255\n";
  out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

}  // namespace chatter
