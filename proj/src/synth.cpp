#include "chatter/synth.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "chatter/error.hpp"

namespace chatter {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kRotationAmplitude = 0.05;
constexpr double kSidebandRatio = 0.3;
constexpr double kMaxChatterOffsetHz = 3.0;
constexpr int kChatterAttempts = 64;
constexpr int kModeRedraws = 16;
constexpr double kBandLowHz = 0.0;
constexpr double kBandHighHz = 2500.0;

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::ParseError, "bad number '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::ParseError, "bad integer '" + s + "'");
  }
  return v;
}

double sum_of_tones(double t, double f0, std::span<const double> amplitudes,
                    std::span<const double> phases) {
  double acc = 0.0;
  for (std::size_t h = 0; h < amplitudes.size(); ++h) {
    acc += amplitudes[h] * std::sin(kTwoPi * static_cast<double>(h + 1) * f0 * t + phases[h]);
  }
  return acc;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return splitmix64(seed ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

void validate_spec(const SynthSpec& spec) {
  const double f_tp = spec.tooth_passing_hz();
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidArgument, what); };
  if (!(spec.spindle_rpm > 0.0) || spec.n_teeth == 0) fail("spindle_rpm and n_teeth must be positive");
  if (!(f_tp > kBandLowHz && f_tp < kBandHighHz)) fail("tooth-passing frequency outside the analysis band");
  if (!(spec.structural_mode_hz > 0.0 && spec.structural_mode_hz < kBandHighHz)) {
    fail("structural mode outside (0, 2500) Hz");
  }
  if (!(spec.chatter_ratio >= 0.0)) fail("chatter_ratio must be >= 0");
  if (!(spec.noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(spec.amplitude_scale > 0.0) || !std::isfinite(spec.amplitude_scale)) {
    fail("amplitude_scale must be > 0");
  }
  if (!(spec.duration_s > 0.0) || spec.duration_s > 3600.0) fail("duration_s must be in (0, 3600]");
  if (!(spec.ambiguity >= 0.0 && spec.ambiguity < 1.0)) fail("ambiguity must be in [0, 1)");
}

double harmonic_grid_distance(double frequency_hz, double f_tp_hz) {
  const double k_near = std::max(1.0, std::round(frequency_hz / f_tp_hz));
  double best = std::abs(frequency_hz - k_near * f_tp_hz);
  for (double k : {k_near - 1.0, k_near + 1.0}) {
    if (k >= 1.0) best = std::min(best, std::abs(frequency_hz - k * f_tp_hz));
  }
  return best;
}

double chatter_frequency(const SynthSpec& spec) {
  validate_spec(spec);
  std::mt19937_64 rng(derive_seed(spec.seed, 1));
  std::uniform_real_distribution<double> offset(-kMaxChatterOffsetHz, kMaxChatterOffsetHz);
  const double f_tp = spec.tooth_passing_hz();
  for (int attempt = 0; attempt < kChatterAttempts; ++attempt) {
    const double f_c = spec.structural_mode_hz + offset(rng);
    if (f_c > kChatterHarmonicMarginHz &&
        harmonic_grid_distance(f_c, f_tp) > kChatterHarmonicMarginHz) {
      return f_c;
    }
  }
  throw Error(ErrorKind::InfeasibleSpec,
              "no chatter frequency near " + format_double(spec.structural_mode_hz) +
                  " Hz clears the harmonics of " + format_double(f_tp) + " Hz");
}

TimeSignal generate(const SynthSpec& spec) {
  validate_spec(spec);

  std::mt19937_64 phase_rng(derive_seed(spec.seed, 0));
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::array<double, 3> rotation_phase{};
  std::array<double, 6> machining_phase{};
  std::array<double, 3> chatter_phase{};
  for (auto& p : rotation_phase) p = phase(phase_rng);
  for (auto& p : machining_phase) p = phase(phase_rng);
  for (auto& p : chatter_phase) p = phase(phase_rng);

  std::array<double, 3> rotation_amp{};
  for (std::size_t h = 0; h < rotation_amp.size(); ++h) {
    rotation_amp[h] = kRotationAmplitude / static_cast<double>(h + 1);
  }
  std::array<double, 6> machining_amp{};
  for (std::size_t h = 0; h < machining_amp.size(); ++h) {
    machining_amp[h] = 1.0 / static_cast<double>(h + 1);
  }

  const double lambda = spec.ambiguity;
  const double f_r = spec.spindle_hz();
  const double f_tp = spec.tooth_passing_hz();

  // Weights of the rotation, machining and chatter-tone components.
  double w_rotation = 0.0;
  double w_machining = 0.0;
  double w_tone = 0.0;
  switch (spec.label) {
    case MachiningClass::RotationNoMachining:
      w_rotation = 1.0 - lambda;
      w_machining = lambda * kRotationAmplitude;
      break;
    case MachiningClass::MachiningNoChatter:
      w_machining = 1.0;
      w_tone = lambda;
      break;
    case MachiningClass::Chatter:
      w_machining = 1.0;
      w_tone = 1.0 - lambda;
      break;
  }

  const double f_c = w_tone > 0.0 ? chatter_frequency(spec) : 0.0;
  const double tone_amp = spec.chatter_ratio * machining_amp[0];

  std::mt19937_64 noise_rng(derive_seed(spec.seed, 2));
  std::normal_distribution<double> gauss(0.0, 1.0);

  TimeSignal signal;
  signal.sample_rate_hz = kSynthSampleRateHz;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * kSynthSampleRateHz));
  signal.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSynthSampleRateHz;
    double x = 0.0;
    if (w_rotation > 0.0) x += w_rotation * sum_of_tones(t, f_r, rotation_amp, rotation_phase);
    if (w_machining > 0.0) x += w_machining * sum_of_tones(t, f_tp, machining_amp, machining_phase);
    if (w_tone > 0.0) {
      x += w_tone * tone_amp *
           (std::sin(kTwoPi * f_c * t + chatter_phase[0]) +
            kSidebandRatio * std::sin(kTwoPi * (f_c - f_tp) * t + chatter_phase[1]) +
            kSidebandRatio * std::sin(kTwoPi * (f_c + f_tp) * t + chatter_phase[2]));
    }
    if (spec.noise_sigma > 0.0) x += spec.noise_sigma * gauss(noise_rng);
    signal.samples[i] = x * spec.amplitude_scale;
  }
  return signal;
}

std::string to_string(const SynthSpec& spec) {
  std::string out;
  out += "rpm=" + format_double(spec.spindle_rpm);
  out += ";teeth=" + std::to_string(spec.n_teeth);
  out += ";mode=" + format_double(spec.structural_mode_hz);
  out += ";ratio=" + format_double(spec.chatter_ratio);
  out += ";noise=" + format_double(spec.noise_sigma);
  out += ";scale=" + format_double(spec.amplitude_scale);
  out += ";duration=" + format_double(spec.duration_s);
  out += ";seed=" + std::to_string(spec.seed);
  out += ";class=" + std::string(class_name(spec.label));
  out += ";ambiguity=" + format_double(spec.ambiguity);
  return out;
}

SynthSpec parse_synth_spec(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::ParseError, "bad spec item '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorKind::ParseError, std::string("spec missing ") + key);
    return it->second;
  };
  SynthSpec spec;
  spec.spindle_rpm = parse_double(get("rpm"));
  spec.n_teeth = static_cast<std::uint32_t>(parse_u64(get("teeth")));
  spec.structural_mode_hz = parse_double(get("mode"));
  spec.chatter_ratio = parse_double(get("ratio"));
  spec.noise_sigma = parse_double(get("noise"));
  spec.amplitude_scale = parse_double(get("scale"));
  spec.duration_s = parse_double(get("duration"));
  spec.seed = parse_u64(get("seed"));
  const auto label = parse_class(get("class"));
  if (!label) throw Error(ErrorKind::UnknownLabel, get("class"));
  spec.label = *label;
  spec.ambiguity = parse_double(get("ambiguity"));
  return spec;
}

std::vector<CorpusEntry> generate_corpus(std::size_t n_per_class, double ambiguous_fraction,
                                         std::span<const double> rpm_choices, std::uint64_t seed,
                                         const CorpusOptions& options) {
  if (n_per_class == 0) throw Error(ErrorKind::InvalidArgument, "n_per_class must be >= 1");
  if (rpm_choices.empty()) throw Error(ErrorKind::InvalidArgument, "rpm_choices is empty");
  if (!(ambiguous_fraction >= 0.0 && ambiguous_fraction <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "ambiguous_fraction must be in [0, 1]");
  }
  const auto n_ambiguous = static_cast<std::size_t>(
      std::llround(ambiguous_fraction * static_cast<double>(n_per_class)));

  // Specs are drawn up front (cheap, validates feasibility); synthesis runs in parallel.
  std::vector<CorpusEntry> corpus(kNumClasses * n_per_class);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const std::size_t index = c * n_per_class + i;
      auto& entry = corpus[index];
      std::mt19937_64 rng(derive_seed(seed, index));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

      SynthSpec spec;
      spec.label = kAllClasses[c];
      spec.spindle_rpm = rpm_choices[i % rpm_choices.size()];
      spec.n_teeth = options.n_teeth;
      spec.duration_s = options.duration_s;
      spec.structural_mode_hz = draw(options.min_mode_hz, options.max_mode_hz);
      spec.chatter_ratio = draw(options.min_chatter_ratio, options.max_chatter_ratio);
      spec.noise_sigma = draw(0.0, options.max_noise_sigma);
      const double target_peak = draw(0.2, 0.9);
      entry.ambiguous = i >= n_per_class - n_ambiguous;
      spec.ambiguity = entry.ambiguous ? draw(options.min_ambiguity, options.max_ambiguity) : 0.0;
      spec.seed = rng();
      spec.amplitude_scale = target_peak;  // placeholder until the raw peak is known

      const bool needs_tone = spec.label != MachiningClass::RotationNoMachining &&
                              !(spec.label == MachiningClass::MachiningNoChatter && !entry.ambiguous);
      if (needs_tone) {
        for (int redraw = 0;; ++redraw) {
          try {
            chatter_frequency(spec);
            break;
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::InfeasibleSpec || redraw + 1 >= kModeRedraws) throw;
            spec.structural_mode_hz = draw(options.min_mode_hz, options.max_mode_hz);
          }
        }
      }

      char id[64];
      std::snprintf(id, sizeof id, "%s_%05zu", std::string(class_name(spec.label)).c_str(), i);
      entry.id = id;
      entry.spec = spec;
    }
  }

  const auto n = static_cast<std::ptrdiff_t>(corpus.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    auto& entry = corpus[static_cast<std::size_t>(k)];
    const double target_peak = entry.spec.amplitude_scale;
    entry.spec.amplitude_scale = 1.0;
    entry.signal = generate(entry.spec);
    double peak = 0.0;
    for (double x : entry.signal.samples) peak = std::max(peak, std::abs(x));
    const double scale = peak > 0.0 ? target_peak / peak : 1.0;
    entry.spec.amplitude_scale = scale;
    for (double& x : entry.signal.samples) x *= scale;
    entry.labels.intervals = {{0.0, entry.signal.duration_s(), entry.spec.label}};
  }
  return corpus;
}

void write_corpus(std::span<const CorpusEntry> corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string());
  std::ofstream manifest(dir / "corpus.manifest", std::ios::trunc);
  if (!manifest) throw Error(ErrorKind::IoFailure, "cannot write corpus manifest");
  manifest << "# synthetic machining corpus\n";
  manifest << "sources=" << corpus.size() << '\n';
  for (const auto& entry : corpus) {
    save_wav(entry.signal, dir / (entry.id + ".wav"));
    save_labels(entry.labels, dir / (entry.id + ".csv"));
    manifest << "source=" << entry.id << '|' << (entry.ambiguous ? 1 : 0) << '|'
             << "synth:" << to_string(entry.spec) << '\n';
  }
  if (!manifest) throw Error(ErrorKind::IoFailure, "write failed for corpus manifest");
}

std::vector<CorpusIndexEntry> read_corpus_index(const std::filesystem::path& dir) {
  std::vector<CorpusIndexEntry> index;
  const auto manifest_path = dir / "corpus.manifest";
  if (std::filesystem::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + manifest_path.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("source=", 0) != 0) continue;
      const std::string body = line.substr(7);
      const auto bar1 = body.find('|');
      const auto bar2 = bar1 == std::string::npos ? bar1 : body.find('|', bar1 + 1);
      if (bar2 == std::string::npos) throw Error(ErrorKind::ParseError, "bad source line: " + line);
      CorpusIndexEntry e;
      e.id = body.substr(0, bar1);
      const auto flag = body.substr(bar1 + 1, bar2 - bar1 - 1);
      if (flag != "0" && flag != "1") throw Error(ErrorKind::ParseError, "bad ambiguous flag: " + line);
      e.ambiguous = flag == "1";
      e.origin = body.substr(bar2 + 1);
      e.wav = dir / (e.id + ".wav");
      e.labels = dir / (e.id + ".csv");
      index.push_back(std::move(e));
    }
    return index;
  }

  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorKind::IoFailure, dir.string() + " is not a directory");
  }
  for (const auto& item : std::filesystem::directory_iterator(dir)) {
    if (item.path().extension() != ".wav") continue;
    CorpusIndexEntry e;
    e.id = item.path().stem().string();
    e.origin = "wav:" + item.path().filename().string();
    e.wav = item.path();
    e.labels = item.path();
    e.labels.replace_extension(".csv");
    index.push_back(std::move(e));
  }
  std::sort(index.begin(), index.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return index;
}

}  // namespace chatter
