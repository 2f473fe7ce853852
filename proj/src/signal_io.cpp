#include "chatter/signal_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "chatter/error.hpp"

namespace chatter {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

double parse_seconds(std::string_view field, std::size_t line_no) {
  field = trim(field);
  double value = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw Error(ErrorKind::ParseError,
                "line " + std::to_string(line_no) + ": bad number '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

std::string_view class_name(MachiningClass c) noexcept {
  switch (c) {
    case MachiningClass::Chatter: return "chatter";
    case MachiningClass::MachiningNoChatter: return "machining";
    case MachiningClass::RotationNoMachining: return "rotation";
  }
  return "?";
}

std::optional<MachiningClass> parse_class(std::string_view name) noexcept {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  for (auto c : kAllClasses) {
    if (lower == class_name(c)) return c;
  }
  return std::nullopt;
}

std::optional<MachiningClass> class_from_index(std::uint32_t index) noexcept {
  if (index >= kNumClasses) return std::nullopt;
  return static_cast<MachiningClass>(index);
}

void validate_signal(const TimeSignal& signal) {
  if (!(signal.sample_rate_hz >= kMinSampleRateHz)) {
    throw Error(ErrorKind::SampleRateTooLow,
                std::to_string(signal.sample_rate_hz) + " Hz is below 5000 Hz");
  }
  if (signal.samples.empty()) throw Error(ErrorKind::InvalidArgument, "signal has no samples");
}

TimeSignal load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();

  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0) {
    throw Error(ErrorKind::MalformedContainer, path.string() + ": not a RIFF/WAVE file");
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;

  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const unsigned char* chunk = data + pos;
    const std::uint32_t chunk_size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (chunk_size > size - body) {
      // Tolerate an over-long data chunk (streamed recorders), reject anything else.
      if (std::memcmp(chunk, "data", 4) != 0) {
        throw Error(ErrorKind::MalformedContainer, path.string() + ": truncated chunk");
      }
    }
    const std::size_t available = std::min<std::size_t>(chunk_size, size - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (available < 16) throw Error(ErrorKind::MalformedContainer, "fmt chunk too short");
      format = read_u16(data + body);
      channels = read_u16(data + body + 2);
      rate = read_u32(data + body + 4);
      bits = read_u16(data + body + 14);
      if (format == kFormatExtensible) {
        if (available < 26) throw Error(ErrorKind::MalformedContainer, "extensible fmt too short");
        format = read_u16(data + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      pcm = data + body;
      pcm_bytes = available;
    }
    pos = body + available + (available & 1u);
  }

  if (!have_fmt || pcm == nullptr) {
    throw Error(ErrorKind::MalformedContainer, path.string() + ": missing fmt or data chunk");
  }
  if (channels == 0) throw Error(ErrorKind::MalformedContainer, "zero channels");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw Error(ErrorKind::UnsupportedEncoding,
                "format " + std::to_string(format) + " with " + std::to_string(bits) + " bits");
  }
  if (rate < kMinSampleRateHz) {
    throw Error(ErrorKind::SampleRateTooLow, std::to_string(rate) + " Hz is below 5000 Hz");
  }
  if (channels > 1) {
    std::cerr << "warning: " << path.string() << " has " << channels
              << " channels, using channel 0\n";
  }

  const std::size_t sample_bytes = bits / 8;
  const std::size_t frame_bytes = sample_bytes * channels;
  const std::size_t n = pcm_bytes / frame_bytes;

  TimeSignal signal;
  signal.sample_rate_hz = static_cast<double>(rate);
  signal.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* p = pcm + i * frame_bytes;
    if (pcm16) {
      const auto raw = static_cast<std::int16_t>(read_u16(p));
      signal.samples[i] = static_cast<double>(raw) / 32768.0;
    } else {
      signal.samples[i] = static_cast<double>(std::bit_cast<float>(read_u32(p)));
    }
  }
  return signal;
}

void save_wav(const TimeSignal& signal, const std::filesystem::path& path) {
  for (std::size_t i = 0; i < signal.samples.size(); ++i) {
    const double x = signal.samples[i];
    if (!(std::abs(x) <= 1.0)) {
      throw Error(ErrorKind::AmplitudeOutOfRange,
                  "sample " + std::to_string(i) + " = " + std::to_string(x));
    }
  }
  if (!(signal.sample_rate_hz > 0.0) || signal.sample_rate_hz > 4.0e9) {
    throw Error(ErrorKind::InvalidArgument, "bad sample rate");
  }

  const auto rate = static_cast<std::uint32_t>(std::lround(signal.sample_rate_hz));
  const auto data_bytes = static_cast<std::uint32_t>(signal.samples.size() * 2);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double x : signal.samples) {
    const long q = std::clamp(std::lround(x * 32768.0), -32768L, 32767L);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

void normalize_track(LabelTrack& track) {
  if (track.intervals.empty()) throw Error(ErrorKind::EmptyTrack, "no labeled intervals");
  for (const auto& iv : track.intervals) {
    if (!(iv.start_s < iv.end_s)) {
      throw Error(ErrorKind::ParseError, "interval start must precede end");
    }
  }
  std::stable_sort(track.intervals.begin(), track.intervals.end(),
                   [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
  for (std::size_t i = 1; i < track.intervals.size(); ++i) {
    if (track.intervals[i].start_s < track.intervals[i - 1].end_s) {
      throw Error(ErrorKind::OverlappingIntervals,
                  "interval at " + std::to_string(track.intervals[i].start_s) +
                      " s overlaps the previous one");
    }
  }
}

LabelTrack load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());

  LabelTrack track;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;

    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = text.find(',', start);
      fields.push_back(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 3) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected 3 fields");
    }
    LabelInterval iv;
    iv.start_s = parse_seconds(fields[0], line_no);
    iv.end_s = parse_seconds(fields[1], line_no);
    const auto label = parse_class(trim(fields[2]));
    if (!label) {
      throw Error(ErrorKind::UnknownLabel,
                  "line " + std::to_string(line_no) + ": '" + std::string(trim(fields[2])) + "'");
    }
    iv.label = *label;
    if (!(iv.start_s < iv.end_s)) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": start >= end");
    }
    track.intervals.push_back(iv);
  }
  normalize_track(track);
  return track;
}

void save_labels(const LabelTrack& track, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << "# start_s,end_s,label\n";
  out.precision(17);
  for (const auto& iv : track.intervals) {
    out << iv.start_s << ',' << iv.end_s << ',' << class_name(iv.label) << '\n';
  }
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

}  // namespace chatter
