#include "chatter/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <unordered_map>

#include "chatter/error.hpp"

namespace chatter {

namespace {

constexpr double kContainmentEps = 1e-9;
constexpr char kMagic[4] = {'C', 'H', 'D', 'S'};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorKind::CorruptDataset, what); }

template <class T>
T parse_number(const std::string& s) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) corrupt("bad number '" + s + "'");
  return v;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

bool frame_is_valid(const SpectralFrame& frame, std::size_t n_lines, double crop_db) {
  if (frame.lines.size() != n_lines || n_lines == 0) return false;
  double peak = -crop_db;
  bool all_floor = true;
  for (double v : frame.lines) {
    if (!(v >= -crop_db && v <= 0.0)) return false;
    peak = std::max(peak, v);
    all_floor = all_floor && v == -crop_db;
  }
  return peak == 0.0 || all_floor;
}

std::string_view window_name(WindowFunction w) {
  return w == WindowFunction::Hann ? "hann" : "rectangular";
}

}  // namespace

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Test2Ambiguous: return "test2";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view name) noexcept {
  for (auto s : kAllSplits) {
    if (name == split_name(s)) return s;
  }
  return std::nullopt;
}

std::size_t Manifest::dropped_frames() const noexcept {
  std::size_t total = 0;
  for (const auto& s : sources) total += s.frames_dropped;
  return total;
}

StratifiedCounts stratified_counts(std::size_t n, double test_fraction) noexcept {
  StratifiedCounts c;
  c.test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n)));
  c.test = std::min(c.test, n);
  const std::size_t rest = n - c.test;
  c.val = (3 * rest + 5) / 10;
  c.train = rest - c.val;
  return c;
}

std::array<ClassCounts, kNumSplits> count_samples(std::span<const Sample> samples) {
  std::array<ClassCounts, kNumSplits> counts{};
  for (const auto& s : samples) {
    counts[static_cast<std::size_t>(s.split)][class_index(s.label)] += 1;
  }
  return counts;
}

ClassCounts class_distribution(const LabeledDataset& ds, Split split) {
  return count_samples(ds.samples)[static_cast<std::size_t>(split)];
}

LabeledDataset build_dataset(std::span<const SourceRecording> recordings,
                             const SpectralConfig& config, std::uint64_t split_seed,
                             double test_fraction) {
  if (recordings.empty()) throw Error(ErrorKind::EmptyDataset, "no recordings");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "test_fraction must be in [0, 1)");
  }
  validate_config(config);

  LabeledDataset ds;
  ds.manifest.config = config;
  ds.manifest.split_seed = split_seed;
  ds.manifest.test_fraction = test_fraction;

  for (const auto& rec : recordings) {
    LabelTrack track = rec.labels;
    normalize_track(track);
    const auto frames = extract_frames(rec.signal, config);
    const double window_len =
        static_cast<double>(frame_geometry(rec.signal.sample_rate_hz, config).window_n) /
        rec.signal.sample_rate_hz;

    SourceRecord source{rec.id, rec.origin, rec.ambiguous, 0, 0};
    for (const auto& frame : frames) {
      const double t0 = frame.t_start_s;
      const double t1 = t0 + window_len;
      const auto it = std::find_if(track.intervals.begin(), track.intervals.end(), [&](const auto& iv) {
        return t0 >= iv.start_s - kContainmentEps && t1 <= iv.end_s + kContainmentEps;
      });
      if (it == track.intervals.end()) {
        ++source.frames_dropped;
        continue;
      }
      Sample sample;
      sample.frame = frame;
      for (double& v : sample.frame.lines) v = static_cast<double>(static_cast<float>(v));
      sample.label = it->label;
      sample.source_id = rec.id;
      sample.ambiguous = rec.ambiguous;
      sample.split = rec.ambiguous ? Split::Test2Ambiguous : Split::Train;
      ds.samples.push_back(std::move(sample));
      ++source.frames_kept;
    }
    ds.manifest.sources.push_back(std::move(source));
  }
  if (ds.samples.empty()) throw Error(ErrorKind::EmptyDataset, "no frame fell inside a labeled interval");

  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      if (!ds.samples[i].ambiguous && class_index(ds.samples[i].label) == c) members.push_back(i);
    }
    std::mt19937_64 rng(split_seed * 0x9E3779B97F4A7C15ull + c + 1);
    std::shuffle(members.begin(), members.end(), rng);
    const auto counts = stratified_counts(members.size(), test_fraction);
    for (std::size_t k = 0; k < members.size(); ++k) {
      Split s = Split::Train;
      if (k < counts.test) {
        s = Split::Test;
      } else if (k < counts.test + counts.val) {
        s = Split::Val;
      }
      ds.samples[members[k]].split = s;
    }
  }

  ds.manifest.counts = count_samples(ds.samples);
  for (auto c : kAllClasses) {
    if (ds.manifest.counts[static_cast<std::size_t>(Split::Train)][class_index(c)] == 0) {
      throw Error(ErrorKind::MissingClass,
                  "no training frames for class " + std::string(class_name(c)));
    }
  }
  return ds;
}

void validate_dataset(const LabeledDataset& ds) {
  const auto& cfg = ds.manifest.config;
  try {
    validate_config(cfg);
  } catch (const Error& e) {
    corrupt(std::string("bad spectral config: ") + e.what());
  }
  if (!(ds.manifest.test_fraction >= 0.0 && ds.manifest.test_fraction < 1.0)) {
    corrupt("test_fraction out of range");
  }
  std::unordered_map<std::string, bool> sources;
  for (const auto& s : ds.manifest.sources) {
    if (s.id.empty() || s.id.find_first_of("|\n") != std::string::npos) corrupt("bad source id");
    if (s.origin.find('\n') != std::string::npos) corrupt("bad source origin");
    if (!sources.emplace(s.id, s.ambiguous).second) corrupt("duplicate source id " + s.id);
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (!frame_is_valid(s.frame, cfg.n_lines, cfg.crop_db)) {
      corrupt("sample " + std::to_string(i) + " violates the frame invariants");
    }
    if (class_index(s.label) >= kNumClasses) corrupt("bad label");
    if (static_cast<std::size_t>(s.split) >= kNumSplits) corrupt("bad split");
    if (s.ambiguous != (s.split == Split::Test2Ambiguous)) {
      corrupt("sample " + std::to_string(i) + ": ambiguous samples belong to test2 only");
    }
    const auto it = sources.find(s.source_id);
    if (it == sources.end()) corrupt("sample " + std::to_string(i) + " has unknown source");
    if (it->second != s.ambiguous) corrupt("sample ambiguity disagrees with its source");
  }
  if (count_samples(ds.samples) != ds.manifest.counts) corrupt("manifest counts do not match samples");
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir) {
  validate_dataset(ds);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string());

  const auto& m = ds.manifest;
  std::string text;
  text += "# chatter dataset manifest\n";
  text += "version=" + std::to_string(kDatasetVersion) + "\n";
  text += "n_lines=" + std::to_string(m.config.n_lines) + "\n";
  text += "hop_s=" + format_double(m.config.hop_s) + "\n";
  text += "window_s=" + format_double(m.config.window_s) + "\n";
  text += "f_min_hz=" + format_double(m.config.f_min_hz) + "\n";
  text += "f_max_hz=" + format_double(m.config.f_max_hz) + "\n";
  text += "crop_db=" + format_double(m.config.crop_db) + "\n";
  text += "window=" + std::string(window_name(m.config.window)) + "\n";
  text += "split_seed=" + std::to_string(m.split_seed) + "\n";
  text += "test_fraction=" + format_double(m.test_fraction) + "\n";
  text += "samples=" + std::to_string(ds.samples.size()) + "\n";
  text += "dropped_frames=" + std::to_string(m.dropped_frames()) + "\n";
  for (auto s : kAllSplits) {
    for (auto c : kAllClasses) {
      text += "count." + std::string(split_name(s)) + "." + std::string(class_name(c)) + "=" +
              std::to_string(m.counts[static_cast<std::size_t>(s)][class_index(c)]) + "\n";
    }
  }
  for (const auto& src : m.sources) {
    text += "source=" + src.id + "|" + (src.ambiguous ? "1" : "0") + "|" +
            std::to_string(src.frames_kept) + "|" + std::to_string(src.frames_dropped) + "|" +
            src.origin + "\n";
  }

  std::unordered_map<std::string, std::uint32_t> source_index;
  for (std::size_t i = 0; i < m.sources.size(); ++i) {
    source_index[m.sources[i].id] = static_cast<std::uint32_t>(i);
  }

  const std::size_t n_lines = m.config.n_lines;
  std::string bin;
  bin.reserve(kDatasetHeaderBytes + ds.samples.size() * (kDatasetRecordOverheadBytes + 4 * n_lines));
  bin.append(kMagic, 4);
  put_u32(bin, kDatasetVersion);
  put_u32(bin, static_cast<std::uint32_t>(n_lines));
  put_u64(bin, ds.samples.size());
  for (auto s : kAllSplits) {
    for (auto c : kAllClasses) {
      put_u32(bin, static_cast<std::uint32_t>(m.counts[static_cast<std::size_t>(s)][class_index(c)]));
    }
  }
  for (const auto& s : ds.samples) {
    bin.push_back(static_cast<char>(class_index(s.label)));
    bin.push_back(static_cast<char>(s.split));
    bin.push_back(static_cast<char>(s.ambiguous ? 1 : 0));
    bin.push_back('\0');
    put_u32(bin, source_index.at(s.source_id));
    put_u32(bin, static_cast<std::uint32_t>(s.frame.frame_index));
    put_u64(bin, std::bit_cast<std::uint64_t>(s.frame.t_start_s));
    for (double v : s.frame.lines) put_u32(bin, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }

  std::ofstream mf(dir / "manifest", std::ios::trunc);
  if (!mf) throw Error(ErrorKind::IoFailure, "cannot write manifest");
  mf << text;
  std::ofstream bf(dir / "frames.bin", std::ios::binary | std::ios::trunc);
  if (!bf) throw Error(ErrorKind::IoFailure, "cannot write frames.bin");
  bf.write(bin.data(), static_cast<std::streamsize>(bin.size()));
  if (!mf || !bf) throw Error(ErrorKind::IoFailure, "dataset write failed");
}

LabeledDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest");
  if (!mf) throw Error(ErrorKind::IoFailure, "cannot open " + (dir / "manifest").string());

  LabeledDataset ds;
  auto& m = ds.manifest;
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(mf, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) corrupt("bad manifest line '" + line + "'");
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    if (key == "source") {
      std::vector<std::string> parts;
      std::size_t start = 0;
      for (int i = 0; i < 4; ++i) {
        const auto bar = value.find('|', start);
        if (bar == std::string::npos) corrupt("bad source record '" + value + "'");
        parts.push_back(value.substr(start, bar - start));
        start = bar + 1;
      }
      parts.push_back(value.substr(start));
      if (parts[1] != "0" && parts[1] != "1") corrupt("bad ambiguous flag");
      m.sources.push_back({parts[0], parts[4], parts[1] == "1",
                           parse_number<std::size_t>(parts[2]), parse_number<std::size_t>(parts[3])});
    } else {
      kv[key] = value;
    }
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) corrupt("manifest missing " + key);
    return it->second;
  };
  if (parse_number<std::uint32_t>(get("version")) != kDatasetVersion) corrupt("unsupported manifest version");
  m.config.n_lines = parse_number<std::size_t>(get("n_lines"));
  m.config.hop_s = parse_number<double>(get("hop_s"));
  m.config.window_s = parse_number<double>(get("window_s"));
  m.config.f_min_hz = parse_number<double>(get("f_min_hz"));
  m.config.f_max_hz = parse_number<double>(get("f_max_hz"));
  m.config.crop_db = parse_number<double>(get("crop_db"));
  const auto& window = get("window");
  if (window == "hann") {
    m.config.window = WindowFunction::Hann;
  } else if (window == "rectangular") {
    m.config.window = WindowFunction::Rectangular;
  } else {
    corrupt("unknown window '" + window + "'");
  }
  m.split_seed = parse_number<std::uint64_t>(get("split_seed"));
  m.test_fraction = parse_number<double>(get("test_fraction"));
  for (auto s : kAllSplits) {
    for (auto c : kAllClasses) {
      m.counts[static_cast<std::size_t>(s)][class_index(c)] = parse_number<std::size_t>(
          get("count." + std::string(split_name(s)) + "." + std::string(class_name(c))));
    }
  }

  std::ifstream bf(dir / "frames.bin", std::ios::binary);
  if (!bf) throw Error(ErrorKind::IoFailure, "cannot open " + (dir / "frames.bin").string());
  std::string bytes((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < kDatasetHeaderBytes) corrupt("frames.bin shorter than its header");
  if (std::memcmp(p, kMagic, 4) != 0) corrupt("bad magic");
  if (get_u32(p + 4) != kDatasetVersion) corrupt("unsupported frames.bin version");
  const std::size_t n_lines = get_u32(p + 8);
  if (n_lines != m.config.n_lines) corrupt("n_lines disagrees with manifest");
  const std::uint64_t n_records = get_u64(p + 12);
  const std::size_t record_bytes = kDatasetRecordOverheadBytes + 4 * n_lines;
  if (n_records != parse_number<std::uint64_t>(get("samples"))) corrupt("record count disagrees with manifest");
  if (n_records > (bytes.size() - kDatasetHeaderBytes) / record_bytes ||
      bytes.size() != kDatasetHeaderBytes + n_records * record_bytes) {
    corrupt("frames.bin size does not match its header");
  }
  std::size_t off = 20;
  for (auto s : kAllSplits) {
    for (auto c : kAllClasses) {
      if (get_u32(p + off) != m.counts[static_cast<std::size_t>(s)][class_index(c)]) {
        corrupt("frames.bin counts disagree with manifest");
      }
      off += 4;
    }
  }

  ds.samples.resize(n_records);
  for (auto& s : ds.samples) {
    const unsigned char* r = p + off;
    const auto label = class_from_index(r[0]);
    if (!label || r[1] >= kNumSplits || r[2] > 1) corrupt("bad record flags");
    s.label = *label;
    s.split = static_cast<Split>(r[1]);
    s.ambiguous = r[2] == 1;
    const std::uint32_t src = get_u32(r + 4);
    if (src >= m.sources.size()) corrupt("record source index out of range");
    s.source_id = m.sources[src].id;
    s.frame.frame_index = get_u32(r + 8);
    s.frame.t_start_s = std::bit_cast<double>(get_u64(r + 12));
    s.frame.lines.resize(n_lines);
    for (std::size_t j = 0; j < n_lines; ++j) {
      s.frame.lines[j] = static_cast<double>(std::bit_cast<float>(get_u32(r + 20 + 4 * j)));
    }
    off += record_bytes;
  }
  validate_dataset(ds);
  return ds;
}

}  // namespace chatter
