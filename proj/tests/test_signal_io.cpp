#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>

#include "chatter/error.hpp"
#include "chatter/signal_io.hpp"
#include "test_util.hpp"

namespace chatter {
namespace {

using testing::TempDir;

template <class Fn>
ErrorKind error_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no chatter::Error thrown";
  return ErrorKind::InvalidArgument;
}

// Minimal WAV writer for formats save_wav does not produce.
std::string wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                      std::uint16_t bits, const std::string& payload) {
  auto u16 = [](std::uint16_t v) { return std::string{static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)}; };
  auto u32 = [](std::uint32_t v) {
    std::string s(4, '\0');
    for (int i = 0; i < 4; ++i) s[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    return s;
  };
  std::string fmt = u16(format) + u16(channels) + u32(rate) + u32(rate * channels * bits / 8) +
                    u16(static_cast<std::uint16_t>(channels * bits / 8)) + u16(bits);
  std::string body = "WAVE" + std::string("fmt ") + u32(16) + fmt + "data" +
                     u32(static_cast<std::uint32_t>(payload.size())) + payload;
  return "RIFF" + u32(static_cast<std::uint32_t>(body.size())) + body;
}

TEST(Wav, SilenceRoundTrip) {
  TempDir dir;
  TimeSignal s{std::vector<double>(22050, 0.0), 22050.0};
  save_wav(s, dir / "zeros.wav");
  const auto bytes = testing::read_bytes(dir / "zeros.wav");
  EXPECT_EQ(bytes.size(), 44u + 2u * 22050u);
  EXPECT_TRUE(std::all_of(bytes.begin() + 44, bytes.end(), [](char c) { return c == 0; }));

  const auto back = load_wav(dir / "zeros.wav");
  EXPECT_EQ(back.sample_rate_hz, 22050.0);
  ASSERT_EQ(back.samples.size(), 22050u);
  EXPECT_TRUE(std::all_of(back.samples.begin(), back.samples.end(), [](double x) { return x == 0.0; }));
}

TEST(Wav, SineRoundTripWithinQuantization) {
  TempDir dir;
  for (double amplitude : {0.5, 1.0}) {
    const auto s = testing::sine(1000.0, amplitude, 1.0);
    save_wav(s, dir / "sine.wav");
    const auto back = load_wav(dir / "sine.wav");
    ASSERT_EQ(back.samples.size(), s.samples.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < s.samples.size(); ++i) worst = std::max(worst, std::abs(back.samples[i] - s.samples[i]));
    EXPECT_LE(worst, 1.0 / 32768.0) << "amplitude " << amplitude;
  }
}

TEST(Wav, RandomRoundTripProperty) {
  TempDir dir;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    TimeSignal s;
    s.sample_rate_hz = 5000.0 + 1000.0 * trial;
    s.samples.resize(1 + rng() % 4000);
    for (auto& x : s.samples) x = u(rng);
    if (trial % 5 == 0) s.samples[0] = 1.0;
    if (trial % 7 == 0) s.samples.back() = -1.0;
    save_wav(s, dir / "r.wav");
    const auto back = load_wav(dir / "r.wav");
    ASSERT_EQ(back.samples.size(), s.samples.size());
    EXPECT_EQ(back.sample_rate_hz, s.sample_rate_hz);
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
      ASSERT_LE(std::abs(back.samples[i] - s.samples[i]), std::ldexp(1.0, -15));
    }
  }
}

TEST(Wav, RejectsLowRate) {
  TempDir dir;
  TimeSignal s{std::vector<double>(4000, 0.1), 4000.0};
  save_wav(s, dir / "slow.wav");
  EXPECT_EQ(error_of([&] { load_wav(dir / "slow.wav"); }), ErrorKind::SampleRateTooLow);
}

TEST(Wav, RejectsOutOfRangeSamples) {
  TempDir dir;
  TimeSignal s{{0.0, 1.5, 0.0}, 22050.0};
  EXPECT_EQ(error_of([&] { save_wav(s, dir / "loud.wav"); }), ErrorKind::AmplitudeOutOfRange);
  EXPECT_FALSE(std::filesystem::exists(dir / "loud.wav"));
}

TEST(Wav, ReadsFloat32AndFirstChannel) {
  TempDir dir;
  std::string payload;
  const float frames[3][2] = {{0.25f, -0.75f}, {-0.5f, 0.1f}, {1.0f, 0.0f}};
  for (const auto& f : frames) {
    for (float v : f) {
      char b[4];
      std::memcpy(b, &v, 4);
      payload.append(b, 4);
    }
  }
  testing::write_text(dir / "f32.wav", wav_bytes(3, 2, 48000, 32, payload));
  const auto s = load_wav(dir / "f32.wav");
  EXPECT_EQ(s.sample_rate_hz, 48000.0);
  EXPECT_EQ(s.samples, (std::vector<double>{0.25, -0.5, 1.0}));
}

TEST(Wav, ErrorKinds) {
  TempDir dir;
  testing::write_text(dir / "junk.wav", "definitely not a wave file");
  EXPECT_EQ(error_of([&] { load_wav(dir / "junk.wav"); }), ErrorKind::MalformedContainer);

  testing::write_text(dir / "pcm24.wav", wav_bytes(1, 1, 22050, 24, std::string(9, '\0')));
  EXPECT_EQ(error_of([&] { load_wav(dir / "pcm24.wav"); }), ErrorKind::UnsupportedEncoding);

  testing::write_text(dir / "alaw.wav", wav_bytes(6, 1, 22050, 8, std::string(4, '\0')));
  EXPECT_EQ(error_of([&] { load_wav(dir / "alaw.wav"); }), ErrorKind::UnsupportedEncoding);

  EXPECT_EQ(error_of([&] { load_wav(dir / "missing.wav"); }), ErrorKind::IoFailure);
}

TEST(Labels, SingleInterval) {
  TempDir dir;
  testing::write_text(dir / "l.csv", "0.0,2.0,chatter\n");
  const auto t = load_labels(dir / "l.csv");
  ASSERT_EQ(t.intervals.size(), 1u);
  EXPECT_EQ(t.intervals[0], (LabelInterval{0.0, 2.0, MachiningClass::Chatter}));
}

TEST(Labels, OverlapRejected) {
  TempDir dir;
  testing::write_text(dir / "l.csv", "0,1,machining\n0.5,2,chatter\n");
  EXPECT_EQ(error_of([&] { load_labels(dir / "l.csv"); }), ErrorKind::OverlappingIntervals);
}

TEST(Labels, SortedOnLoadWithCommentsAndCase) {
  TempDir dir;
  testing::write_text(dir / "l.csv",
                      "# expert labels\n5,6,Rotation\n\n0,1,MACHINING\n  2.5 , 3 , chatter \n");
  const auto t = load_labels(dir / "l.csv");
  // Oracle: the same records sorted by start time.
  std::vector<LabelInterval> expected = {{5, 6, MachiningClass::RotationNoMachining},
                                         {0, 1, MachiningClass::MachiningNoChatter},
                                         {2.5, 3, MachiningClass::Chatter}};
  std::sort(expected.begin(), expected.end(), [](auto& a, auto& b) { return a.start_s < b.start_s; });
  EXPECT_EQ(t.intervals, expected);
}

TEST(Labels, Errors) {
  TempDir dir;
  testing::write_text(dir / "a.csv", "0,1\n");
  EXPECT_EQ(error_of([&] { load_labels(dir / "a.csv"); }), ErrorKind::ParseError);
  testing::write_text(dir / "b.csv", "0,abc,chatter\n");
  EXPECT_EQ(error_of([&] { load_labels(dir / "b.csv"); }), ErrorKind::ParseError);
  testing::write_text(dir / "c.csv", "0,1,drilling\n");
  EXPECT_EQ(error_of([&] { load_labels(dir / "c.csv"); }), ErrorKind::UnknownLabel);
  testing::write_text(dir / "d.csv", "# nothing here\n");
  EXPECT_EQ(error_of([&] { load_labels(dir / "d.csv"); }), ErrorKind::EmptyTrack);
  testing::write_text(dir / "e.csv", "2,1,chatter\n");
  EXPECT_EQ(error_of([&] { load_labels(dir / "e.csv"); }), ErrorKind::ParseError);
}

TEST(Labels, AdjacentIntervalsAndGapsAreLegal) {
  TempDir dir;
  LabelTrack t{{{0, 1, MachiningClass::Chatter},
                {1, 2, MachiningClass::MachiningNoChatter},
                {3.25, 4, MachiningClass::RotationNoMachining}}};
  save_labels(t, dir / "t.csv");
  EXPECT_EQ(load_labels(dir / "t.csv"), t);
}

TEST(Classes, StableEncoding) {
  EXPECT_EQ(class_index(MachiningClass::Chatter), 0u);
  EXPECT_EQ(class_index(MachiningClass::MachiningNoChatter), 1u);
  EXPECT_EQ(class_index(MachiningClass::RotationNoMachining), 2u);
  EXPECT_FALSE(class_from_index(3).has_value());
}

}  // namespace
}  // namespace chatter
