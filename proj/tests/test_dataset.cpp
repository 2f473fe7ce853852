#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "chatter/dataset.hpp"
#include "chatter/error.hpp"
#include "test_util.hpp"

namespace chatter {
namespace {

using testing::TempDir;

SourceRecording noise_recording(const std::string& id, double seconds, double rate,
                                std::vector<LabelInterval> intervals, bool ambiguous,
                                std::uint64_t seed) {
  SourceRecording r;
  r.id = id;
  r.origin = "test:" + id;
  r.signal.sample_rate_hz = rate;
  r.signal.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& x : r.signal.samples) x = g(rng);
  r.labels.intervals = std::move(intervals);
  r.ambiguous = ambiguous;
  return r;
}

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

// Per-class counts of n frames: floor(tf * n) test, val = 30 % of the
// remainder rounded to nearest, train = what is left.
std::array<std::size_t, 3> expected_counts(std::size_t n, double tf) {
  const auto test = static_cast<std::size_t>(std::floor(tf * static_cast<double>(n)));
  const std::size_t rest = n - test;
  const auto val = static_cast<std::size_t>(std::floor(0.3 * static_cast<double>(rest) + 0.5));
  return {rest - val, val, test};
}

// Three small recordings covering every class plus one ambiguous recording.
std::vector<SourceRecording> small_corpus() {
  std::vector<SourceRecording> recs;
  recs.push_back(noise_recording("a", 2.0, 22050, {{0, 2.0, MachiningClass::Chatter}}, false, 1));
  recs.push_back(noise_recording("b", 2.0, 22050,
                                 {{0, 1.05, MachiningClass::MachiningNoChatter},
                                  {1.05, 2.0, MachiningClass::RotationNoMachining}},
                                 false, 2));
  recs.push_back(noise_recording("c", 1.0, 22050, {{0, 1.0, MachiningClass::RotationNoMachining}}, false, 3));
  recs.push_back(noise_recording("d", 0.5, 22050, {{0, 0.5, MachiningClass::Chatter}}, true, 4));
  return recs;
}

TEST(Build, OneSecondChatterSplitsSevenThree) {
  std::vector<SourceRecording> recs;
  recs.push_back(noise_recording("c", 1.0, 22050, {{0, 1.0, MachiningClass::Chatter}}, false, 1));
  recs.push_back(noise_recording("m", 0.1, 22050, {{0, 0.1, MachiningClass::MachiningNoChatter}}, false, 2));
  recs.push_back(noise_recording("r", 0.1, 22050, {{0, 0.1, MachiningClass::RotationNoMachining}}, false, 3));
  // The 7/3 split of 10 frames is checked on the chatter class; the other
  // classes hold one frame each, which stays in Train.
  const auto ds = build_dataset(recs, {}, 1, 0.0);
  const auto train = class_distribution(ds, Split::Train);
  const auto val = class_distribution(ds, Split::Val);
  EXPECT_EQ(train[0], 7u);
  EXPECT_EQ(val[0], 3u);
  EXPECT_EQ(class_distribution(ds, Split::Test), (ClassCounts{0, 0, 0}));
  EXPECT_EQ(class_distribution(ds, Split::Test2Ambiguous), (ClassCounts{0, 0, 0}));
  EXPECT_EQ(ds.samples.size(), 12u);
}

TEST(Build, StraddlingFramesDropped) {
  // Boundary at 0.55 s cuts frame 5 ([0.5, 0.6)).
  std::vector<SourceRecording> recs;
  recs.push_back(noise_recording("s", 1.0, 22050,
                                 {{0, 0.55, MachiningClass::Chatter},
                                  {0.55, 0.8, MachiningClass::MachiningNoChatter},
                                  {0.9, 1.0, MachiningClass::RotationNoMachining}},
                                 false, 7));
  const auto ds = build_dataset(recs, {}, 1, 0.0);
  std::map<std::size_t, MachiningClass> by_frame;
  for (const auto& s : ds.samples) by_frame[s.frame.frame_index] = s.label;
  // Frames 0-4 chatter, 5 straddles, 6-7 machining, 8 sits in the gap, 9 rotation.
  const std::map<std::size_t, MachiningClass> expected = {
      {0, MachiningClass::Chatter},         {1, MachiningClass::Chatter},
      {2, MachiningClass::Chatter},         {3, MachiningClass::Chatter},
      {4, MachiningClass::Chatter},         {6, MachiningClass::MachiningNoChatter},
      {7, MachiningClass::MachiningNoChatter}, {9, MachiningClass::RotationNoMachining}};
  EXPECT_EQ(by_frame, expected);
  ASSERT_EQ(ds.manifest.sources.size(), 1u);
  EXPECT_EQ(ds.manifest.sources[0].frames_kept, 8u);
  EXPECT_EQ(ds.manifest.sources[0].frames_dropped, 2u);
  EXPECT_EQ(ds.manifest.dropped_frames(), 2u);
}

TEST(Build, AmbiguousSamplesGoToSecondTest) {
  const auto ds = build_dataset(small_corpus(), {}, 3, 0.3);
  for (const auto& s : ds.samples) {
    EXPECT_EQ(s.ambiguous, s.split == Split::Test2Ambiguous);
    EXPECT_EQ(s.ambiguous, s.source_id == "d");
  }
  EXPECT_EQ(class_distribution(ds, Split::Test2Ambiguous), (ClassCounts{5, 0, 0}));
}

TEST(Build, StratifiedCountsFollowRule) {
  for (std::size_t n = 0; n < 400; ++n) {
    for (double tf : {0.0, 0.1, 0.3, 0.5, 0.9}) {
      const auto c = stratified_counts(n, tf);
      const auto e = expected_counts(n, tf);
      ASSERT_EQ(c.train, e[0]) << n << " " << tf;
      ASSERT_EQ(c.val, e[1]) << n << " " << tf;
      ASSERT_EQ(c.test, e[2]) << n << " " << tf;
      // Train:Val within one sample of 70:30.
      const double rest = static_cast<double>(c.train + c.val);
      EXPECT_LE(std::abs(static_cast<double>(c.val) - 0.3 * rest), 1.0);
      EXPECT_LE(std::abs(static_cast<double>(c.train) - 0.7 * rest), 1.0);
    }
  }
}

TEST(Build, TableOneReplica) {
  // One recording at 5 kHz whose labeled intervals hold 3087, 5513 and 1580
  // whole frames: the train+val totals per class of the published table.
  std::vector<SourceRecording> recs;
  recs.push_back(noise_recording("long", 1018.0, 5000.0,
                                 {{0.0, 308.7, MachiningClass::Chatter},
                                  {308.7, 860.0, MachiningClass::MachiningNoChatter},
                                  {860.0, 1018.0, MachiningClass::RotationNoMachining}},
                                 false, 12));
  const auto ds = build_dataset(recs, {}, 2022, 0.0);
  ASSERT_EQ(ds.samples.size(), 10180u);
  const auto train = class_distribution(ds, Split::Train);
  const auto val = class_distribution(ds, Split::Val);
  const std::array<std::size_t, 3> totals = {3087, 5513, 1580};
  for (std::size_t c = 0; c < 3; ++c) {
    const auto e = expected_counts(totals[c], 0.0);
    EXPECT_EQ(train[c], e[0]);
    EXPECT_EQ(val[c], e[1]);
  }
  EXPECT_EQ(train, (ClassCounts{2161, 3859, 1106}));
  EXPECT_EQ(val, (ClassCounts{926, 1654, 474}));
  EXPECT_EQ(train[0] + train[1] + train[2], 7126u);
  EXPECT_EQ(val[0] + val[1] + val[2], 3054u);

  TempDir dir;
  save_dataset(ds, dir.path());
  EXPECT_EQ(std::filesystem::file_size(dir / "frames.bin"), 68u + 10180u * (1024u * 4u + 20u));
  EXPECT_EQ(load_dataset(dir.path()), ds);
}

TEST(Build, SplitsAreDisjointAndCoverEverything) {
  const auto ds = build_dataset(small_corpus(), {}, 5, 0.3);
  std::set<std::pair<std::string, std::size_t>> seen;
  for (const auto& s : ds.samples) {
    EXPECT_TRUE(seen.insert({s.source_id, s.frame.frame_index}).second);
  }
  std::size_t total = 0;
  for (Split sp : kAllSplits) {
    const auto d = class_distribution(ds, sp);
    total += d[0] + d[1] + d[2];
  }
  EXPECT_EQ(total, ds.samples.size());
  EXPECT_EQ(count_samples(ds.samples), ds.manifest.counts);
}

TEST(Build, DeterministicAndSeedSensitive) {
  const auto recs = small_corpus();
  const auto a = build_dataset(recs, {}, 5, 0.3);
  const auto b = build_dataset(recs, {}, 5, 0.3);
  EXPECT_EQ(a, b);
  const auto c = build_dataset(recs, {}, 6, 0.3);
  std::vector<Split> sa, sc;
  for (const auto& s : a.samples) sa.push_back(s.split);
  for (const auto& s : c.samples) sc.push_back(s.split);
  EXPECT_NE(sa, sc);
  EXPECT_EQ(a.manifest.counts, c.manifest.counts);
}

TEST(Build, LinesStoredAtSinglePrecision) {
  const auto ds = build_dataset(small_corpus(), {}, 5, 0.3);
  for (const auto& s : ds.samples) {
    for (double v : s.frame.lines) ASSERT_EQ(v, static_cast<double>(static_cast<float>(v)));
  }
}

TEST(Build, Errors) {
  std::vector<SourceRecording> none;
  EXPECT_EQ(error_of([&] { build_dataset(none, {}, 1, 0.0); }), ErrorKind::EmptyDataset);

  std::vector<SourceRecording> unlabeled;
  unlabeled.push_back(noise_recording("u", 1.0, 22050, {{0.0, 0.05, MachiningClass::Chatter}}, false, 1));
  EXPECT_EQ(error_of([&] { build_dataset(unlabeled, {}, 1, 0.0); }), ErrorKind::EmptyDataset);

  std::vector<SourceRecording> two_classes;
  two_classes.push_back(noise_recording("a", 1.0, 22050, {{0, 1, MachiningClass::Chatter}}, false, 1));
  two_classes.push_back(noise_recording("b", 1.0, 22050, {{0, 1, MachiningClass::MachiningNoChatter}}, false, 2));
  EXPECT_EQ(error_of([&] { build_dataset(two_classes, {}, 1, 0.0); }), ErrorKind::MissingClass);

  EXPECT_EQ(error_of([&] { build_dataset(small_corpus(), {}, 1, 1.0); }), ErrorKind::InvalidArgument);
}

TEST(Persistence, RoundTripIsExact) {
  TempDir dir;
  SpectralConfig cfg;
  cfg.n_lines = 256;
  cfg.crop_db = 30.0;
  const auto ds = build_dataset(small_corpus(), cfg, 77, 0.25);
  save_dataset(ds, dir.path());
  const auto back = load_dataset(dir.path());
  EXPECT_EQ(back, ds);
  EXPECT_EQ(std::filesystem::file_size(dir / "frames.bin"),
            68u + ds.samples.size() * (256u * 4u + 20u));

  TempDir again;
  save_dataset(back, again.path());
  EXPECT_EQ(testing::read_bytes(dir / "frames.bin"), testing::read_bytes(again / "frames.bin"));
  EXPECT_EQ(testing::read_bytes(dir / "manifest"), testing::read_bytes(again / "manifest"));
}

TEST(Persistence, CorruptFilesRejected) {
  TempDir dir;
  const auto ds = build_dataset(small_corpus(), {}, 77, 0.25);
  save_dataset(ds, dir.path());
  const auto original = testing::read_bytes(dir / "frames.bin");

  testing::write_text(dir / "frames.bin", original.substr(0, original.size() - 100));
  EXPECT_EQ(error_of([&] { load_dataset(dir.path()); }), ErrorKind::CorruptDataset);

  std::string bad_magic = original;
  bad_magic[0] = 'X';
  testing::write_text(dir / "frames.bin", bad_magic);
  EXPECT_EQ(error_of([&] { load_dataset(dir.path()); }), ErrorKind::CorruptDataset);

  std::string bad_version = original;
  bad_version[4] = 2;
  testing::write_text(dir / "frames.bin", bad_version);
  EXPECT_EQ(error_of([&] { load_dataset(dir.path()); }), ErrorKind::CorruptDataset);

  // A line value above 0 dB breaks the frame invariant.
  std::string bad_line = original;
  const float positive = 3.0f;
  std::memcpy(bad_line.data() + 68 + 20, &positive, 4);
  testing::write_text(dir / "frames.bin", bad_line);
  EXPECT_EQ(error_of([&] { load_dataset(dir.path()); }), ErrorKind::CorruptDataset);

  std::filesystem::remove(dir / "frames.bin");
  EXPECT_EQ(error_of([&] { load_dataset(dir.path()); }), ErrorKind::IoFailure);
}

TEST(Distribution, EmptySplitIsZero) {
  const auto ds = build_dataset(small_corpus(), {}, 1, 0.0);
  EXPECT_EQ(class_distribution(ds, Split::Test), (ClassCounts{0, 0, 0}));
}

TEST(Splits, NamesRoundTrip) {
  for (Split s : kAllSplits) EXPECT_EQ(parse_split(split_name(s)), s);
  EXPECT_FALSE(parse_split("holdout").has_value());
}

}  // namespace
}  // namespace chatter
