#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <set>
#include <sstream>

#include "chatter/cli.hpp"
#include "chatter/dataset.hpp"
#include "chatter/model.hpp"
#include "test_util.hpp"

namespace chatter {
namespace {

using testing::TempDir;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "chatter");
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

// Relative paths of every regular file below `root`.
std::set<std::string> tree(const std::filesystem::path& root) {
  std::set<std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.insert(std::filesystem::relative(e.path(), root).string());
  }
  return files;
}

TEST(Defaults, MatchPublishedValues) {
  const cli::CommandLine train = cli::parse_command_line({"chatter", "train", "--data", "d", "--out", "m"});
  EXPECT_EQ(train.train.hp.batch_size, 2u);
  EXPECT_EQ(train.train.hp.learning_rate, 0.0001);
  EXPECT_EQ(train.train.hp.epochs, 30u);
  EXPECT_EQ(train.train.hp.dropout_rate, 0.3);
  EXPECT_EQ(train.train.hp, Hyperparameters{});

  const cli::CommandLine extract = cli::parse_command_line({"chatter", "extract", "--in", "c", "--out", "d"});
  const auto& cfg = extract.extract.config;
  EXPECT_EQ(cfg.hop_s, 0.1);
  EXPECT_EQ(cfg.window_s, 0.1);
  EXPECT_EQ(cfg.n_lines, 1024u);
  EXPECT_EQ(cfg.f_min_hz, 0.0);
  EXPECT_EQ(cfg.f_max_hz, 2500.0);
  EXPECT_EQ(cfg.crop_db, 20.0);
  EXPECT_EQ(cfg.window, WindowFunction::Hann);
  EXPECT_EQ(extract.extract.test_fraction, 0.3);
  EXPECT_EQ(cfg, SpectralConfig{});

  const auto model = build_model(0);
  for (const auto& l : model.layers) {
    if (l.kind == LayerKind::Dropout) EXPECT_FLOAT_EQ(l.rate, 0.3f);
  }
}

TEST(Parsing, FlagsAndConfigFile) {
  TempDir dir;
  testing::write_text(dir / "run.cfg", "# training overrides\nepochs = 5\nlr=0.01\nbatch=8\n");
  const auto cmd = cli::parse_command_line(
      {"chatter", "--config", (dir / "run.cfg").string(), "train", "--data", "d", "--out", "m", "--batch", "4"});
  EXPECT_EQ(cmd.subcommand, "train");
  EXPECT_EQ(cmd.train.hp.epochs, 5u);
  EXPECT_EQ(cmd.train.hp.learning_rate, 0.01);
  EXPECT_EQ(cmd.train.hp.batch_size, 4u);

  const auto synth = cli::parse_command_line({"chatter", "synth", "--out", "x", "--rpm", "1200,2400,3600"});
  EXPECT_EQ(synth.synth.rpm, (std::vector<double>{1200, 2400, 3600}));
}

TEST(Parsing, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"launch"}).code, 1);
  EXPECT_EQ(run_cli({"train", "--data", "d"}).code, 1);
  const auto bad = run_cli({"train", "--data", "d", "--out", "m", "--batch", "0"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("--batch"), std::string::npos);
  EXPECT_EQ(run_cli({"synth", "--out", "x", "--bogus", "1"}).code, 1);
  EXPECT_EQ(run_cli({"--config", "/nonexistent/file", "synth", "--out", "x"}).code, 1);
}

TEST(Synth, SameSeedTwiceGivesIdenticalDirectories) {
  TempDir dir;
  ASSERT_EQ(run_cli({"synth", "--out", (dir / "a").string(), "--per-class", "1", "--seed", "7"}).code, 0);
  ASSERT_EQ(run_cli({"synth", "--out", (dir / "b").string(), "--per-class", "1", "--seed", "7"}).code, 0);
  const auto files = tree(dir / "a");
  EXPECT_EQ(files, tree(dir / "b"));
  EXPECT_EQ(files.size(), 7u);  // 3 wav, 3 csv, manifest
  for (const auto& f : files) EXPECT_EQ(testing::read_bytes(dir / "a" / f), testing::read_bytes(dir / "b" / f)) << f;
}

TEST(Extract, BandAboveNyquistExitsTwo) {
  TempDir dir;
  ASSERT_EQ(run_cli({"synth", "--out", (dir / "c").string(), "--per-class", "1"}).code, 0);
  const auto r = run_cli({"extract", "--in", (dir / "c").string(), "--out", (dir / "d").string(), "--fmax", "20000"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("BandExceedsNyquist"), std::string::npos) << r.err;
}

TEST(Binary, ExitCodes) {
  TempDir dir;
  const std::string cli = CHATTER_CLI_PATH;
  auto status = [](const std::string& command) {
    const int raw = std::system((command + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  EXPECT_EQ(status(cli + " --help"), 0);
  EXPECT_EQ(status(cli + " frobnicate"), 1);
  EXPECT_EQ(status(cli + " synth --out " + (dir / "c").string() + " --per-class 1"), 0);
  EXPECT_EQ(status(cli + " extract --in " + (dir / "c").string() + " --out " + (dir / "d").string() +
                   " --fmax 20000"),
            2);
  EXPECT_EQ(status(cli + " predict --model " + (dir / "none.chmd").string() + " --wav " +
                   (dir / "c" / "chatter_00000.wav").string()),
            2);
}

TEST(Pipeline, EndToEndStaysInsideOutputs) {
  TempDir dir;
  const auto corpus = dir / "corpus";
  const auto data = dir / "data";
  const auto model = dir / "model.chmd";
  const auto report = dir / "report";
  const auto frames = dir / "frames";

  ASSERT_EQ(run_cli({"synth", "--out", corpus.string(), "--per-class", "4", "--ambiguous-frac", "0.25",
                     "--seed", "3", "--duration", "0.5"})
                .code,
            0);
  auto before = tree(dir.path());
  for (const auto& f : before) EXPECT_EQ(f.rfind("corpus/", 0), 0u) << f;

  ASSERT_EQ(run_cli({"extract", "--in", corpus.string(), "--out", data.string(), "--seed", "1"}).code, 0);
  const auto ds = load_dataset(data);
  EXPECT_EQ(ds.manifest.sources.size(), 12u);
  EXPECT_EQ(ds.samples.size(), 12u * 5u);
  EXPECT_EQ(class_distribution(ds, Split::Test2Ambiguous), (ClassCounts{5, 5, 5}));

  const auto t = run_cli({"train", "--data", data.string(), "--out", model.string(), "--epochs", "2", "--seed", "5"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(std::filesystem::exists(model));
  const auto log = testing::read_bytes(cli::training_log_path(model));
  EXPECT_EQ(log.rfind("epoch,train_loss,train_acc,val_loss,val_acc\n", 0), 0u);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);

  for (const char* split : {"test", "test2"}) {
    const auto out = report / split;
    const auto e = run_cli({"eval", "--model", model.string(), "--data", data.string(), "--split", split,
                            "--out", out.string()});
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_TRUE(std::filesystem::exists(out / "confusion.csv"));
    EXPECT_TRUE(std::filesystem::exists(out / "metrics.csv"));
    EXPECT_TRUE(std::filesystem::exists(out / "summary.txt"));
  }

  const auto p = run_cli({"predict", "--model", model.string(), "--wav", (corpus / "chatter_00000.wav").string(),
                          "--emit-frames", frames.string()});
  ASSERT_EQ(p.code, 0) << p.err;
  std::istringstream lines(p.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "t_start,label,p_chatter,p_machining,p_rotation");
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4) << line;
  }
  EXPECT_EQ(rows, 5u);
  EXPECT_EQ(tree(frames).size(), 5u);

  // Everything written lives under one of the output targets.
  const std::set<std::string> roots = {"corpus", "data", "model.chmd", "model.chmd.log.csv", "report", "frames"};
  for (const auto& f : tree(dir.path())) {
    const auto top = f.substr(0, f.find('/'));
    EXPECT_TRUE(roots.count(top)) << f;
  }
}

TEST(Pipeline, EvalRejectsUnknownSplit) {
  EXPECT_EQ(run_cli({"eval", "--model", "m", "--data", "d", "--split", "holdout", "--out", "r"}).code, 1);
}

}  // namespace
}  // namespace chatter
