#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "chatter/model.hpp"
#include "chatter/spectral.hpp"

namespace chatter::cli {

struct SynthOptions {
  std::filesystem::path out;
  std::size_t per_class = 10;
  double ambiguous_fraction = 0.1;
  std::vector<double> rpm = {1800.0, 3000.0};
  std::uint64_t seed = 0;
  double duration_s = 0.5;
  std::uint32_t teeth = 4;
};

struct ExtractOptions {
  std::filesystem::path in;
  std::filesystem::path out;
  SpectralConfig config;
  std::uint64_t seed = 0;
  double test_fraction = 0.3;
};

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path out;
  Hyperparameters hp;
};

struct EvalOptions {
  std::filesystem::path model;
  std::filesystem::path data;
  std::string split = "test";
  std::filesystem::path out;
};

struct PredictOptions {
  std::filesystem::path model;
  std::filesystem::path wav;
  std::filesystem::path emit_frames;  // empty: no PGM output
};

struct CommandLine {
  std::string subcommand;  // synth | extract | train | eval | predict
  int verbosity = 0;
  SynthOptions synth;
  ExtractOptions extract;
  TrainOptions train;
  EvalOptions eval;
  PredictOptions predict;
};

/// Bad flags, missing required flags or out-of-range values.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses argv (argv[0] is the program name). `--config FILE` supplies
/// key=value defaults for the chosen subcommand; explicit flags win.
/// Throws UsageError.
CommandLine parse_command_line(const std::vector<std::string>& args);

/// Training log path written next to the model file.
std::filesystem::path training_log_path(const std::filesystem::path& model_path);

/// Executes a parsed command. Pipeline failures surface as chatter::Error.
void execute(const CommandLine& cmd, std::ostream& out, std::ostream& err);

/// 0 success, 1 usage error, 2 data or model error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace chatter::cli
