#include "chatter/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>

#include "chatter/dataset.hpp"
#include "chatter/error.hpp"
#include "chatter/evaluation.hpp"
#include "chatter/signal_io.hpp"
#include "chatter/synth.hpp"

namespace chatter::cli {

namespace {

class HelpRequested : public UsageError {
 public:
  using UsageError::UsageError;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("--config: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("--config: expected key=value, got '" + line + "'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

// Moves `--config FILE` out of the argument list and splices the file's
// entries in as flags right after the subcommand, unless given explicitly.
std::vector<std::string> apply_config(std::vector<std::string> args) {
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config: missing file name");
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (config_path.empty()) return args;

  const auto kv = read_config_file(config_path);
  std::size_t sub = 1;
  while (sub < args.size() && args[sub].rfind("-", 0) == 0) ++sub;
  if (sub >= args.size()) throw UsageError("--config needs a subcommand");
  std::vector<std::string> injected;
  for (const auto& [key, value] : kv) {
    const std::string flag = "--" + key;
    const bool explicit_flag = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (explicit_flag) continue;
    injected.push_back(flag);
    injected.push_back(value);
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub) + 1, injected.begin(), injected.end());
  return args;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

void validate(const CommandLine& cmd) {
  if (cmd.subcommand == "synth") {
    const auto& o = cmd.synth;
    require(o.per_class >= 1, "--per-class must be >= 1");
    require(o.ambiguous_fraction >= 0.0 && o.ambiguous_fraction <= 1.0, "--ambiguous-frac must be in [0, 1]");
    require(!o.rpm.empty(), "--rpm needs at least one value");
    for (double r : o.rpm) require(r > 0.0, "--rpm values must be positive");
    require(o.duration_s > 0.0, "--duration must be > 0");
    require(o.teeth >= 1, "--teeth must be >= 1");
  } else if (cmd.subcommand == "extract") {
    const auto& c = cmd.extract.config;
    require(c.hop_s > 0.0, "--hop must be > 0");
    require(c.window_s > 0.0, "--window must be > 0");
    require(c.n_lines >= 2, "--lines must be >= 2");
    require(c.f_max_hz > c.f_min_hz && c.f_min_hz >= 0.0, "--fmax must exceed --fmin");
    require(c.crop_db > 0.0, "--crop-db must be > 0");
    require(cmd.extract.test_fraction >= 0.0 && cmd.extract.test_fraction < 1.0,
            "--test-frac must be in [0, 1)");
  } else if (cmd.subcommand == "train") {
    const auto& hp = cmd.train.hp;
    require(hp.batch_size >= 1, "--batch must be >= 1");
    require(hp.learning_rate >= 0.0, "--lr must be >= 0");
    require(hp.dropout_rate >= 0.0 && hp.dropout_rate < 1.0, "--dropout must be in [0, 1)");
  } else if (cmd.subcommand == "eval") {
    require(cmd.eval.split == "test" || cmd.eval.split == "test2" || cmd.eval.split == "train" ||
                cmd.eval.split == "val",
            "--split must be test or test2");
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void run_synth(const SynthOptions& o, int verbosity, std::ostream& err) {
  CorpusOptions options;
  options.duration_s = o.duration_s;
  options.n_teeth = o.teeth;
  const auto corpus = generate_corpus(o.per_class, o.ambiguous_fraction, o.rpm, o.seed, options);
  write_corpus(corpus, o.out);
  if (verbosity > 0) err << "wrote " << corpus.size() << " signals to " << o.out.string() << '\n';
}

void run_extract(const ExtractOptions& o, int verbosity, std::ostream& err) {
  const auto index = read_corpus_index(o.in);
  if (index.empty()) throw Error(ErrorKind::EmptyDataset, "no recordings in " + o.in.string());
  std::vector<SourceRecording> recordings;
  recordings.reserve(index.size());
  for (const auto& e : index) {
    recordings.push_back({e.id, e.origin, load_wav(e.wav), load_labels(e.labels), e.ambiguous});
  }
  const auto ds = build_dataset(recordings, o.config, o.seed, o.test_fraction);
  save_dataset(ds, o.out);
  if (verbosity > 0) {
    err << "kept " << ds.samples.size() << " frames, dropped " << ds.manifest.dropped_frames() << '\n';
  }
}

void run_train(const TrainOptions& o, int verbosity, std::ostream& err) {
  const auto ds = load_dataset(o.data);
  auto model = build_model(o.hp.rng_seed, ds.manifest.config, o.hp.dropout_rate);
  model = train(std::move(model), ds, o.hp);
  save_model(model, o.out);
  save_training_log(model.training_log, training_log_path(o.out));
  if (verbosity > 0 && !model.training_log.empty()) {
    double best = 0.0;
    for (const auto& e : model.training_log) best = std::max(best, e.val_accuracy);
    err << "best validation accuracy " << best << '\n';
  }
}

void run_eval(const EvalOptions& o, std::ostream& out) {
  const auto model = load_model(o.model);
  const auto ds = load_dataset(o.data);
  if (ds.manifest.config != model.spectral) {
    throw Error(ErrorKind::InvalidArgument, "dataset spectral settings differ from the model's");
  }
  const Split split = *parse_split(o.split);
  std::vector<Sample> selected;
  std::vector<MachiningClass> labels;
  for (const auto& s : ds.samples) {
    if (s.split != split) continue;
    selected.push_back(s);
    labels.push_back(s.label);
  }
  if (selected.empty()) throw Error(ErrorKind::EmptyDataset, "split " + o.split + " is empty");
  const auto predictions = predict_batch(model, selected);
  const auto report = evaluate(predictions, labels, o.split, o.model.filename().string(), utc_timestamp());
  emit_report(report, o.out);
  out << "accuracy " << report.metrics.accuracy << " on " << labels.size() << " frames\n";
}

void run_predict(const PredictOptions& o, std::ostream& out) {
  const auto model = load_model(o.model);
  const auto signal = load_wav(o.wav);
  const auto frames = extract_frames(signal, model.spectral);
  if (!o.emit_frames.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(o.emit_frames, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + o.emit_frames.string());
  }
  out << "t_start,label,p_chatter,p_machining,p_rotation\n";
  char buf[160];
  for (const auto& frame : frames) {
    const auto p = predict(model, frame.lines);
    std::snprintf(buf, sizeof buf, "%.4f,%s,%.6f,%.6f,%.6f\n", frame.t_start_s,
                  std::string(class_name(p.predicted)).c_str(), p.probabilities[0],
                  p.probabilities[1], p.probabilities[2]);
    out << buf;
    if (!o.emit_frames.empty()) {
      std::snprintf(buf, sizeof buf, "frame_%06zu.pgm", frame.frame_index);
      export_frame_pgm(frame, model.spectral, o.emit_frames / buf);
    }
  }
}

}  // namespace

std::filesystem::path training_log_path(const std::filesystem::path& model_path) {
  auto p = model_path;
  p += ".log.csv";
  return p;
}

CommandLine parse_command_line(const std::vector<std::string>& raw_args) {
  const auto args = apply_config(raw_args);
  CommandLine cmd;

  CLI::App app{"Machining chatter detection from vibration spectra", "chatter"};
  app.require_subcommand(1);
  app.add_flag("-v,--verbose", cmd.verbosity, "Progress messages on stderr");
  app.add_option("--config", "key=value file of flag defaults");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  synth->add_option("--out", cmd.synth.out, "Output directory")->required();
  synth->add_option("--per-class", cmd.synth.per_class, "Signals per class");
  synth->add_option("--ambiguous-frac", cmd.synth.ambiguous_fraction, "Fraction of ambiguous signals");
  synth->add_option("--rpm", cmd.synth.rpm, "Spindle speeds (comma separated)")->delimiter(',');
  synth->add_option("--seed", cmd.synth.seed, "Corpus seed");
  synth->add_option("--duration", cmd.synth.duration_s, "Seconds per signal");
  synth->add_option("--teeth", cmd.synth.teeth, "Cutter teeth");

  auto* extract = app.add_subcommand("extract", "Build a spectral dataset from a corpus");
  auto& cfg = cmd.extract.config;
  extract->add_option("--in", cmd.extract.in, "Corpus directory")->required();
  extract->add_option("--out", cmd.extract.out, "Dataset directory")->required();
  extract->add_option("--hop", cfg.hop_s, "Frame hop in seconds");
  extract->add_option("--window", cfg.window_s, "Frame length in seconds");
  extract->add_option("--lines", cfg.n_lines, "Spectral lines per frame");
  extract->add_option("--fmin", cfg.f_min_hz, "Lowest line frequency (Hz)");
  extract->add_option("--fmax", cfg.f_max_hz, "Highest line frequency (Hz)");
  extract->add_option("--crop-db", cfg.crop_db, "Dynamic range kept below the peak (dB)");
  extract->add_flag_function(
      "--rectangular", [&cfg](std::int64_t) { cfg.window = WindowFunction::Rectangular; },
      "Rectangular instead of Hann window");
  extract->add_option("--seed", cmd.extract.seed, "Split seed");
  extract->add_option("--test-frac", cmd.extract.test_fraction, "Per-class fraction held out for test");

  auto* train = app.add_subcommand("train", "Train a classifier");
  auto& hp = cmd.train.hp;
  train->add_option("--data", cmd.train.data, "Dataset directory")->required();
  train->add_option("--out", cmd.train.out, "Model file")->required();
  train->add_option("--batch", hp.batch_size, "Mini-batch size");
  train->add_option("--lr", hp.learning_rate, "RMSprop learning rate");
  train->add_option("--epochs", hp.epochs, "Epochs");
  train->add_option("--dropout", hp.dropout_rate, "Dropout rate");
  train->add_option("--rho", hp.rmsprop_rho, "RMSprop decay");
  train->add_option("--seed", hp.rng_seed, "Initialization and shuffling seed");

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a dataset split");
  eval->add_option("--model", cmd.eval.model, "Model file")->required();
  eval->add_option("--data", cmd.eval.data, "Dataset directory")->required();
  eval->add_option("--split", cmd.eval.split, "test or test2");
  eval->add_option("--out", cmd.eval.out, "Report directory")->required();

  auto* predict_cmd = app.add_subcommand("predict", "Classify every frame of a recording");
  predict_cmd->add_option("--model", cmd.predict.model, "Model file")->required();
  predict_cmd->add_option("--wav", cmd.predict.wav, "Recording")->required();
  predict_cmd->add_option("--emit-frames", cmd.predict.emit_frames, "Directory for PGM frames");

  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested(app.help("", CLI::AppFormatMode::All));
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }
  for (auto* sub : {synth, extract, train, eval, predict_cmd}) {
    if (sub->parsed()) cmd.subcommand = sub->get_name();
  }
  validate(cmd);
  return cmd;
}

void execute(const CommandLine& cmd, std::ostream& out, std::ostream& err) {
  if (cmd.subcommand == "synth") {
    run_synth(cmd.synth, cmd.verbosity, err);
  } else if (cmd.subcommand == "extract") {
    run_extract(cmd.extract, cmd.verbosity, err);
  } else if (cmd.subcommand == "train") {
    run_train(cmd.train, cmd.verbosity, err);
  } else if (cmd.subcommand == "eval") {
    run_eval(cmd.eval, out);
  } else if (cmd.subcommand == "predict") {
    run_predict(cmd.predict, out);
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CommandLine cmd;
  try {
    cmd = parse_command_line(args);
  } catch (const HelpRequested& help) {
    out << help.what();
    return 0;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  }
  try {
    execute(cmd, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace chatter::cli
