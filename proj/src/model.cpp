#include "chatter/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

#include "chatter/error.hpp"

namespace chatter {

namespace {

constexpr char kMagic[4] = {'C', 'H', 'M', 'D'};
constexpr double kProbabilityFloor = 1e-12;
constexpr std::size_t kMinCheckedParams = 200;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Prediction to_prediction(std::span<const float> probs) {
  Prediction p;
  std::size_t best = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p.probabilities[c] = static_cast<double>(probs[c]);
    if (probs[c] > probs[best]) best = c;
  }
  p.predicted = static_cast<MachiningClass>(best);
  return p;
}

void check_input(const ClassifierModel& model, std::span<const double> lines) {
  if (lines.size() != model.n_inputs()) {
    throw Error(ErrorKind::WrongInputLength, "expected " + std::to_string(model.n_inputs()) +
                                                 " lines, got " + std::to_string(lines.size()));
  }
}

Prediction run(const ClassifierModel& model, std::span<const double> lines,
               std::mt19937_64* dropout_rng, Trace<float>& trace) {
  check_input(model, lines);
  std::vector<float> input(lines.begin(), lines.end());
  forward_trace<float>(model.layers, model.params, input, model.input_shape(), dropout_rng, trace);
  return to_prediction(trace.acts.back());
}

template <class Get>
std::vector<Prediction> batch_impl(const ClassifierModel& model, std::size_t n, Get get,
                                   bool parallel) {
  validate_model(model);
  for (std::size_t i = 0; i < n; ++i) check_input(model, get(i));
  std::vector<Prediction> out(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel if (parallel)
  {
    Trace<float> trace;
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      out[static_cast<std::size_t>(i)] = run(model, get(static_cast<std::size_t>(i)), nullptr, trace);
    }
  }
  return out;
}

double check_loss(std::span<const LayerSpec> layers, const ParamSet<double>& params,
                  std::span<const double> input, Shape shape, std::size_t label,
                  Trace<double>& trace) {
  forward_trace<double>(layers, params, input, shape, nullptr, trace);
  return -std::log(std::max(trace.acts.back()[label], kProbabilityFloor));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void magic(const char (&m)[4]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) fail("bad magic");
    pos_ += 4;
  }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  [[noreturn]] static void fail(const std::string& what) { throw Error(ErrorKind::CorruptModel, what); }

 private:
  unsigned char byte(std::size_t i) const { return static_cast<unsigned char>(bytes_[i]); }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated model file");
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void validate_hyperparameters(const Hyperparameters& hp) {
  auto fail = [](const char* what) { throw Error(ErrorKind::InvalidArgument, what); };
  if (hp.batch_size < 1) fail("batch_size must be >= 1");
  // A zero learning rate is accepted as an explicit no-op run.
  if (!(hp.learning_rate >= 0.0) || !std::isfinite(hp.learning_rate)) fail("learning_rate must be >= 0");
  if (!(hp.dropout_rate >= 0.0 && hp.dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
  if (!(hp.rmsprop_rho >= 0.0 && hp.rmsprop_rho < 1.0)) fail("rmsprop rho must be in [0, 1)");
  if (!(hp.rmsprop_epsilon > 0.0)) fail("rmsprop epsilon must be > 0");
}

void validate_model(const ClassifierModel& model) {
  if (model.spectral.n_lines < 1) throw Error(ErrorKind::CorruptModel, "model has no inputs");
  if (model.layers.empty() || model.layers.back().kind != LayerKind::Softmax) {
    throw Error(ErrorKind::CorruptModel, "final layer must be softmax");
  }
  if (model.params.size() != model.layers.size()) {
    throw Error(ErrorKind::CorruptModel, "parameter table does not match layer table");
  }
  Shape shape = model.input_shape();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    if (l.kind == LayerKind::Softmax && i + 1 != model.layers.size()) {
      throw Error(ErrorKind::CorruptModel, "softmax before the last layer");
    }
    shape = output_shape(l, shape);
    if (model.params[i].size() != parameter_count(l)) {
      throw Error(ErrorKind::CorruptModel, "layer " + std::to_string(i) + " has the wrong weight count");
    }
  }
  if (shape != Shape{kNumClasses, 1}) throw Error(ErrorKind::CorruptModel, "output is not 3 classes");
}

std::size_t parameter_count(const ClassifierModel& model) noexcept {
  std::size_t total = 0;
  for (const auto& l : model.layers) total += parameter_count(l);
  return total;
}

ClassifierModel build_model(std::uint64_t seed, const SpectralConfig& spectral, double dropout_rate) {
  validate_config(spectral);
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "dropout_rate must be in [0, 1)");
  }
  ClassifierModel model;
  model.spectral = spectral;

  const auto half_range = static_cast<float>(spectral.crop_db / 2.0);
  auto& L = model.layers;
  L.push_back({.kind = LayerKind::InputScale, .offset = half_range, .scale = 1.0f / half_range});
  L.push_back({.kind = LayerKind::Conv1d, .in_channels = 1, .out_channels = 16, .kernel = 7});
  L.push_back({.kind = LayerKind::Relu});
  L.push_back({.kind = LayerKind::MaxPool1d, .pool = 4});
  L.push_back({.kind = LayerKind::Conv1d, .in_channels = 16, .out_channels = 32, .kernel = 5});
  L.push_back({.kind = LayerKind::Relu});
  L.push_back({.kind = LayerKind::MaxPool1d, .pool = 4});
  L.push_back({.kind = LayerKind::Flatten});
  const Shape flat = [&] {
    Shape s = model.input_shape();
    for (const auto& l : L) s = output_shape(l, s);
    return s;
  }();
  L.push_back({.kind = LayerKind::Dense, .in_channels = static_cast<std::uint32_t>(flat.channels),
               .out_channels = 128});
  L.push_back({.kind = LayerKind::Relu});
  L.push_back({.kind = LayerKind::Dropout, .rate = static_cast<float>(dropout_rate)});
  L.push_back({.kind = LayerKind::Dense, .in_channels = 128, .out_channels = 64});
  L.push_back({.kind = LayerKind::Relu});
  L.push_back({.kind = LayerKind::Dense, .in_channels = 64, .out_channels = 3});
  L.push_back({.kind = LayerKind::Softmax});

  std::mt19937_64 rng(mix_seed(seed, 0));
  model.params.resize(L.size());
  for (std::size_t i = 0; i < L.size(); ++i) {
    const auto& l = L[i];
    auto& p = model.params[i];
    p.assign(parameter_count(l), 0.0f);
    if (p.empty()) continue;
    const std::size_t fan_in = l.kind == LayerKind::Conv1d ? std::size_t{l.in_channels} * l.kernel
                                                           : std::size_t{l.in_channels};
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    const std::size_t n_weights = p.size() - l.out_channels;
    for (std::size_t j = 0; j < n_weights; ++j) p[j] = static_cast<float>(dist(rng));
  }
  model.dropout_seed = mix_seed(seed, 1);
  model.dropout_rng.seed(model.dropout_seed);
  validate_model(model);
  return model;
}

Prediction predict(const ClassifierModel& model, std::span<const double> lines, bool strict) {
  Trace<float> trace;
  Prediction p = run(model, lines, nullptr, trace);
  if (strict) {
    const double floor_db = -model.spectral.crop_db;
    p.input_out_of_range = std::any_of(lines.begin(), lines.end(),
                                       [&](double v) { return !(v >= floor_db && v <= 0.0); });
  }
  return p;
}

Prediction forward(ClassifierModel& model, std::span<const double> lines, bool training) {
  Trace<float> trace;
  return run(model, lines, training ? &model.dropout_rng : nullptr, trace);
}

double loss(const std::array<double, kNumClasses>& probabilities, MachiningClass label) noexcept {
  return -std::log(std::max(probabilities[class_index(label)], kProbabilityFloor));
}

std::vector<Prediction> predict_batch(const ClassifierModel& model, std::span<const Sample> samples) {
  return batch_impl(model, samples.size(),
                    [&](std::size_t i) { return std::span<const double>(samples[i].frame.lines); }, true);
}

std::vector<Prediction> predict_batch_serial(const ClassifierModel& model,
                                             std::span<const Sample> samples) {
  return batch_impl(model, samples.size(),
                    [&](std::size_t i) { return std::span<const double>(samples[i].frame.lines); }, false);
}

ClassifierModel train(ClassifierModel model, const LabeledDataset& ds, const Hyperparameters& hp) {
  std::vector<const Sample*> train_set;
  std::vector<const Sample*> val_set;
  ClassCounts train_classes{};
  for (const auto& s : ds.samples) {
    if (s.split == Split::Train) {
      train_set.push_back(&s);
      train_classes[class_index(s.label)] += 1;
    } else if (s.split == Split::Val) {
      val_set.push_back(&s);
    }
  }
  if (train_set.empty() || val_set.empty()) {
    throw Error(ErrorKind::EmptyDataset, "train and validation splits must be non-empty");
  }
  for (auto c : kAllClasses) {
    if (train_classes[class_index(c)] == 0) {
      throw Error(ErrorKind::MissingClass, "no training frames for " + std::string(class_name(c)));
    }
  }
  return train(std::move(model), train_set, val_set, hp);
}

ClassifierModel train(ClassifierModel model, std::span<const Sample* const> train_set,
                      std::span<const Sample* const> val_set, const Hyperparameters& hp) {
  validate_hyperparameters(hp);
  validate_model(model);
  if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "empty training set");
  for (const auto* s : train_set) check_input(model, s->frame.lines);
  for (const auto* s : val_set) check_input(model, s->frame.lines);

  model.training_log.clear();
  if (hp.epochs == 0) return model;

  for (auto& l : model.layers) {
    if (l.kind == LayerKind::Dropout) l.rate = static_cast<float>(hp.dropout_rate);
  }
  model.dropout_seed = mix_seed(hp.rng_seed, 1);
  model.dropout_rng.seed(model.dropout_seed);
  std::mt19937_64 shuffle_rng(mix_seed(hp.rng_seed, 2));

  ParamSet<float> grads(model.params.size());
  ParamSet<float> cache(model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    grads[i].assign(model.params[i].size(), 0.0f);
    cache[i].assign(model.params[i].size(), 0.0f);
  }
  const auto lr = static_cast<float>(hp.learning_rate);
  const auto rho = static_cast<float>(hp.rmsprop_rho);
  const auto eps = static_cast<float>(hp.rmsprop_epsilon);

  ParamSet<float> best_params = model.params;
  double best_val_accuracy = -1.0;
  std::vector<std::size_t> order(train_set.size());
  Trace<float> trace;
  std::vector<float> input(model.n_inputs());

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = *train_set[order[k]];
        std::copy(s.frame.lines.begin(), s.frame.lines.end(), input.begin());
        forward_trace<float>(model.layers, model.params, input, model.input_shape(),
                             &model.dropout_rng, trace);
        const Prediction p = to_prediction(trace.acts.back());
        loss_sum += loss(p.probabilities, s.label);
        correct += p.predicted == s.label ? 1 : 0;
        backward_accumulate<float>(model.layers, model.params, trace, class_index(s.label), grads);
      }
      const float inv_batch = 1.0f / static_cast<float>(end - start);
      for (std::size_t i = 0; i < model.params.size(); ++i) {
        auto& w = model.params[i];
        auto& g = grads[i];
        auto& c = cache[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
          const float gj = g[j] * inv_batch;
          c[j] = rho * c[j] + (1.0f - rho) * gj * gj;
          w[j] -= lr * gj / (std::sqrt(c[j]) + eps);
        }
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(order.size());
    entry.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (!val_set.empty()) {
      const auto preds = batch_impl(
          model, val_set.size(),
          [&](std::size_t i) { return std::span<const double>(val_set[i]->frame.lines); }, true);
      double val_loss = 0.0;
      std::size_t val_correct = 0;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        val_loss += loss(preds[i].probabilities, val_set[i]->label);
        val_correct += preds[i].predicted == val_set[i]->label ? 1 : 0;
      }
      entry.val_loss = val_loss / static_cast<double>(preds.size());
      entry.val_accuracy = static_cast<double>(val_correct) / static_cast<double>(preds.size());
    }
    model.training_log.push_back(entry);
    if (entry.val_accuracy > best_val_accuracy) {
      best_val_accuracy = entry.val_accuracy;
      best_params = model.params;
    }
  }
  model.params = std::move(best_params);
  return model;
}

GradientCheckResult gradient_check_detailed(const ClassifierModel& model,
                                            std::span<const double> lines, MachiningClass label,
                                            double step, std::uint64_t seed, std::size_t n_params) {
  validate_model(model);
  check_input(model, lines);
  const std::size_t target = class_index(label);

  ParamSet<double> params(model.params.size());
  ParamSet<double> grads(model.params.size());
  std::vector<std::size_t> weighted_layers;
  std::size_t total = 0;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    params[i].assign(model.params[i].begin(), model.params[i].end());
    grads[i].assign(params[i].size(), 0.0);
    if (!params[i].empty()) weighted_layers.push_back(i);
    total += params[i].size();
  }

  Trace<double> base;
  forward_trace<double>(model.layers, params, lines, model.input_shape(), nullptr, base);
  backward_accumulate<double>(model.layers, params, base, target, grads);

  const auto same_switches = [&](const Trace<double>& t) {
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      if (model.layers[i].kind == LayerKind::Relu) {
        const auto& x0 = base.acts[i];
        const auto& x1 = t.acts[i];
        for (std::size_t j = 0; j < x0.size(); ++j) {
          if ((x0[j] > 0.0) != (x1[j] > 0.0)) return false;
        }
      } else if (model.layers[i].kind == LayerKind::MaxPool1d) {
        if (base.pool_argmax[i] != t.pool_argmax[i]) return false;
      }
    }
    return true;
  };

  const std::size_t want = std::min(total, std::max(n_params, kMinCheckedParams));
  const std::size_t per_layer = (want + weighted_layers.size() - 1) / weighted_layers.size();
  std::mt19937_64 rng(mix_seed(seed, 3));

  GradientCheckResult result;
  Trace<double> trace;
  for (std::size_t layer : weighted_layers) {
    std::vector<std::size_t> candidates(params[layer].size());
    std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    std::shuffle(candidates.begin(), candidates.end(), rng);
    std::size_t done = 0;
    for (std::size_t offset : candidates) {
      if (done == per_layer) break;
      double& theta = params[layer][offset];
      const double saved = theta;
      theta = saved + step;
      const double up = check_loss(model.layers, params, lines, model.input_shape(), target, trace);
      bool smooth = same_switches(trace);
      theta = saved - step;
      const double down = check_loss(model.layers, params, lines, model.input_shape(), target, trace);
      smooth = smooth && same_switches(trace);
      theta = saved;
      if (!smooth) {
        ++result.skipped_kinks;
        continue;
      }
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = grads[layer][offset];
      const double rel = std::abs(analytic - numeric) /
                         std::max(std::abs(analytic) + std::abs(numeric), 1e-8);
      result.max_relative_error = std::max(result.max_relative_error, rel);
      ++result.checked;
      ++done;
    }
  }
  return result;
}

double gradient_check(const ClassifierModel& model, std::span<const double> lines,
                      MachiningClass label, double step, std::uint64_t seed, std::size_t n_params) {
  return gradient_check_detailed(model, lines, label, step, seed, n_params).max_relative_error;
}

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  validate_model(model);
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kModelVersion);
  const auto& sc = model.spectral;
  put_u32(out, static_cast<std::uint32_t>(sc.n_lines));
  put_u32(out, sc.window == WindowFunction::Hann ? 0u : 1u);
  put_f64(out, sc.hop_s);
  put_f64(out, sc.window_s);
  put_f64(out, sc.f_min_hz);
  put_f64(out, sc.f_max_hz);
  put_f64(out, sc.crop_db);
  put_u64(out, model.dropout_seed);
  put_u32(out, static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& l : model.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.kind));
    put_u32(out, l.in_channels);
    put_u32(out, l.out_channels);
    put_u32(out, l.kernel);
    put_u32(out, l.pool);
    put_f32(out, l.rate);
    put_f32(out, l.offset);
    put_f32(out, l.scale);
  }
  put_u32(out, static_cast<std::uint32_t>(model.training_log.size()));
  for (const auto& e : model.training_log) {
    put_u32(out, static_cast<std::uint32_t>(e.epoch));
    put_f64(out, e.train_loss);
    put_f64(out, e.train_accuracy);
    put_f64(out, e.val_loss);
    put_f64(out, e.val_accuracy);
  }
  for (const auto& p : model.params) {
    put_u64(out, p.size());
    for (float w : p) put_f32(out, w);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  Reader r(std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()));

  r.magic(kMagic);
  if (const auto version = r.u32(); version != kModelVersion) {
    Reader::fail("unsupported model version " + std::to_string(version));
  }
  ClassifierModel model;
  auto& sc = model.spectral;
  sc.n_lines = r.u32();
  const auto window = r.u32();
  if (window > 1) Reader::fail("unknown window function");
  sc.window = window == 0 ? WindowFunction::Hann : WindowFunction::Rectangular;
  sc.hop_s = r.f64();
  sc.window_s = r.f64();
  sc.f_min_hz = r.f64();
  sc.f_max_hz = r.f64();
  sc.crop_db = r.f64();
  try {
    validate_config(sc);
  } catch (const Error& e) {
    Reader::fail(std::string("bad spectral config: ") + e.what());
  }
  model.dropout_seed = r.u64();
  model.dropout_rng.seed(model.dropout_seed);

  const std::uint32_t n_layers = r.u32();
  if (n_layers > r.remaining() / 32) Reader::fail("layer count exceeds file size");
  model.layers.resize(n_layers);
  for (auto& l : model.layers) {
    const auto kind = r.u32();
    if (kind < 1 || kind > 8) Reader::fail("unknown layer kind " + std::to_string(kind));
    l.kind = static_cast<LayerKind>(kind);
    l.in_channels = r.u32();
    l.out_channels = r.u32();
    l.kernel = r.u32();
    l.pool = r.u32();
    l.rate = r.f32();
    l.offset = r.f32();
    l.scale = r.f32();
  }
  const std::uint32_t n_log = r.u32();
  if (n_log > r.remaining() / 36) Reader::fail("log length exceeds file size");
  model.training_log.resize(n_log);
  for (auto& e : model.training_log) {
    e.epoch = r.u32();
    e.train_loss = r.f64();
    e.train_accuracy = r.f64();
    e.val_loss = r.f64();
    e.val_accuracy = r.f64();
  }
  model.params.resize(n_layers);
  for (auto& p : model.params) {
    const std::uint64_t n = r.u64();
    if (n > r.remaining() / 4) Reader::fail("weight block exceeds file size");
    p.resize(n);
    for (auto& w : p) w = r.f32();
  }
  if (!r.at_end()) Reader::fail("trailing bytes after weights");
  validate_model(model);
  return model;
}

void save_training_log(std::span<const EpochLog> log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f\n", e.epoch, e.train_loss,
                  e.train_accuracy, e.val_loss, e.val_accuracy);
    out << buf;
  }
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

}  // namespace chatter
