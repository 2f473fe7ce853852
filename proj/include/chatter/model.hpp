#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "chatter/dataset.hpp"
#include "chatter/network.hpp"
#include "chatter/signal_io.hpp"
#include "chatter/spectral.hpp"

namespace chatter {

/// Training settings. Defaults are the published training setup; the RMSprop
/// decay and epsilon are the usual library defaults.
struct Hyperparameters {
  std::size_t batch_size = 2;
  double learning_rate = 0.0001;
  std::size_t epochs = 30;
  double dropout_rate = 0.3;
  double rmsprop_rho = 0.9;
  double rmsprop_epsilon = 1e-7;
  std::uint64_t rng_seed = 0;

  bool operator==(const Hyperparameters&) const = default;
};

void validate_hyperparameters(const Hyperparameters& hp);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;

  bool operator==(const EpochLog&) const = default;
};

struct ClassifierModel {
  std::vector<LayerSpec> layers;
  ParamSet<float> params;  // one entry per layer, empty for parameter-free layers
  SpectralConfig spectral;  // front end the model was built for; n_lines is the input width
  std::vector<EpochLog> training_log;
  std::uint64_t dropout_seed = 0;
  std::mt19937_64 dropout_rng;

  std::size_t n_inputs() const noexcept { return spectral.n_lines; }
  Shape input_shape() const noexcept { return {1, spectral.n_lines}; }
};

/// Validates shape chaining from the input to a 3-way softmax and the
/// parameter vector sizes. Throws CorruptModel.
void validate_model(const ClassifierModel& model);

std::size_t parameter_count(const ClassifierModel& model) noexcept;

/// Input scaling, two conv/ReLU/max-pool stages, then dense 128 -> ReLU ->
/// dropout -> dense 64 -> ReLU -> dense 3 -> softmax. He-uniform weights,
/// zero biases.
ClassifierModel build_model(std::uint64_t seed, const SpectralConfig& spectral = {},
                            double dropout_rate = 0.3);

struct Prediction {
  std::array<double, kNumClasses> probabilities{};
  MachiningClass predicted = MachiningClass::Chatter;
  bool input_out_of_range = false;  // set only in strict mode

  bool operator==(const Prediction&) const = default;
};

/// Inference (dropout off). Throws WrongInputLength.
Prediction predict(const ClassifierModel& model, std::span<const double> lines, bool strict = false);

/// training = true applies dropout drawn from the model's own generator.
Prediction forward(ClassifierModel& model, std::span<const double> lines, bool training);

/// -log(max(p_label, 1e-12)).
double loss(const std::array<double, kNumClasses>& probabilities, MachiningClass label) noexcept;

/// Inference over many samples, parallel over samples.
std::vector<Prediction> predict_batch(const ClassifierModel& model, std::span<const Sample> samples);
std::vector<Prediction> predict_batch_serial(const ClassifierModel& model,
                                             std::span<const Sample> samples);

/// Mini-batch RMSprop on the Train split, model selection on Val accuracy.
/// Throws MissingClass or EmptyDataset.
ClassifierModel train(ClassifierModel model, const LabeledDataset& ds, const Hyperparameters& hp);

/// Same loop over explicit sample sets; no class-coverage check.
ClassifierModel train(ClassifierModel model, std::span<const Sample* const> train_set,
                      std::span<const Sample* const> val_set, const Hyperparameters& hp);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  // perturbation flipped a ReLU or max-pool winner
};

/// Compares backprop with central differences in 64-bit on a random
/// subsample of at least max(n_params, 200) parameters, drawn evenly from
/// every weight tensor. Parameters whose +-step perturbation crosses a ReLU or
/// max-pool switch are replaced by fresh draws, since the finite difference is
/// not a derivative there. Relative error is |a - n| / max(|a| + |n|, 1e-8).
GradientCheckResult gradient_check_detailed(const ClassifierModel& model,
                                            std::span<const double> lines, MachiningClass label,
                                            double step, std::uint64_t seed = 0,
                                            std::size_t n_params = 256);

/// gradient_check_detailed(...).max_relative_error
double gradient_check(const ClassifierModel& model, std::span<const double> lines,
                      MachiningClass label, double step, std::uint64_t seed = 0,
                      std::size_t n_params = 256);

inline constexpr std::uint32_t kModelVersion = 1;

void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

/// `epoch,train_loss,train_acc,val_loss,val_acc` rows.
void save_training_log(std::span<const EpochLog> log, const std::filesystem::path& path);

}  // namespace chatter
