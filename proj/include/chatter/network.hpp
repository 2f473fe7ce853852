#pragma once

// Layer-stack kernels shared by training (float) and gradient checking
// (double). Activations are stored channel-major: value (c, n) lives at
// c * length + n.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace chatter {

enum class LayerKind : std::uint32_t {
  InputScale = 1,  // y = (x + offset) * scale
  Conv1d = 2,      // zero-padded "same" convolution, odd kernel
  Relu = 3,
  MaxPool1d = 4,
  Flatten = 5,
  Dense = 6,
  Dropout = 7,  // inverted dropout, identity at inference
  Softmax = 8,
};

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::uint32_t in_channels = 0;
  std::uint32_t out_channels = 0;
  std::uint32_t kernel = 0;
  std::uint32_t pool = 0;
  float rate = 0.0f;
  float offset = 0.0f;
  float scale = 1.0f;

  bool operator==(const LayerSpec&) const = default;
};

struct Shape {
  std::size_t channels = 0;
  std::size_t length = 0;

  std::size_t size() const noexcept { return channels * length; }
  bool operator==(const Shape&) const = default;
};

/// Output shape of `layer` for input `in`. Throws CorruptModel when the layer
/// cannot consume `in`.
Shape output_shape(const LayerSpec& layer, Shape in);

/// Trainable parameters: weights then biases.
std::size_t parameter_count(const LayerSpec& layer) noexcept;

template <class T>
using ParamSet = std::vector<std::vector<T>>;

template <class T>
struct Trace {
  std::vector<Shape> shapes;               // shapes[i] is the input of layer i
  std::vector<std::vector<T>> acts;        // acts[i] input of layer i, acts.back() output
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<std::vector<T>> dropout_mask;
};

/// Runs the stack on `input`. Dropout is active only when `dropout_rng` is set.
template <class T>
void forward_trace(std::span<const LayerSpec> layers, const ParamSet<T>& params,
                   std::span<const T> input, Shape input_shape, std::mt19937_64* dropout_rng,
                   Trace<T>& trace);

/// Accumulates d(-log p_label)/d(params) into `grads` for a stack ending in
/// Softmax, using the activations recorded by forward_trace.
template <class T>
void backward_accumulate(std::span<const LayerSpec> layers, const ParamSet<T>& params,
                         const Trace<T>& trace, std::size_t label, ParamSet<T>& grads);

}  // namespace chatter
