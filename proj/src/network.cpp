#include "chatter/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chatter/error.hpp"

namespace chatter {

namespace {

[[noreturn]] void bad_shape(const std::string& what) { throw Error(ErrorKind::CorruptModel, what); }

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class T>
void conv_forward(const LayerSpec& l, std::span<const T> w, std::span<const T> x, std::size_t len,
                  std::span<T> y) {
  const std::size_t cin = l.in_channels, cout = l.out_channels, k = l.kernel;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto bias = w.subspan(cout * cin * k);
  for (std::size_t o = 0; o < cout; ++o) {
    T* out = y.data() + o * len;
    std::fill(out, out + len, bias[o]);
    for (std::size_t c = 0; c < cin; ++c) {
      const T* in = x.data() + c * len;
      const T* wk = w.data() + (o * cin + c) * k;
      for (std::size_t t = 0; t < k; ++t) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(t) - pad;
        const std::size_t n0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::size_t n1 = shift > 0 ? len - static_cast<std::size_t>(shift) : len;
        const T wt = wk[t];
        for (std::size_t n = n0; n < n1; ++n) out[n] += wt * in[static_cast<std::ptrdiff_t>(n) + shift];
      }
    }
  }
}

template <class T>
void conv_backward(const LayerSpec& l, std::span<const T> w, std::span<const T> x, std::size_t len,
                   std::span<const T> dy, std::span<T> dw, std::span<T> dx) {
  const std::size_t cin = l.in_channels, cout = l.out_channels, k = l.kernel;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  auto dbias = dw.subspan(cout * cin * k);
  std::fill(dx.begin(), dx.end(), T(0));
  for (std::size_t o = 0; o < cout; ++o) {
    const T* g = dy.data() + o * len;
    T acc = 0;
    for (std::size_t n = 0; n < len; ++n) acc += g[n];
    dbias[o] += acc;
    for (std::size_t c = 0; c < cin; ++c) {
      const T* in = x.data() + c * len;
      T* din = dx.data() + c * len;
      const T* wk = w.data() + (o * cin + c) * k;
      T* dwk = dw.data() + (o * cin + c) * k;
      for (std::size_t t = 0; t < k; ++t) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(t) - pad;
        const std::size_t n0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::size_t n1 = shift > 0 ? len - static_cast<std::size_t>(shift) : len;
        const T wt = wk[t];
        T sum = 0;
        for (std::size_t n = n0; n < n1; ++n) {
          const auto m = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(n) + shift);
          sum += g[n] * in[m];
          din[m] += g[n] * wt;
        }
        dwk[t] += sum;
      }
    }
  }
}

}  // namespace

Shape output_shape(const LayerSpec& l, Shape in) {
  switch (l.kind) {
    case LayerKind::InputScale:
    case LayerKind::Relu:
      return in;
    case LayerKind::Dropout:
      if (!(l.rate >= 0.0f && l.rate < 1.0f)) bad_shape("dropout rate outside [0, 1)");
      return in;
    case LayerKind::Conv1d:
      if (l.in_channels != in.channels || l.out_channels == 0 || l.kernel % 2 == 0) {
        bad_shape("conv1d does not match its input");
      }
      return {l.out_channels, in.length};
    case LayerKind::MaxPool1d:
      if (l.pool == 0 || in.length < l.pool) bad_shape("max-pool wider than its input");
      return {in.channels, in.length / l.pool};
    case LayerKind::Flatten:
      return {in.size(), 1};
    case LayerKind::Dense:
      if (in.length != 1 || l.in_channels != in.channels || l.out_channels == 0) {
        bad_shape("dense layer does not match its input");
      }
      return {l.out_channels, 1};
    case LayerKind::Softmax:
      if (in.length != 1) bad_shape("softmax needs a flat input");
      return in;
  }
  bad_shape("unknown layer kind " + std::to_string(static_cast<std::uint32_t>(l.kind)));
}

std::size_t parameter_count(const LayerSpec& l) noexcept {
  switch (l.kind) {
    case LayerKind::Conv1d:
      return static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel + l.out_channels;
    case LayerKind::Dense:
      return static_cast<std::size_t>(l.out_channels) * l.in_channels + l.out_channels;
    default:
      return 0;
  }
}

template <class T>
void forward_trace(std::span<const LayerSpec> layers, const ParamSet<T>& params,
                   std::span<const T> input, Shape input_shape, std::mt19937_64* dropout_rng,
                   Trace<T>& trace) {
  const std::size_t n_layers = layers.size();
  trace.shapes.resize(n_layers + 1);
  trace.acts.resize(n_layers + 1);
  trace.pool_argmax.resize(n_layers);
  trace.dropout_mask.resize(n_layers);
  trace.shapes[0] = input_shape;
  trace.acts[0].assign(input.begin(), input.end());

  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& l = layers[i];
    const Shape in_shape = trace.shapes[i];
    const Shape out_shape = output_shape(l, in_shape);
    trace.shapes[i + 1] = out_shape;
    const auto& x = trace.acts[i];
    auto& y = trace.acts[i + 1];
    y.resize(out_shape.size());
    const std::span<const T> w(params[i]);

    switch (l.kind) {
      case LayerKind::InputScale: {
        const T offset = static_cast<T>(l.offset), scale = static_cast<T>(l.scale);
        for (std::size_t j = 0; j < x.size(); ++j) y[j] = (x[j] + offset) * scale;
        break;
      }
      case LayerKind::Conv1d:
        conv_forward<T>(l, w, x, in_shape.length, y);
        break;
      case LayerKind::Relu:
        for (std::size_t j = 0; j < x.size(); ++j) y[j] = x[j] > T(0) ? x[j] : T(0);
        break;
      case LayerKind::MaxPool1d: {
        auto& arg = trace.pool_argmax[i];
        arg.resize(out_shape.size());
        for (std::size_t c = 0; c < out_shape.channels; ++c) {
          for (std::size_t p = 0; p < out_shape.length; ++p) {
            const std::size_t base = c * in_shape.length + p * l.pool;
            std::size_t best = base;
            for (std::size_t q = base + 1; q < base + l.pool; ++q) {
              if (x[q] > x[best]) best = q;
            }
            y[c * out_shape.length + p] = x[best];
            arg[c * out_shape.length + p] = static_cast<std::uint32_t>(best);
          }
        }
        break;
      }
      case LayerKind::Flatten:
        y = x;
        break;
      case LayerKind::Dense: {
        const std::size_t n_in = l.in_channels, n_out = l.out_channels;
        for (std::size_t o = 0; o < n_out; ++o) {
          const T* row = w.data() + o * n_in;
          T acc = w[n_out * n_in + o];
          for (std::size_t j = 0; j < n_in; ++j) acc += row[j] * x[j];
          y[o] = acc;
        }
        break;
      }
      case LayerKind::Dropout: {
        auto& mask = trace.dropout_mask[i];
        if (dropout_rng != nullptr && l.rate > 0.0f) {
          mask.resize(x.size());
          const T keep_scale = T(1) / (T(1) - static_cast<T>(l.rate));
          for (std::size_t j = 0; j < x.size(); ++j) {
            mask[j] = unit_uniform(*dropout_rng) < static_cast<double>(l.rate) ? T(0) : keep_scale;
            y[j] = x[j] * mask[j];
          }
        } else {
          mask.clear();
          y = x;
        }
        break;
      }
      case LayerKind::Softmax: {
        const T peak = *std::max_element(x.begin(), x.end());
        T total = 0;
        for (std::size_t j = 0; j < x.size(); ++j) {
          y[j] = std::exp(x[j] - peak);
          total += y[j];
        }
        for (auto& v : y) v /= total;
        break;
      }
    }
  }
}

template <class T>
void backward_accumulate(std::span<const LayerSpec> layers, const ParamSet<T>& params,
                         const Trace<T>& trace, std::size_t label, ParamSet<T>& grads) {
  const std::size_t n_layers = layers.size();
  if (n_layers == 0 || layers.back().kind != LayerKind::Softmax) {
    throw Error(ErrorKind::CorruptModel, "stack must end in softmax");
  }
  // Softmax + cross-entropy: d loss / d logits = p - onehot(label).
  std::vector<T> delta = trace.acts.back();
  delta[label] -= T(1);
  std::vector<T> dx;

  for (std::size_t i = n_layers - 1; i-- > 0;) {
    const auto& l = layers[i];
    const Shape in_shape = trace.shapes[i];
    const auto& x = trace.acts[i];
    dx.assign(in_shape.size(), T(0));
    switch (l.kind) {
      case LayerKind::InputScale: {
        const T scale = static_cast<T>(l.scale);
        for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = delta[j] * scale;
        break;
      }
      case LayerKind::Conv1d:
        conv_backward<T>(l, params[i], x, in_shape.length, delta, grads[i], dx);
        break;
      case LayerKind::Relu:
        for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = x[j] > T(0) ? delta[j] : T(0);
        break;
      case LayerKind::MaxPool1d: {
        const auto& arg = trace.pool_argmax[i];
        for (std::size_t j = 0; j < delta.size(); ++j) dx[arg[j]] += delta[j];
        break;
      }
      case LayerKind::Flatten:
        dx = delta;
        break;
      case LayerKind::Dense: {
        const std::size_t n_in = l.in_channels, n_out = l.out_channels;
        const auto& w = params[i];
        auto& g = grads[i];
        for (std::size_t o = 0; o < n_out; ++o) {
          const T d = delta[o];
          const T* row = w.data() + o * n_in;
          T* grow = g.data() + o * n_in;
          for (std::size_t j = 0; j < n_in; ++j) {
            grow[j] += d * x[j];
            dx[j] += d * row[j];
          }
          g[n_out * n_in + o] += d;
        }
        break;
      }
      case LayerKind::Dropout: {
        const auto& mask = trace.dropout_mask[i];
        if (mask.empty()) {
          dx = delta;
        } else {
          for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = delta[j] * mask[j];
        }
        break;
      }
      case LayerKind::Softmax:
        throw Error(ErrorKind::CorruptModel, "softmax is only allowed as the last layer");
    }
    delta.swap(dx);
  }
}

template void forward_trace<float>(std::span<const LayerSpec>, const ParamSet<float>&,
                                   std::span<const float>, Shape, std::mt19937_64*, Trace<float>&);
template void forward_trace<double>(std::span<const LayerSpec>, const ParamSet<double>&,
                                    std::span<const double>, Shape, std::mt19937_64*,
                                    Trace<double>&);
template void backward_accumulate<float>(std::span<const LayerSpec>, const ParamSet<float>&,
                                         const Trace<float>&, std::size_t, ParamSet<float>&);
template void backward_accumulate<double>(std::span<const LayerSpec>, const ParamSet<double>&,
                                          const Trace<double>&, std::size_t, ParamSet<double>&);

}  // namespace chatter
