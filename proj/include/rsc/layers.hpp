#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rsc/error.hpp"
#include "rsc/tensor.hpp"

namespace rsc {

enum class LayerKind { Conv2D, ReLU, MaxPool2, Flatten, Dense, Softmax };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2D: return "Conv2D";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::MaxPool2: return "MaxPool2";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Dense: return "Dense";
    case LayerKind::Softmax: return "Softmax";
  }
  return "?";
}

/// Immutable description of one layer. Convolutions are always 3x3, stride 1,
/// pad 1 (spatial size preserved); pooling is always 2x2 with stride 2.
struct LayerSpec {
  static constexpr std::size_t kKernel = 3;
  static constexpr std::size_t kStride = 1;
  static constexpr std::size_t kPad = 1;
  static constexpr std::size_t kPoolWindow = 2;

  LayerKind kind = LayerKind::ReLU;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t in_units = 0;
  std::size_t out_units = 0;

  static LayerSpec conv2d(std::size_t in, std::size_t out) {
    if (in == 0 || out == 0) throw ProfileError("Conv2D channel counts must be positive");
    return {LayerKind::Conv2D, in, out, 0, 0};
  }
  static LayerSpec dense(std::size_t in, std::size_t out) {
    if (in == 0 || out == 0) throw ProfileError("Dense unit counts must be positive");
    return {LayerKind::Dense, 0, 0, in, out};
  }
  static LayerSpec relu() { return {LayerKind::ReLU}; }
  static LayerSpec maxpool2() { return {LayerKind::MaxPool2}; }
  static LayerSpec flatten() { return {LayerKind::Flatten}; }
  static LayerSpec softmax() { return {LayerKind::Softmax}; }

  bool has_parameters() const noexcept { return kind == LayerKind::Conv2D || kind == LayerKind::Dense; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Number of trainable scalars (weights + biases) of a parameterized layer.
inline std::size_t parameter_count(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::Conv2D:
      return LayerSpec::kKernel * LayerSpec::kKernel * spec.in_channels * spec.out_channels + spec.out_channels;
    case LayerKind::Dense:
      return spec.in_units * spec.out_units + spec.out_units;
    default:
      throw DomainError(std::string(to_string(spec.kind)) + " layers have no parameters");
  }
}

/// Forward-pass values needed by the matching backward call.
struct LayerCache {
  bool valid = false;
  Shape input_shape;
  Tensor columns;                   // Conv2D: im2col of the input
  Tensor input;                     // ReLU / Dense: the forward input
  std::vector<std::size_t> argmax;  // MaxPool2: flat input index per output
};

struct LayerState {
  Tensor weights;  // Conv2D: out x in x 3 x 3, Dense: out x in
  Tensor bias;     // out
  LayerCache cache;
};

struct Gradients {
  Tensor dW;
  Tensor db;
  Tensor dX;
};

// ---------------------------------------------------------------- Conv2D

namespace detail {

inline Tensor conv_apply(const Tensor& weights, const Tensor& bias, const Tensor& x, Tensor* cols_out) {
  const std::size_t out_ch = weights.dim(0);
  const std::size_t in_ch = weights.dim(1);
  if (x.rank() != 3 || x.dim(0) != in_ch)
    throw ShapeError("conv input " + shape_str(x.shape()) + " does not have " + std::to_string(in_ch) +
                     " channels");
  const std::size_t H = x.dim(1), W = x.dim(2);
  Tensor cols = im2col(x, LayerSpec::kKernel, LayerSpec::kStride, LayerSpec::kPad);
  const std::size_t hw = cols.dim(1);
  const std::size_t ckk = cols.dim(0);
  Tensor y({out_ch, H, W});
  double* py = y.data().data();
  for (std::size_t o = 0; o < out_ch; ++o) std::fill(py + o * hw, py + (o + 1) * hw, bias[o]);
  gemm_nn(out_ch, ckk, hw, weights.data().data(), cols.data().data(), py);
  if (cols_out) *cols_out = std::move(cols);
  return y;
}

inline Tensor dense_apply(const Tensor& weights, const Tensor& bias, const Tensor& x) {
  const std::size_t out = weights.dim(0), in = weights.dim(1);
  if (x.size() != in)
    throw ShapeError("dense input length " + std::to_string(x.size()) + " != " + std::to_string(in));
  Tensor y({out});
  const double* w = weights.data().data();
  for (std::size_t o = 0; o < out; ++o) {
    double s = 0.0;
    for (std::size_t i = 0; i < in; ++i) s += w[o * in + i] * x[i];
    y[o] = s + bias[o];
  }
  return y;
}

}  // namespace detail

/// y[o,i,j] = b[o] + sum_{c,u,v} W[o,c,u,v] * x_pad[c, i+u, j+v]
/// (cross-correlation, zero padding of 1, output the same size as input).
inline Tensor conv_forward(LayerState& state, const Tensor& x) {
  Tensor cols;
  Tensor y = detail::conv_apply(state.weights, state.bias, x, &cols);
  state.cache.valid = true;
  state.cache.input_shape = x.shape();
  state.cache.columns = std::move(cols);
  return y;
}

/// Gradients of the convolution from its cached forward pass. `need_dx` and
/// `need_params` let callers skip work they will discard.
inline Gradients conv_backward(const LayerState& state, const Tensor& dy, bool need_dx = true,
                               bool need_params = true) {
  if (!state.cache.valid) throw StateError("conv_backward called before conv_forward");
  const std::size_t out_ch = state.weights.dim(0);
  const std::size_t in_ch = state.weights.dim(1);
  const auto& in_shape = state.cache.input_shape;
  const std::size_t H = in_shape[1], W = in_shape[2];
  const std::size_t hw = H * W;
  const std::size_t ckk = in_ch * LayerSpec::kKernel * LayerSpec::kKernel;
  if (dy.size() != out_ch * hw) throw ShapeError("conv dy has shape " + shape_str(dy.shape()));
  Gradients g;
  if (need_params) {
    g.dW = Tensor(state.weights.shape());
    detail::gemm_nt(out_ch, hw, ckk, dy.data().data(), state.cache.columns.data().data(), g.dW.data().data());
    g.db = Tensor({out_ch});
    for (std::size_t o = 0; o < out_ch; ++o) {
      double s = 0.0;
      for (std::size_t j = 0; j < hw; ++j) s += dy[o * hw + j];
      g.db[o] = s;
    }
  }
  if (need_dx) {
    Tensor dcols({ckk, hw});
    detail::gemm_tn(ckk, out_ch, hw, state.weights.data().data(), dy.data().data(), dcols.data().data());
    g.dX = col2im(dcols, in_ch, H, W, LayerSpec::kKernel, LayerSpec::kStride, LayerSpec::kPad);
  }
  return g;
}

// ---------------------------------------------------------------- ReLU

inline Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

/// Derivative at exactly 0 is taken as 0.
inline Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  if (x.size() != dy.size()) throw ShapeError("relu_backward size mismatch");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

// ---------------------------------------------------------------- MaxPool2

struct PoolResult {
  Tensor output;
  std::vector<std::size_t> indices;  // flat input index chosen for each output
};

/// 2x2/stride-2 max pooling with floor semantics: a trailing odd row or
/// column is dropped. Ties go to the first element in row-major window order.
inline PoolResult maxpool_forward(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("maxpool expects C x H x W, got " + shape_str(x.shape()));
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H < 2 || W < 2) throw ShapeError("maxpool needs H, W >= 2, got " + shape_str(x.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;
  PoolResult r{Tensor({C, Ho, Wo}), std::vector<std::size_t>(C * Ho * Wo)};
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        std::size_t best = (c * H + 2 * i) * W + 2 * j;
        for (std::size_t u = 0; u < 2; ++u)
          for (std::size_t v = 0; v < 2; ++v) {
            const std::size_t idx = (c * H + 2 * i + u) * W + 2 * j + v;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (c * Ho + i) * Wo + j;
        r.output[o] = x[best];
        r.indices[o] = best;
      }
  return r;
}

inline Tensor maxpool_backward(const std::vector<std::size_t>& indices, const Tensor& dy, const Shape& input_shape) {
  if (indices.size() != dy.size()) throw ShapeError("maxpool_backward index/gradient length mismatch");
  Tensor dx(input_shape);
  for (std::size_t o = 0; o < indices.size(); ++o) dx[indices[o]] += dy[o];
  return dx;
}

// ---------------------------------------------------------------- Dense

inline Tensor dense_forward(LayerState& state, const Tensor& x) {
  Tensor y = detail::dense_apply(state.weights, state.bias, x);
  state.cache.valid = true;
  state.cache.input_shape = x.shape();
  state.cache.input = x;
  return y;
}

inline Gradients dense_backward(const LayerState& state, const Tensor& dy, bool need_dx = true,
                                bool need_params = true) {
  if (!state.cache.valid) throw StateError("dense_backward called before dense_forward");
  const std::size_t out = state.weights.dim(0), in = state.weights.dim(1);
  if (dy.size() != out) throw ShapeError("dense dy length mismatch");
  const Tensor& x = state.cache.input;
  Gradients g;
  if (need_params) {
    g.dW = Tensor({out, in});
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t i = 0; i < in; ++i) g.dW[o * in + i] = dy[o] * x[i];
    g.db = Tensor({out}, dy.vec());
  }
  if (need_dx) {
    Tensor dx({in});
    detail::gemm_tn(in, out, 1, state.weights.data().data(), dy.data().data(), dx.data().data());
    g.dX = dx.reshaped(state.cache.input_shape);
  }
  return g;
}

// ---------------------------------------------------------------- Softmax

inline Tensor softmax_forward(const Tensor& x) {
  const double m = *std::max_element(x.data().begin(), x.data().end());
  Tensor y(x.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (y[i] = std::exp(x[i] - m));
  for (auto& v : y.data()) v /= s;
  return y;
}

// ---------------------------------------------------------------- Layer

/// A layer spec bound to its parameters and forward cache. `block` is the
/// 1-based convolutional block the layer belongs to, 0 for head layers.
struct Layer {
  std::string name;
  LayerSpec spec;
  LayerState state;
  int block = 0;

  Tensor forward(const Tensor& x) {
    switch (spec.kind) {
      case LayerKind::Conv2D: return conv_forward(state, x);
      case LayerKind::ReLU:
        state.cache.valid = true;
        state.cache.input = x;
        return relu_forward(x);
      case LayerKind::MaxPool2: {
        auto r = maxpool_forward(x);
        state.cache.valid = true;
        state.cache.input_shape = x.shape();
        state.cache.argmax = std::move(r.indices);
        return std::move(r.output);
      }
      case LayerKind::Flatten:
        state.cache.valid = true;
        state.cache.input_shape = x.shape();
        return x.reshaped({x.size()});
      case LayerKind::Dense: return dense_forward(state, x);
      case LayerKind::Softmax: return softmax_forward(x);
    }
    throw StateError("unknown layer kind");
  }

  /// Forward pass that keeps no cache (inference only).
  Tensor infer(const Tensor& x) const {
    switch (spec.kind) {
      case LayerKind::Conv2D: return detail::conv_apply(state.weights, state.bias, x, nullptr);
      case LayerKind::ReLU: return relu_forward(x);
      case LayerKind::MaxPool2: return maxpool_forward(x).output;
      case LayerKind::Flatten: return x.reshaped({x.size()});
      case LayerKind::Dense: return detail::dense_apply(state.weights, state.bias, x);
      case LayerKind::Softmax: return softmax_forward(x);
    }
    throw StateError("unknown layer kind");
  }

  Gradients backward(const Tensor& dy, bool need_dx = true, bool need_params = true) const {
    switch (spec.kind) {
      case LayerKind::Conv2D: return conv_backward(state, dy, need_dx, need_params);
      case LayerKind::Dense: return dense_backward(state, dy, need_dx, need_params);
      case LayerKind::ReLU:
        require_cache();
        return {{}, {}, need_dx ? relu_backward(state.cache.input, dy) : Tensor{}};
      case LayerKind::MaxPool2:
        require_cache();
        return {{}, {}, need_dx ? maxpool_backward(state.cache.argmax, dy, state.cache.input_shape) : Tensor{}};
      case LayerKind::Flatten:
        require_cache();
        return {{}, {}, need_dx ? dy.reshaped(state.cache.input_shape) : Tensor{}};
      case LayerKind::Softmax:
        throw DomainError("softmax backward is only available fused with cross-entropy");
    }
    throw StateError("unknown layer kind");
  }

  void clear_cache() { state.cache = {}; }

 private:
  void require_cache() const {
    if (!state.cache.valid) throw StateError(std::string(to_string(spec.kind)) + " backward called before forward");
  }
};

/// Output shape of a layer for a given input shape, without running it.
inline Shape output_shape(const LayerSpec& spec, const Shape& in) {
  switch (spec.kind) {
    case LayerKind::Conv2D:
      if (in.size() != 3 || in[0] != spec.in_channels) throw ShapeError("conv input shape " + shape_str(in));
      return {spec.out_channels, in[1], in[2]};
    case LayerKind::MaxPool2:
      if (in.size() != 3 || in[1] < 2 || in[2] < 2) throw ShapeError("maxpool input shape " + shape_str(in));
      return {in[0], in[1] / 2, in[2] / 2};
    case LayerKind::Flatten: return {shape_size(in)};
    case LayerKind::Dense:
      if (shape_size(in) != spec.in_units) throw ShapeError("dense input shape " + shape_str(in));
      return {spec.out_units};
    case LayerKind::ReLU:
    case LayerKind::Softmax: return in;
  }
  throw StateError("unknown layer kind");
}

}  // namespace rsc
