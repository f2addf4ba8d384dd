#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rsc/error.hpp"
#include "rsc/layers.hpp"
#include "rsc/profile.hpp"
#include "rsc/rng.hpp"

namespace rsc {

/// An ordered layer list plus its freeze mask. Frozen layers are held
/// bit-exactly constant by every optimizer step.
struct LayerStack {
  std::vector<Layer> layers;
  std::vector<bool> frozen;

  std::size_t size() const noexcept { return layers.size(); }

  Tensor forward(const Tensor& x) {
    Tensor a = x;
    for (auto& l : layers) a = l.forward(a);
    return a;
  }

  /// Forward pass over layers [first, last) without touching caches.
  Tensor infer(const Tensor& x, std::size_t first = 0, std::size_t last = SIZE_MAX) const {
    Tensor a = x;
    last = std::min(last, layers.size());
    for (std::size_t i = first; i < last; ++i) a = layers[i].infer(a);
    return a;
  }

  /// Index of the first layer with trainable parameters, or size() if none.
  std::size_t first_trainable() const {
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].spec.has_parameters() && !frozen[i]) return i;
    return layers.size();
  }

  void clear_caches() {
    for (auto& l : layers) l.clear_cache();
  }
};

struct Network : LayerStack {
  ArchitectureProfile profile;
  /// Set once the classifier head holds trained weights; fine-tuning refuses
  /// to run without it.
  bool head_trained = false;

  Shape input_shape() const { return {profile.channels, profile.height, profile.width}; }
};

namespace detail {

inline Layer make_param_layer(std::string name, LayerSpec spec, int block, SeededRng& rng) {
  Layer l{std::move(name), spec, {}, block};
  std::size_t fan_in, fan_out;
  Shape wshape;
  if (spec.kind == LayerKind::Conv2D) {
    const std::size_t kk = LayerSpec::kKernel * LayerSpec::kKernel;
    fan_in = spec.in_channels * kk;
    fan_out = spec.out_channels * kk;
    wshape = {spec.out_channels, spec.in_channels, LayerSpec::kKernel, LayerSpec::kKernel};
  } else {
    fan_in = spec.in_units;
    fan_out = spec.out_units;
    wshape = {spec.out_units, spec.in_units};
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  l.state.weights = uniform_init(wshape, -limit, limit, rng);
  l.state.bias = Tensor({wshape[0]});
  return l;
}

inline void push(LayerStack& s, Layer l) {
  s.layers.push_back(std::move(l));
  s.frozen.push_back(false);
}

}  // namespace detail

/// Builds the layer sequence of a profile: per block (Conv2D, ReLU) x n then
/// MaxPool2; Flatten; per hidden width (Dense, ReLU); Dense(classes); Softmax.
/// Weights are Glorot-uniform in row-major layer order, biases zero.
inline Network build_network(const ArchitectureProfile& profile, SeededRng& rng) {
  profile.validate();
  Network net;
  net.profile = profile;
  std::size_t ch = profile.channels;
  for (std::size_t b = 0; b < profile.conv_blocks.size(); ++b) {
    const int block = static_cast<int>(b + 1);
    const std::string prefix = "block" + std::to_string(block) + "_";
    for (std::size_t i = 0; i < profile.conv_blocks[b].layers; ++i) {
      const std::string conv = prefix + "conv" + std::to_string(i + 1);
      detail::push(net, detail::make_param_layer(conv, LayerSpec::conv2d(ch, profile.conv_blocks[b].channels), block, rng));
      detail::push(net, Layer{conv + "_relu", LayerSpec::relu(), {}, block});
      ch = profile.conv_blocks[b].channels;
    }
    detail::push(net, Layer{prefix + "pool", LayerSpec::maxpool2(), {}, block});
  }
  detail::push(net, Layer{"flatten", LayerSpec::flatten(), {}, 0});
  if (profile.has_head()) {
    std::size_t units = profile.flatten_width();
    for (std::size_t i = 0; i < profile.fc_head.size(); ++i) {
      const std::string fc = "fc" + std::to_string(i + 1);
      detail::push(net, detail::make_param_layer(fc, LayerSpec::dense(units, profile.fc_head[i]), 0, rng));
      detail::push(net, Layer{fc + "_relu", LayerSpec::relu(), {}, 0});
      units = profile.fc_head[i];
    }
    detail::push(net, detail::make_param_layer("predictions", LayerSpec::dense(units, profile.num_classes), 0, rng));
    detail::push(net, Layer{"softmax", LayerSpec::softmax(), {}, 0});
  }
  return net;
}

inline void check_input(const Network& net, const Tensor& x) {
  if (x.size() != shape_size(net.input_shape()))
    throw ShapeError("input " + shape_str(x.shape()) + " does not match profile input " +
                     shape_str(net.input_shape()));
}

inline Tensor as_network_input(const Network& net, const Tensor& x) {
  check_input(net, x);
  return x.shape() == net.input_shape() ? x : x.reshaped(net.input_shape());
}

/// Forward pass that fills per-layer caches for a following backward pass.
/// With a head the result is the class-probability vector; for a bare base it
/// is the flattened feature vector.
inline Tensor forward(Network& net, const Tensor& x) { return net.LayerStack::forward(as_network_input(net, x)); }

/// Cache-free forward pass; safe to call concurrently on a shared network.
inline Tensor predict(const Network& net, const Tensor& x) { return net.infer(as_network_input(net, x)); }

/// Marks every layer of the first `frozen_block_count` conv blocks (convs,
/// their activations and the pool) frozen and everything else trainable.
inline void set_freeze_by_blocks(Network& net, std::size_t frozen_block_count) {
  if (frozen_block_count > net.profile.conv_blocks.size())
    throw RangeError("cannot freeze " + std::to_string(frozen_block_count) + " of " +
                     std::to_string(net.profile.conv_blocks.size()) + " blocks");
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const int b = net.layers[i].block;
    net.frozen[i] = b > 0 && static_cast<std::size_t>(b) <= frozen_block_count;
  }
}

/// Number of layers the freeze mask holds constant.
inline std::size_t frozen_layer_count(const Network& net, bool weighted_only = false) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.frozen[i]) continue;
    const auto k = net.layers[i].spec.kind;
    if (weighted_only ? net.layers[i].spec.has_parameters() : (k == LayerKind::Conv2D || k == LayerKind::MaxPool2))
      ++n;
  }
  return n;
}

/// Everything up to (and including) the flatten; the output is the feature
/// vector the classifier head reads.
inline Network truncate_to_conv_base(const Network& net) {
  Network base;
  base.profile = net.profile.conv_base();
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    Layer l = net.layers[i];
    l.clear_cache();
    const bool is_flatten = l.spec.kind == LayerKind::Flatten;
    base.layers.push_back(std::move(l));
    base.frozen.push_back(net.frozen[i]);
    if (is_flatten) break;
  }
  return base;
}

/// Attaches a head-only network to a conv base. The head's input width must
/// equal the base's flatten width.
inline Network assemble(const Network& base, const Network& head) {
  if (base.profile.has_head()) throw ShapeError("assemble expects a bare conv base");
  if (!head.profile.conv_blocks.empty() || !head.profile.has_head())
    throw ShapeError("assemble expects a head-only network");
  if (shape_size(head.input_shape()) != base.profile.flatten_width())
    throw ShapeError("head input width " + std::to_string(shape_size(head.input_shape())) +
                     " does not match base feature width " + std::to_string(base.profile.flatten_width()));
  Network net;
  net.profile = base.profile;
  net.profile.fc_head = head.profile.fc_head;
  net.profile.num_classes = head.profile.num_classes;
  net.profile.name = base.profile.name;
  net.layers = base.layers;
  net.frozen = base.frozen;
  for (std::size_t i = 0; i < head.layers.size(); ++i) {
    if (head.layers[i].spec.kind == LayerKind::Flatten) continue;
    net.layers.push_back(head.layers[i]);
    net.frozen.push_back(head.frozen[i]);
  }
  net.clear_caches();
  net.head_trained = head.head_trained;
  return net;
}

inline std::size_t total_parameters(const LayerStack& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers)
    if (l.spec.has_parameters()) n += parameter_count(l.spec);
  return n;
}

inline std::size_t trainable_parameters(const LayerStack& net) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (net.layers[i].spec.has_parameters() && !net.frozen[i]) n += parameter_count(net.layers[i].spec);
  return n;
}

/// Hash of the structure plus every parameter bit; identifies a trained base.
inline std::string weights_fingerprint(const Network& net) {
  std::uint64_t h = fnv1a64(net.profile.canonical());
  for (const auto& l : net.layers) {
    if (!l.spec.has_parameters()) continue;
    for (const Tensor* t : {&l.state.weights, &l.state.bias}) {
      h = fnv1a64(std::string_view(reinterpret_cast<const char*>(t->data().data()), t->size() * sizeof(double)), h);
    }
  }
  return "fnv1a64:" + hex64(h);
}

}  // namespace rsc
