#pragma once

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rsc/error.hpp"

namespace rsc {

struct ConvBlock {
  std::size_t layers = 0;
  std::size_t channels = 0;
  friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

/// Ordered block/layer plan of a network. A profile with `num_classes == 0`
/// and an empty head describes a bare convolutional base whose output is the
/// flattened feature vector.
struct ArchitectureProfile {
  std::string name;
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<ConvBlock> conv_blocks;
  std::vector<std::size_t> fc_head;
  std::size_t num_classes = 0;

  friend bool operator==(const ArchitectureProfile&, const ArchitectureProfile&) = default;

  bool has_head() const noexcept { return num_classes > 0; }

  void validate() const {
    if (channels == 0 || height == 0 || width == 0) throw ProfileError("input extents must be positive");
    for (const auto& b : conv_blocks)
      if (b.layers == 0 || b.channels == 0) throw ProfileError("conv blocks need positive layer and channel counts");
    for (auto w : fc_head)
      if (w == 0) throw ProfileError("fully connected widths must be positive");
    if (num_classes == 0 && !fc_head.empty()) throw ProfileError("a head needs a positive class count");
    std::size_t h = height, w = width;
    for (std::size_t b = 0; b < conv_blocks.size(); ++b) {
      if (h < 2 || w < 2)
        throw ProfileError("block " + std::to_string(b + 1) + " cannot pool a " + std::to_string(h) + "x" +
                           std::to_string(w) + " map");
      h /= 2;
      w /= 2;
    }
  }

  /// Spatial height after the input and after each block's pool.
  std::vector<std::size_t> spatial_trace() const {
    std::vector<std::size_t> t{height};
    for (std::size_t b = 0; b < conv_blocks.size(); ++b) t.push_back(t.back() / 2);
    return t;
  }

  std::size_t last_channels() const { return conv_blocks.empty() ? channels : conv_blocks.back().channels; }

  std::size_t flatten_width() const {
    std::size_t h = height, w = width;
    for (std::size_t b = 0; b < conv_blocks.size(); ++b) {
      h /= 2;
      w /= 2;
    }
    return last_channels() * h * w;
  }

  /// Canonical structural description; the name is not part of it.
  std::string canonical() const {
    std::ostringstream os;
    os << "input=" << channels << 'x' << height << 'x' << width << ";blocks=";
    for (std::size_t i = 0; i < conv_blocks.size(); ++i)
      os << (i ? "," : "") << conv_blocks[i].layers << 'x' << conv_blocks[i].channels;
    os << ";head=";
    for (std::size_t i = 0; i < fc_head.size(); ++i) os << (i ? "," : "") << fc_head[i];
    os << ";classes=" << num_classes;
    return os.str();
  }

  std::string fingerprint() const;

  /// Same profile with the fully connected head removed.
  ArchitectureProfile conv_base() const {
    ArchitectureProfile p = *this;
    p.fc_head.clear();
    p.num_classes = 0;
    return p;
  }

  /// The 13-conv VGG16 layout on 150x150 RGB input with a 512-256 head.
  static ArchitectureProfile vgg16_150(std::size_t num_classes = 3) {
    return {"vgg16_150", 3, 150, 150, {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}}, {512, 256}, num_classes};
  }

  /// Five single-conv blocks on 32x32 input; small enough to train in seconds.
  static ArchitectureProfile mini_32(std::size_t num_classes = 3) {
    return {"mini_32", 3, 32, 32, {{1, 8}, {1, 16}, {1, 32}, {1, 32}, {1, 32}}, {64, 32}, num_classes};
  }

  /// A head-only network reading a flat feature vector of the given width.
  static ArchitectureProfile head_only(std::size_t feature_width, std::vector<std::size_t> widths,
                                       std::size_t num_classes) {
    return {"head", feature_width, 1, 1, {}, std::move(widths), num_classes};
  }

  static ArchitectureProfile by_name(std::string_view name, std::size_t num_classes = 3) {
    if (name == "vgg16_150") return vgg16_150(num_classes);
    if (name == "mini_32") return mini_32(num_classes);
    throw ProfileError("unknown profile '" + std::string(name) + "'");
  }
};

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string ArchitectureProfile::fingerprint() const { return "fnv1a64:" + hex64(fnv1a64(canonical())); }

}  // namespace rsc
