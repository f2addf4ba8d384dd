#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "rsc/rsc.hpp"

namespace rsc::testing {

/// Fresh, empty directory under the system temp folder.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("rsc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline Tensor random_tensor(Shape s, SeededRng& rng, double lo = -1.0, double hi = 1.0) {
  return uniform_init(std::move(s), lo, hi, rng);
}

/// Direct sliding-window 3x3 / stride 1 / pad 1 cross-correlation.
inline Tensor naive_conv(const Tensor& w, const Tensor& b, const Tensor& x) {
  const std::size_t O = w.dim(0), C = w.dim(1), H = x.dim(1), W = x.dim(2);
  Tensor y({O, H, W});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        double s = b[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t u = 0; u < 3; ++u)
            for (std::size_t v = 0; v < 3; ++v) {
              const long ii = static_cast<long>(i + u) - 1, jj = static_cast<long>(j + v) - 1;
              if (ii < 0 || jj < 0 || ii >= static_cast<long>(H) || jj >= static_cast<long>(W)) continue;
              s += w[((o * C + c) * 3 + u) * 3 + v] * x.at(c, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
            }
        y.at(o, i, j) = s;
      }
  return y;
}

inline Layer make_layer(LayerSpec spec, SeededRng& rng) {
  Layer l{"layer", spec, {}, 0};
  if (spec.kind == LayerKind::Conv2D) {
    l.state.weights = uniform_init({spec.out_channels, spec.in_channels, 3, 3}, -0.5, 0.5, rng);
    l.state.bias = uniform_init({spec.out_channels}, -0.5, 0.5, rng);
  } else if (spec.kind == LayerKind::Dense) {
    l.state.weights = uniform_init({spec.out_units, spec.in_units}, -0.5, 0.5, rng);
    l.state.bias = uniform_init({spec.out_units}, -0.5, 0.5, rng);
  }
  return l;
}

/// Scene rendered at 32x32, mean-normalised, with five-class labels.
inline Dataset small_target(std::size_t per_class, std::uint64_t seed) {
  return preprocess_all(generate_synthetic(SyntheticConfig::target(32, seed), per_class), 32, 32);
}

}  // namespace rsc::testing
