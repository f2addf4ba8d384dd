#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "rsc/error.hpp"
#include "rsc/tensor.hpp"

namespace rsc {

inline constexpr double kProbabilityFloor = 1e-12;

/// -log(probs[true_class]), with the probability clamped to 1e-12.
inline double cross_entropy(const Tensor& probs, std::size_t true_class) {
  if (true_class >= probs.size())
    throw RangeError("class index " + std::to_string(true_class) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  return -std::log(std::max(probs[true_class], kProbabilityFloor));
}

/// Gradient of cross_entropy(softmax(logits), c) with respect to the logits:
/// probs - onehot(c).
inline Tensor softmax_cross_entropy_grad(const Tensor& probs, std::size_t true_class) {
  if (true_class >= probs.size()) throw RangeError("class index out of range");
  Tensor g = probs;
  g[true_class] -= 1.0;
  return g;
}

/// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax(const Tensor& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace rsc
