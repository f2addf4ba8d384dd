#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "rsc/layers.hpp"
#include "rsc/loss.hpp"
#include "rsc/rng.hpp"

namespace rsc {

namespace detail {

inline double grad_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

inline double project(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

}  // namespace detail

/// Compares the layer's analytic gradients with central differences of the
/// scalar L = sum(r * layer(x)), r a fixed random projection. Returns the
/// largest |analytic - numeric| / max(1, |analytic|) over all parameters and
/// inputs. The layer's parameters are restored before returning.
inline double finite_difference_check(Layer& layer, const Tensor& x, double h = 1e-5,
                                      std::uint64_t projection_seed = 0x5EED) {
  Tensor y = layer.forward(x);
  SeededRng rng(projection_seed);
  Tensor r = uniform_init(y.shape(), -1.0, 1.0, rng);
  const Gradients g = layer.backward(r, true, layer.spec.has_parameters());

  auto objective = [&](const Tensor& input) { return detail::project(layer.infer(input), r); };

  double worst = 0.0;
  Tensor xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = objective(xp);
    xp[i] = orig - h;
    const double fm = objective(xp);
    xp[i] = orig;
    worst = std::max(worst, detail::grad_rel_error(g.dX[i], (fp - fm) / (2 * h)));
  }
  if (layer.spec.has_parameters()) {
    auto sweep = [&](Tensor& param, const Tensor& analytic) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double orig = param[i];
        param[i] = orig + h;
        const double fp = objective(x);
        param[i] = orig - h;
        const double fm = objective(x);
        param[i] = orig;
        worst = std::max(worst, detail::grad_rel_error(analytic[i], (fp - fm) / (2 * h)));
      }
    };
    sweep(layer.state.weights, g.dW);
    sweep(layer.state.bias, g.db);
  }
  return worst;
}

/// Same measure for the fused softmax + cross-entropy gradient w.r.t. logits.
inline double softmax_cross_entropy_check(const Tensor& logits, std::size_t true_class, double h = 1e-5) {
  const Tensor analytic = softmax_cross_entropy_grad(softmax_forward(logits), true_class);
  double worst = 0.0;
  Tensor z = logits;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double orig = z[i];
    z[i] = orig + h;
    const double fp = cross_entropy(softmax_forward(z), true_class);
    z[i] = orig - h;
    const double fm = cross_entropy(softmax_forward(z), true_class);
    z[i] = orig;
    worst = std::max(worst, detail::grad_rel_error(analytic[i], (fp - fm) / (2 * h)));
  }
  return worst;
}

}  // namespace rsc
