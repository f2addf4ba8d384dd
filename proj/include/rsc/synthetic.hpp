#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "rsc/dataset.hpp"
#include "rsc/labels.hpp"
#include "rsc/rng.hpp"

namespace rsc {

/// Pixels whose every channel reaches this value count as snow-white.
inline constexpr double kNearWhite = 180.0;

struct Rgb {
  double r = 0, g = 0, b = 0;
};

/// Procedural winter-road scene. The road band spans the rows below the
/// horizon; snow covers a lateral fraction `f` of the band, filling the
/// shoulders and the strip between the wheel paths first and the two darker
/// wheel paths last.
struct SyntheticConfig {
  std::size_t size = 32;
  Rgb sky{150, 170, 195};
  Rgb shoulder{105, 98, 82};
  Rgb road{95, 95, 100};
  Rgb wheel{62, 62, 66};
  Rgb snow{236, 238, 242};
  double horizon = 0.35;        // road starts at this fraction of the height
  double road_left = 0.08;      // road band columns as fractions of the width
  double road_right = 0.92;
  double wheel_width = 0.18;    // wheel path width as a fraction of the road
  double lateral_jitter = 0.04; // random shift of the road band
  double brightness_jitter = 0.06;
  double glare = 30.0;          // peak additive glare on the road surface
  double salt_density = 0.04;   // fraction of road pixels with salt residue
  double salt_boost = 20.0;     // brightening of a salt pixel
  double noise = 20.0;          // per-pixel uniform noise amplitude
  std::uint64_t seed = 1;

  void validate() const {
    if (size < 8) throw RangeError("synthetic images must be at least 8 pixels");
    if (!(horizon > 0.0 && horizon < 0.9)) throw RangeError("horizon must lie in (0, 0.9)");
    if (!(road_left >= 0.0 && road_left < road_right && road_right <= 1.0)) throw RangeError("bad road band");
    if (noise < 0.0 || glare < 0.0 || brightness_jitter < 0.0 || brightness_jitter >= 0.5)
      throw RangeError("noise, glare and jitter must be non-negative (jitter < 0.5)");
    const double hi = 1.0 + brightness_jitter, lo = 1.0 - brightness_jitter;
    const double pavement = std::max({road.r, road.g, road.b, wheel.r, wheel.g, wheel.b});
    if ((pavement + glare + salt_boost) * hi + noise >= kNearWhite)
      throw RangeError("bare pavement could render snow-white; lower glare, salt or noise");
    if (std::min({snow.r, snow.g, snow.b}) * lo - noise < kNearWhite)
      throw RangeError("snow could render below the snow-white threshold; lower noise");
  }

  /// Scene used for the downstream (target) task.
  static SyntheticConfig target(std::size_t size, std::uint64_t seed) {
    SyntheticConfig c;
    c.size = size;
    c.seed = seed;
    return c;
  }

  /// A visibly different scene family used for surrogate pre-training: a
  /// reddish-brown road under a grey sky with a higher horizon.
  static SyntheticConfig source(std::size_t size, std::uint64_t seed) {
    SyntheticConfig c;
    c.size = size;
    c.seed = seed;
    c.sky = {175, 175, 178};
    c.shoulder = {88, 110, 76};
    c.road = {100, 84, 74};
    c.wheel = {74, 60, 52};
    c.snow = {230, 234, 244};
    c.horizon = 0.25;
    c.road_left = 0.12;
    c.road_right = 0.88;
    c.wheel_width = 0.16;
    return c;
  }
};

inline bool is_near_white(const Tensor& img, std::size_t i, std::size_t j) {
  return img.at(0, i, j) >= kNearWhite && img.at(1, i, j) >= kNearWhite && img.at(2, i, j) >= kNearWhite;
}

/// Where the road band landed in a rendered image.
struct RoadGeometry {
  std::size_t top = 0;    // first road row
  std::size_t left = 0;   // first road column
  std::size_t right = 0;  // one past the last road column
};

/// Renders one scene with lateral snow coverage `f` in [0, 1].
inline Tensor render_road(const SyntheticConfig& cfg, double f, SeededRng& rng, RoadGeometry* geometry = nullptr) {
  cfg.validate();
  if (!(f >= 0.0 && f <= 1.0)) throw RangeError("coverage fraction must lie in [0, 1]");
  const std::size_t n = cfg.size;
  const double fn = static_cast<double>(n);
  Tensor img({3, n, n});

  const double shift = rng.uniform(-cfg.lateral_jitter, cfg.lateral_jitter);
  const double brightness = 1.0 + rng.uniform(-cfg.brightness_jitter, cfg.brightness_jitter);
  const double glare_x = rng.uniform(0.2, 0.8), glare_y = rng.uniform(0.5, 0.95);
  const double glare_r = rng.uniform(0.12, 0.3);
  const double glare_peak = rng.uniform(0.0, cfg.glare);
  const double wheel_shift = rng.uniform(-0.03, 0.03);

  RoadGeometry g;
  g.top = std::min(n - 1, static_cast<std::size_t>(std::lround(cfg.horizon * fn)));
  g.left = static_cast<std::size_t>(std::lround(std::clamp(cfg.road_left + shift, 0.0, 1.0) * fn));
  g.right = static_cast<std::size_t>(std::lround(std::clamp(cfg.road_right + shift, 0.0, 1.0) * fn));
  g.right = std::max(g.right, g.left + 2);
  g.right = std::min(g.right, n);
  const std::size_t road_cols = g.right - g.left;

  // Lateral snow priority: distance from the nearest wheel-path centre,
  // farthest first. Column alpha is clamp(f * cols - rank, 0, 1), so the
  // covered share of the band is exactly f.
  std::vector<double> u(road_cols), dist(road_cols);
  const double c1 = 0.27 + wheel_shift, c2 = 0.73 + wheel_shift;
  for (std::size_t k = 0; k < road_cols; ++k) {
    u[k] = (static_cast<double>(k) + 0.5) / static_cast<double>(road_cols);
    dist[k] = std::min(std::abs(u[k] - c1), std::abs(u[k] - c2));
  }
  std::vector<std::size_t> order(road_cols);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
  std::vector<double> alpha(road_cols, 0.0);
  for (std::size_t r = 0; r < road_cols; ++r)
    alpha[order[r]] = std::clamp(f * static_cast<double>(road_cols) - static_cast<double>(r), 0.0, 1.0);

  auto put = [&](std::size_t i, std::size_t j, Rgb c) {
    img.at(0, i, j) = c.r;
    img.at(1, i, j) = c.g;
    img.at(2, i, j) = c.b;
  };

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i < g.top) {
        const double t = static_cast<double>(i) / std::max<double>(1.0, static_cast<double>(g.top));
        put(i, j, {cfg.sky.r - 20 * t, cfg.sky.g - 15 * t, cfg.sky.b - 10 * t});
        continue;
      }
      if (j < g.left || j >= g.right) {
        put(i, j, cfg.shoulder);
        continue;
      }
      const std::size_t k = j - g.left;
      const bool in_wheel = std::min(std::abs(u[k] - c1), std::abs(u[k] - c2)) < cfg.wheel_width / 2;
      Rgb base = in_wheel ? cfg.wheel : cfg.road;
      // Glare and salt brighten bare pavement without reaching snow-white.
      const double dx = static_cast<double>(j) / fn - glare_x, dy = static_cast<double>(i) / fn - glare_y;
      const double glow = glare_peak * std::exp(-(dx * dx + dy * dy) / (2 * glare_r * glare_r));
      const double salt = rng.next_double() < cfg.salt_density ? cfg.salt_boost : 0.0;
      base = {base.r + glow + salt, base.g + glow + salt, base.b + glow + salt};
      const double a = alpha[k];
      put(i, j, {base.r + a * (cfg.snow.r - base.r), base.g + a * (cfg.snow.g - base.g), base.b + a * (cfg.snow.b - base.b)});
    }
  }
  for (auto& v : img.data()) v = std::clamp(v * brightness + rng.uniform(-cfg.noise, cfg.noise), 0.0, 255.0);
  if (geometry) *geometry = g;
  return img;
}

/// Coverage band for a five-class label: Bare f = 0; <25 (0, .25);
/// 25-50 [.25, .5); 50-75 [.5, .75); fully covered [.75, 1].
inline double draw_coverage(FiveClassLabel l, SeededRng& rng) {
  switch (l) {
    case FiveClassLabel::Bare: return 0.0;
    case FiveClassLabel::Lt25: {
      const double f = rng.uniform(0.0, 0.25);
      return f > 0.0 ? f : 1e-3;
    }
    case FiveClassLabel::P25to50: return rng.uniform(0.25, 0.5);
    case FiveClassLabel::P50to75: return rng.uniform(0.5, 0.75);
    case FiveClassLabel::Gt75: return rng.uniform(0.75, 1.0);
  }
  return 0.0;
}

/// `n_per_class` scenes for each of the five coverage classes, interleaved
/// by class. Labels are exact by construction; ids are `syn_<seed>_<index>`.
inline Dataset generate_synthetic(const SyntheticConfig& cfg, std::size_t n_per_class) {
  cfg.validate();
  if (n_per_class == 0) throw RangeError("n_per_class must be at least 1");
  SeededRng rng(cfg.seed);
  Dataset d;
  d.items.reserve(5 * n_per_class);
  std::size_t index = 0;
  for (std::size_t i = 0; i < n_per_class; ++i)
    for (auto label : kAllFiveClass) {
      const double f = std::min(1.0, draw_coverage(label, rng));
      d.items.push_back({render_road(cfg, f, rng), label, "syn_" + std::to_string(cfg.seed) + "_" + std::to_string(index++)});
    }
  return d;
}

}  // namespace rsc
