#pragma once

// Synthetic event scenes: a vertical bar sweeping horizontally, whose leading
// edge fires positive events and trailing edge negative events, over spatially
// uniform, polarity-balanced background noise. Every process is Poisson.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <tuple>
#include <type_traits>
#include <vector>

#include "evhta/error.hpp"
#include "evhta/image.hpp"
#include "evhta/rng.hpp"
#include "evhta/types.hpp"
#include "evhta/window.hpp"

namespace evhta::synth {

struct BarSpec {
  std::uint32_t width = 8;    // px
  double speed = 200.0;       // px/s, >= 0
  int direction = +1;         // +1 moves toward larger x, -1 toward smaller x
  double edge_rate = 400.0;   // events/s per edge pixel, both edges
  double start_x = 0.0;       // left column of the bar at t = 0
};

struct NoiseSpec {
  double rate = 20.0;  // events/s per pixel
};

struct SceneSpec {
  SensorGeometry geometry;
  std::uint64_t duration_us = 1'000'000;
  BarSpec bar;
  NoiseSpec noise;
  std::uint64_t seed = 1;
  std::uint64_t window_us = kDefaultWindowUs;  // mask granularity

  void validate() const {
    geometry.validate();
    if (duration_us == 0) throw ConfigError("scene duration must be positive");
    if (window_us == 0) throw ConfigError("scene window must be positive");
    if (!(bar.edge_rate >= 0) || !(noise.rate >= 0) || !(bar.speed >= 0))
      throw ConfigError("scene rates and speed must be non-negative");
    if (bar.direction != 1 && bar.direction != -1) throw ConfigError("bar direction must be +1 or -1");
    if (bar.width < 1) throw ConfigError("bar width must be >= 1");
  }
};

struct Scene {
  std::vector<Event> events;
  std::vector<Map<std::uint8_t>> masks;  // one per window, 1 = swept by the bar
  std::uint64_t window_us = kDefaultWindowUs;
};

namespace detail {

inline double bar_left(const BarSpec& bar, double t_seconds) {
  return bar.start_x + bar.direction * bar.speed * t_seconds;
}

// Column of the leading (sign > 0) or trailing edge at time t.
inline long edge_column(const BarSpec& bar, double t_seconds, bool leading) {
  const long left = static_cast<long>(std::floor(bar_left(bar, t_seconds)));
  const long right = left + static_cast<long>(bar.width) - 1;
  return (leading == (bar.direction > 0)) ? right : left;
}

// Homogeneous Poisson arrivals with `rate` (events/s) on [0, duration).
template <class Fn>
void poisson_arrivals(Rng& rng, double rate, std::uint64_t duration_us, Fn&& on_event) {
  if (rate <= 0) return;
  const double duration = static_cast<double>(duration_us) * 1e-6;
  double t = rng.exponential(rate);
  while (t < duration) {
    const auto t_us = static_cast<std::uint64_t>(std::floor(t * 1e6));
    if (t_us < duration_us) on_event(t_us, t);
    t += rng.exponential(rate);
  }
}

}  // namespace detail

/// Draws the scene's events, sorted by (t, y, x, p), plus per-window bar masks.
inline Scene generate(const SceneSpec& scene) {
  scene.validate();
  const auto& g = scene.geometry;
  Scene out;
  out.window_us = scene.window_us;

  std::uint64_t seed_state = scene.seed;
  Rng lead_rng(splitmix64(seed_state));
  Rng trail_rng(splitmix64(seed_state));
  Rng noise_rng(splitmix64(seed_state));

  auto edge_events = [&](Rng& rng, bool leading) {
    const std::int8_t polarity = leading ? 1 : -1;
    detail::poisson_arrivals(rng, scene.bar.edge_rate * g.height, scene.duration_us,
                             [&](std::uint64_t t_us, double t) {
                               const std::uint32_t y = rng.below(g.height);
                               const long x = detail::edge_column(scene.bar, t, leading);
                               if (x < 0 || x >= static_cast<long>(g.width)) return;
                               out.events.push_back(Event{static_cast<std::uint16_t>(x),
                                                          static_cast<std::uint16_t>(y), t_us, polarity});
                             });
  };
  edge_events(lead_rng, true);
  edge_events(trail_rng, false);

  detail::poisson_arrivals(noise_rng, scene.noise.rate * static_cast<double>(g.pixels()), scene.duration_us,
                           [&](std::uint64_t t_us, double) {
                             const std::uint32_t x = noise_rng.below(g.width);
                             const std::uint32_t y = noise_rng.below(g.height);
                             const std::int8_t p = (noise_rng.next() >> 63) ? 1 : -1;
                             out.events.push_back(
                                 Event{static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), t_us, p});
                           });

  std::sort(out.events.begin(), out.events.end(), [](const Event& a, const Event& b) {
    return std::tie(a.t, a.y, a.x, a.p) < std::tie(b.t, b.y, b.x, b.p);
  });

  const std::uint64_t windows = (scene.duration_us + scene.window_us - 1) / scene.window_us;
  out.masks.reserve(windows);
  for (std::uint64_t k = 0; k < windows; ++k) {
    Map<std::uint8_t> mask(g);
    const double t_begin = static_cast<double>(k * scene.window_us) * 1e-6;
    const double t_last =
        static_cast<double>(std::min(scene.duration_us, (k + 1) * scene.window_us) - 1) * 1e-6;
    const double a = detail::bar_left(scene.bar, t_begin), b = detail::bar_left(scene.bar, t_last);
    const long lo = static_cast<long>(std::floor(std::min(a, b)));
    const long hi = static_cast<long>(std::floor(std::max(a, b))) + static_cast<long>(scene.bar.width) - 1;
    for (long x = std::max(lo, 0L); x <= std::min(hi, static_cast<long>(g.width) - 1); ++x)
      for (std::size_t y = 0; y < g.height; ++y) mask(y, static_cast<std::size_t>(x)) = 1;
    out.masks.push_back(std::move(mask));
  }
  return out;
}

inline constexpr double kSnrEpsilon = 1e-6;

/// Mean luminance (green channel, scaled to [0,1]) inside the mask divided by
/// the mean outside plus kSnrEpsilon. An all-zero frame yields 0.
template <class Image>
double snr_metric(const Image& frame, const Map<std::uint8_t>& mask) {
  if (frame.height != mask.height() || frame.width != mask.width())
    throw ShapeError("mask does not match frame geometry");
  double in_sum = 0, out_sum = 0;
  std::size_t in_n = 0, out_n = 0;
  for (std::size_t y = 0; y < frame.height; ++y) {
    for (std::size_t x = 0; x < frame.width; ++x) {
      double v = static_cast<double>(frame.at(y, x, 1));
      if constexpr (std::is_same_v<Image, RgbImage<std::uint8_t>>) v /= 255.0;
      if (mask(y, x)) {
        in_sum += v;
        ++in_n;
      } else {
        out_sum += v;
        ++out_n;
      }
    }
  }
  if (in_n == 0) throw Error("snr_metric: empty mask");
  const double mean_in = in_sum / static_cast<double>(in_n);
  const double mean_out = out_n ? out_sum / static_cast<double>(out_n) : 0.0;
  return mean_in / (mean_out + kSnrEpsilon);
}

inline double snr_metric(const PseudoRGBFrame& frame, const Map<std::uint8_t>& mask) {
  return snr_metric(frame.image, mask);
}

/// Baseline 2D-histogram frame: G = (P0 + N0) / max, R = P0 / max, B = N0 / max,
/// normalized by the largest per-pixel total count in the window.
inline RgbImage<std::uint8_t> histogram_frame(std::span<const std::uint32_t> positive,
                                              std::span<const std::uint32_t> negative,
                                              const SensorGeometry& geometry) {
  RgbImage<std::uint8_t> img(geometry.height, geometry.width);
  std::uint32_t peak = 0;
  for (std::size_t i = 0; i < geometry.pixels(); ++i) peak = std::max(peak, positive[i] + negative[i]);
  if (peak == 0) return img;
  auto q = [&](double v) { return static_cast<std::uint8_t>(std::lround(v / peak * 255.0)); };
  for (std::size_t i = 0; i < geometry.pixels(); ++i) {
    img.pixels[i * 3 + 0] = q(positive[i]);
    img.pixels[i * 3 + 1] = q(positive[i] + negative[i]);
    img.pixels[i * 3 + 2] = q(negative[i]);
  }
  return img;
}

}  // namespace evhta::synth
