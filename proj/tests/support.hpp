#pragma once

#include <algorithm>
#include <cstdint>
#include <tuple>
#include <vector>

#include "evhta/rng.hpp"
#include "evhta/types.hpp"

namespace evhta::fuzz {

// Uniform random events over [t_begin, t_end), sorted by (t, y, x, p).
inline std::vector<Event> random_events(Rng& rng, const SensorGeometry& g, std::size_t count, std::uint64_t t_begin,
                                        std::uint64_t t_end) {
  std::vector<Event> ev(count);
  for (auto& e : ev) {
    e.t = t_begin + static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(t_end - t_begin));
    e.x = static_cast<std::uint16_t>(rng.below(g.width));
    e.y = static_cast<std::uint16_t>(rng.below(g.height));
    e.p = (rng.next() >> 63) ? 1 : -1;
  }
  std::sort(ev.begin(), ev.end(),
            [](const Event& a, const Event& b) { return std::tie(a.t, a.y, a.x, a.p) < std::tie(b.t, b.y, b.x, b.p); });
  return ev;
}

// Events clustered in a few hot spots with skewed polarity, so reliability varies.
inline std::vector<Event> clustered_events(Rng& rng, const SensorGeometry& g, std::size_t count, std::uint64_t t_begin,
                                           std::uint64_t t_end) {
  std::vector<Event> ev(count);
  const std::uint32_t cx = rng.below(g.width), cy = rng.below(g.height);
  const double bias = rng.uniform();
  for (auto& e : ev) {
    e.t = t_begin + static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(t_end - t_begin));
    if (rng.uniform() < 0.5) {
      const long x = static_cast<long>(cx) + static_cast<long>(rng.below(9)) - 4;
      const long y = static_cast<long>(cy) + static_cast<long>(rng.below(9)) - 4;
      e.x = static_cast<std::uint16_t>(std::clamp(x, 0L, static_cast<long>(g.width) - 1));
      e.y = static_cast<std::uint16_t>(std::clamp(y, 0L, static_cast<long>(g.height) - 1));
      e.p = rng.uniform() < bias ? 1 : -1;
    } else {
      e.x = static_cast<std::uint16_t>(rng.below(g.width));
      e.y = static_cast<std::uint16_t>(rng.below(g.height));
      e.p = (rng.next() >> 63) ? 1 : -1;
    }
  }
  std::sort(ev.begin(), ev.end(),
            [](const Event& a, const Event& b) { return std::tie(a.t, a.y, a.x, a.p) < std::tie(b.t, b.y, b.x, b.p); });
  return ev;
}

}  // namespace evhta::fuzz
