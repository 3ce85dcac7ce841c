#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "evhta/error.hpp"
#include "evhta/types.hpp"

namespace evhta {

/// Default window length: 50 ms.
inline constexpr std::uint64_t kDefaultWindowUs = 50'000;

struct Window {
  WindowSpec spec;
  std::span<const Event> events;
};

/// First event timestamp rounded down to a multiple of dt_us.
inline std::uint64_t default_origin(std::span<const Event> events, std::uint64_t dt_us) {
  if (events.empty() || dt_us == 0) return 0;
  return events.front().t / dt_us * dt_us;
}

/// Tiles a time-sorted event sequence into contiguous half-open windows
/// [t0 + k*dt, t0 + (k+1)*dt). Empty windows between occupied ones are emitted;
/// the last window is the one holding the final event. Slices alias `events`.
inline std::vector<Window> window_iter(std::span<const Event> events, std::uint64_t dt_us,
                                       std::optional<std::uint64_t> t0 = std::nullopt) {
  if (dt_us == 0) throw ConfigError("window duration must be positive");
  std::vector<Window> out;
  if (events.empty()) return out;
  const std::uint64_t origin = t0.value_or(default_origin(events, dt_us));
  if (events.front().t < origin)
    throw ConfigError("window origin " + std::to_string(origin) + " lies after first event at " +
                      std::to_string(events.front().t));

  const std::uint64_t last = (events.back().t - origin) / dt_us;
  out.reserve(last + 1);
  std::size_t i = 0;
  for (std::uint64_t k = 0; k <= last; ++k) {
    const WindowSpec spec{k, origin + k * dt_us, dt_us};
    const std::size_t begin = i;
    while (i < events.size() && events[i].t < spec.end()) {
      if (i > 0 && events[i].t < events[i - 1].t) throw ConfigError("window_iter requires time-sorted events");
      ++i;
    }
    out.push_back(Window{spec, events.subspan(begin, i - begin)});
  }
  return out;
}

}  // namespace evhta
