#pragma once

#include <cstdint>
#include <compare>

#include "evhta/error.hpp"

namespace evhta {

/// One asynchronous sensor event. Polarity is +1 or -1.
struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint64_t t = 0;  // microseconds
  std::int8_t p = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

struct SensorGeometry {
  std::uint32_t width = 304;
  std::uint32_t height = 240;

  std::size_t pixels() const noexcept { return std::size_t{width} * height; }
  bool contains(std::uint32_t x, std::uint32_t y) const noexcept { return x < width && y < height; }
  void validate() const {
    if (width < 1 || height < 1) throw ConfigError("sensor geometry must be at least 1x1");
  }

  friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

/// Half-open window [start, start + duration) with its index in the stream.
struct WindowSpec {
  std::uint64_t index = 0;
  std::uint64_t start = 0;     // microseconds
  std::uint64_t duration = 1;  // microseconds

  std::uint64_t end() const noexcept { return start + duration; }
  bool contains(std::uint64_t t) const noexcept { return t >= start && t < end(); }

  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

}  // namespace evhta
