#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "evhta/types.hpp"

namespace evhta {

/// Dense row-major H x W single-channel map.
template <class T>
class Map {
 public:
  Map() = default;
  Map(std::size_t height, std::size_t width, T fill = T{}) : h_(height), w_(width), data_(height * width, fill) {}
  explicit Map(const SensorGeometry& g, T fill = T{}) : Map(g.height, g.width, fill) {}

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t y, std::size_t x) noexcept { return data_[y * w_ + x]; }
  const T& operator()(std::size_t y, std::size_t x) const noexcept { return data_[y * w_ + x]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Map& o) const noexcept { return h_ == o.h_ && w_ == o.w_; }

  friend bool operator==(const Map&, const Map&) = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<T> data_;
};

/// H x W x 3 interleaved image (channel fastest).
template <class T>
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> pixels;

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w * 3, T{}) {}

  T& at(std::size_t y, std::size_t x, std::size_t c) noexcept { return pixels[(y * width + x) * 3 + c]; }
  const T& at(std::size_t y, std::size_t x, std::size_t c) const noexcept { return pixels[(y * width + x) * 3 + c]; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Channel order: R = positive-polarity biased, G = luminance, B = negative-polarity biased.
using FloatFrame = RgbImage<double>;

struct PseudoRGBFrame {
  RgbImage<std::uint8_t> image;
  WindowSpec window;

  std::size_t height() const noexcept { return image.height; }
  std::size_t width() const noexcept { return image.width; }
  std::span<const std::uint8_t> bytes() const noexcept { return image.pixels; }
};

}  // namespace evhta
