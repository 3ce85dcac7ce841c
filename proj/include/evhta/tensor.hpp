#pragma once

// Dense f32 tensors and the FHW1 named-tensor container:
//   "FHW1", u32 version, then until end of file, per tensor:
//   u16 name length, UTF-8 name, u8 rank, u32 dims[rank], f32 data (row-major),
//   all little-endian.

#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evhta/byteio.hpp"
#include "evhta/error.hpp"

namespace evhta {

struct Tensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::uint32_t> s, float fill = 0.0f) : shape(std::move(s)), data(count(shape), fill) {}

  static std::size_t count(std::span<const std::uint32_t> s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }
  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::uint32_t dim(std::size_t i) const { return shape.at(i); }

  float& operator[](std::size_t i) noexcept { return data[i]; }
  float operator[](std::size_t i) const noexcept { return data[i]; }

  // rank-3 (C, H, W) access
  float& at(std::size_t c, std::size_t y, std::size_t x) noexcept { return data[(c * shape[1] + y) * shape[2] + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data[(c * shape[1] + y) * shape[2] + x];
  }

  std::string shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Ordered name -> tensor table; order is preserved through FHW1 round trips.
class TensorTable {
 public:
  void set(std::string name, Tensor t) {
    for (auto& [n, v] : entries_) {
      if (n == name) {
        v = std::move(t);
        return;
      }
    }
    entries_.emplace_back(std::move(name), std::move(t));
  }

  const Tensor* find(std::string_view name) const {
    for (const auto& [n, v] : entries_)
      if (n == name) return &v;
    return nullptr;
  }

  const Tensor& get(std::string_view name) const {
    if (const Tensor* t = find(name)) return *t;
    throw ParseError("missing tensor '" + std::string(name) + "'");
  }

  /// Fetches `name` and checks its shape.
  const Tensor& get(std::string_view name, std::span<const std::uint32_t> shape) const {
    const Tensor& t = get(name);
    if (!std::equal(t.shape.begin(), t.shape.end(), shape.begin(), shape.end())) {
      Tensor expect;
      expect.shape.assign(shape.begin(), shape.end());
      throw ShapeError("tensor '" + std::string(name) + "' has shape " + t.shape_string() + ", expected " +
                       expect.shape_string());
    }
    return t;
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  friend bool operator==(const TensorTable&, const TensorTable&) = default;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

inline constexpr std::string_view kFhw1Magic = "FHW1";
inline constexpr std::uint32_t kFhw1Version = 1;

inline std::vector<std::uint8_t> write_fhw1(const TensorTable& table) {
  bytes::Writer w;
  w.put_raw(kFhw1Magic);
  w.put(kFhw1Version);
  for (const auto& [name, t] : table.entries()) {
    if (name.size() > 0xFFFF) throw ShapeError("tensor name too long");
    if (t.rank() > 0xFF) throw ShapeError("tensor rank too large");
    if (Tensor::count(t.shape) != t.size()) throw ShapeError("tensor '" + name + "' payload/shape mismatch");
    w.put(static_cast<std::uint16_t>(name.size()));
    w.put_raw(name);
    w.put(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape) w.put(d);
    for (float v : t.data) w.put(v);
  }
  return w.take();
}

inline TensorTable read_fhw1(std::span<const std::uint8_t> data) {
  bytes::Reader r(data);
  if (r.get_raw(4, "magic") != kFhw1Magic) throw ParseError("bad magic: not an FHW1 weight file", 0, 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kFhw1Version) throw ParseError("unsupported FHW1 version " + std::to_string(version), 0, 4);
  TensorTable table;
  while (!r.done()) {
    const auto name_len = r.get<std::uint16_t>("name length");
    std::string name(r.get_raw(name_len, "tensor name"));
    const auto rank = r.get<std::uint8_t>("rank");
    Tensor t;
    t.shape.resize(rank);
    for (auto& d : t.shape) d = r.get<std::uint32_t>("dimension");
    const std::size_t n = Tensor::count(t.shape);
    if (r.remaining() / sizeof(float) < n)
      throw ParseError("truncated data for tensor '" + name + "' at byte offset " + std::to_string(r.offset()), 0,
                       r.offset());
    t.data.resize(n);
    for (auto& v : t.data) v = r.get<float>();
    if (table.find(name)) throw ParseError("duplicate tensor '" + name + "'", 0, r.offset());
    table.set(std::move(name), std::move(t));
  }
  return table;
}

}  // namespace evhta
