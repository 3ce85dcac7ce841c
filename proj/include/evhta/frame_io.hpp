#pragma once

// On-disk formats for frames and encoder state:
//   HTF1  "HTF1", u32 height, u32 width, u32 channels, u32 dtype (0 = u8, 1 = f32),
//         then planar channel data (channel-major, each plane row-major), little-endian.
//   HTS1  "HTS1", u32 height, u32 width, i64 last_window_index (-1 = unset),
//         then M+ and M- as f32 row-major.
// plus an 8-bit RGB PNG writer (zlib for deflate and crc32).

#include <zlib.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "evhta/byteio.hpp"
#include "evhta/error.hpp"
#include "evhta/hta.hpp"
#include "evhta/image.hpp"

namespace evhta {

enum class HtfDtype : std::uint32_t { u8 = 0, f32 = 1 };

struct HtfTensor {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  HtfDtype dtype = HtfDtype::u8;
  std::vector<std::uint8_t> u8;  // used when dtype == u8
  std::vector<float> f32;        // used when dtype == f32

  std::size_t elements() const noexcept { return std::size_t{height} * width * channels; }
  friend bool operator==(const HtfTensor&, const HtfTensor&) = default;
};

inline constexpr std::string_view kHtf1Magic = "HTF1";
inline constexpr std::string_view kHts1Magic = "HTS1";

inline std::vector<std::uint8_t> write_htf1(const HtfTensor& t) {
  const std::size_t n = t.elements();
  if ((t.dtype == HtfDtype::u8 ? t.u8.size() : t.f32.size()) != n)
    throw ShapeError("HTF1 tensor payload does not match its header shape");
  bytes::Writer w;
  w.put_raw(kHtf1Magic);
  w.put(t.height);
  w.put(t.width);
  w.put(t.channels);
  w.put(static_cast<std::uint32_t>(t.dtype));
  if (t.dtype == HtfDtype::u8) {
    w.put_raw(t.u8);
  } else {
    for (float v : t.f32) w.put(v);
  }
  return w.take();
}

inline HtfTensor read_htf1(std::span<const std::uint8_t> data) {
  bytes::Reader r(data);
  if (r.get_raw(4, "magic") != kHtf1Magic) throw ParseError("bad magic: not an HTF1 tensor file", 0, 0);
  HtfTensor t;
  t.height = r.get<std::uint32_t>("height");
  t.width = r.get<std::uint32_t>("width");
  t.channels = r.get<std::uint32_t>("channels");
  const auto dtype = r.get<std::uint32_t>("dtype");
  if (dtype > 1) throw ParseError("HTF1 dtype " + std::to_string(dtype) + " unknown", 0, 16);
  t.dtype = static_cast<HtfDtype>(dtype);
  const std::size_t n = t.elements();
  const std::size_t elem = t.dtype == HtfDtype::u8 ? 1 : 4;
  if (r.remaining() != n * elem)
    throw ParseError("HTF1 payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                         std::to_string(n * elem),
                     0, r.offset() + std::min(r.remaining(), n * elem));
  if (t.dtype == HtfDtype::u8) {
    const auto raw = r.get_raw(n);
    t.u8.assign(raw.begin(), raw.end());
  } else {
    t.f32.resize(n);
    for (auto& v : t.f32) v = r.get<float>();
  }
  return t;
}

/// Interleaved HxWx3 frame to a planar u8 tensor.
inline HtfTensor to_htf(const RgbImage<std::uint8_t>& img) {
  HtfTensor t{static_cast<std::uint32_t>(img.height), static_cast<std::uint32_t>(img.width), 3, HtfDtype::u8, {}, {}};
  t.u8.resize(t.elements());
  const std::size_t plane = img.height * img.width;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) t.u8[c * plane + i] = img.pixels[i * 3 + c];
  return t;
}

inline HtfTensor to_htf(const FloatFrame& img) {
  HtfTensor t{static_cast<std::uint32_t>(img.height), static_cast<std::uint32_t>(img.width), 3, HtfDtype::f32, {}, {}};
  t.f32.resize(t.elements());
  const std::size_t plane = img.height * img.width;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) t.f32[c * plane + i] = static_cast<float>(img.pixels[i * 3 + c]);
  return t;
}

inline RgbImage<std::uint8_t> rgb_from_htf(const HtfTensor& t) {
  if (t.dtype != HtfDtype::u8 || t.channels != 3) throw ShapeError("expected a 3-channel u8 HTF1 tensor");
  RgbImage<std::uint8_t> img(t.height, t.width);
  const std::size_t plane = std::size_t{t.height} * t.width;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.pixels[i * 3 + c] = t.u8[c * plane + i];
  return img;
}

// ---------------------------------------------------------------------------

template <class Real>
std::vector<std::uint8_t> write_hts1(const EncoderState<Real>& s) {
  if (!s.plus.same_shape(s.minus)) throw ShapeError("state maps differ in shape");
  bytes::Writer w;
  w.put_raw(kHts1Magic);
  w.put(static_cast<std::uint32_t>(s.plus.height()));
  w.put(static_cast<std::uint32_t>(s.plus.width()));
  w.put(s.last_window_index ? static_cast<std::int64_t>(*s.last_window_index) : std::int64_t{-1});
  for (auto v : s.plus.values()) w.put(static_cast<float>(v));
  for (auto v : s.minus.values()) w.put(static_cast<float>(v));
  return w.take();
}

template <class Real = double>
EncoderState<Real> read_hts1(std::span<const std::uint8_t> data) {
  bytes::Reader r(data);
  if (r.get_raw(4, "magic") != kHts1Magic) throw ParseError("bad magic: not an HTS1 checkpoint", 0, 0);
  const auto h = r.get<std::uint32_t>("height");
  const auto w = r.get<std::uint32_t>("width");
  const auto last = r.get<std::int64_t>("last_window_index");
  const std::size_t n = std::size_t{h} * w;
  if (r.remaining() != 2 * n * sizeof(float))
    throw ParseError("HTS1 payload size does not match " + std::to_string(w) + "x" + std::to_string(h), 0,
                     r.offset());
  EncoderState<Real> s;
  s.plus = Map<Real>(h, w);
  s.minus = Map<Real>(h, w);
  for (std::size_t i = 0; i < n; ++i) s.plus[i] = static_cast<Real>(r.get<float>());
  for (std::size_t i = 0; i < n; ++i) s.minus[i] = static_cast<Real>(r.get<float>());
  if (last >= 0) s.last_window_index = static_cast<std::uint64_t>(last);
  return s;
}

// ---------------------------------------------------------------------------

namespace detail {

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_png_chunk(std::vector<std::uint8_t>& out, const char (&type)[5], std::span<const std::uint8_t> body) {
  put_be32(out, static_cast<std::uint32_t>(body.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  const auto crc = ::crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

/// Encodes an 8-bit RGB PNG (color type 2, no interlace, filter 0 on every row).
inline std::vector<std::uint8_t> encode_png(const RgbImage<std::uint8_t>& img) {
  std::vector<std::uint8_t> raw;
  raw.reserve(img.height * (img.width * 3 + 1));
  for (std::size_t y = 0; y < img.height; ++y) {
    raw.push_back(0);
    const auto* row = img.pixels.data() + y * img.width * 3;
    raw.insert(raw.end(), row, row + img.width * 3);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("zlib compression failed");
  z.resize(zlen);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});
  detail::put_png_chunk(out, "IHDR", ihdr);
  detail::put_png_chunk(out, "IDAT", z);
  detail::put_png_chunk(out, "IEND", {});
  return out;
}

/// Decodes PNGs produced by encode_png (8-bit RGB, filter 0 only). Used to read frames back in tests.
inline RgbImage<std::uint8_t> decode_png(std::span<const std::uint8_t> data) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (data.size() < 8 || std::memcmp(data.data(), sig, 8) != 0) throw ParseError("not a PNG file", 0, 0);
  auto be32 = [&](std::size_t at) {
    if (at + 4 > data.size()) throw ParseError("truncated PNG", 0, at);
    return std::uint32_t{data[at]} << 24 | std::uint32_t{data[at + 1]} << 16 | std::uint32_t{data[at + 2]} << 8 |
           data[at + 3];
  };
  std::size_t pos = 8;
  std::uint32_t w = 0, h = 0;
  std::vector<std::uint8_t> z;
  while (pos + 8 <= data.size()) {
    const auto len = be32(pos);
    const std::string_view type(reinterpret_cast<const char*>(data.data() + pos + 4), 4);
    if (pos + 12 + len > data.size()) throw ParseError("truncated PNG chunk", 0, pos);
    const auto* body = data.data() + pos + 8;
    if (type == "IHDR") {
      w = be32(pos + 8);
      h = be32(pos + 12);
      if (body[8] != 8 || body[9] != 2 || body[12] != 0) throw ParseError("unsupported PNG variant", 0, pos);
    } else if (type == "IDAT") {
      z.insert(z.end(), body, body + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  std::vector<std::uint8_t> raw(std::size_t{h} * (std::size_t{w} * 3 + 1));
  uLongf rlen = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &rlen, z.data(), static_cast<uLong>(z.size())) != Z_OK || rlen != raw.size())
    throw ParseError("corrupt PNG image data", 0, 0);
  RgbImage<std::uint8_t> img(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* row = raw.data() + y * (std::size_t{w} * 3 + 1);
    if (row[0] != 0) throw ParseError("unsupported PNG row filter", 0, 0);
    std::memcpy(img.pixels.data() + y * w * 3, row + 1, std::size_t{w} * 3);
  }
  return img;
}

}  // namespace evhta
