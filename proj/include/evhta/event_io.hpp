#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evhta/byteio.hpp"
#include "evhta/error.hpp"
#include "evhta/types.hpp"

namespace evhta {

struct TextParseOptions {
  // Accept 1/0 polarity with 0 meaning -1, instead of 1/-1.
  bool polarity_zero_neg = false;
  // Stable-sort by timestamp instead of rejecting decreasing timestamps.
  bool allow_unsorted = false;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

template <class T>
bool parse_int(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

inline void finish_ordering(std::vector<Event>& events, bool allow_unsorted, std::span<const std::size_t> origin,
                            bool binary) {
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].t >= events[i - 1].t) continue;
    if (allow_unsorted) {
      std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
      return;
    }
    const std::string msg = "decreasing timestamp " + std::to_string(events[i].t) + " after " +
                            std::to_string(events[i - 1].t) + " (pass allow-unsorted to sort)";
    if (binary) throw ParseError(msg, 0, origin[i]);
    throw ParseError("line " + std::to_string(origin[i]) + ": " + msg, origin[i]);
  }
}

}  // namespace detail

/// Parses `t_us,x,y,p` lines. Blank lines and lines starting with '#' are
/// skipped. Events come back in file order (or stably sorted by t when
/// `allow_unsorted` is set).
inline std::vector<Event> parse_text_stream(std::istream& source, const SensorGeometry& geometry,
                                            const TextParseOptions& opts = {}) {
  std::vector<Event> events;
  std::vector<std::size_t> lines;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(source, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;

    std::string_view fields[4];
    std::size_t nf = 0;
    std::string_view rest = body;
    while (true) {
      const auto comma = rest.find(',');
      if (nf == 4) {
        nf = 5;
        break;
      }
      fields[nf++] = rest.substr(0, comma);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    auto fail = [&](const std::string& why) -> ParseError {
      return ParseError("line " + std::to_string(lineno) + ": " + why + " in '" + std::string(body) + "'", lineno);
    };
    if (nf != 4) throw fail("expected 4 comma-separated fields t_us,x,y,p");

    std::uint64_t t;
    std::uint32_t x, y;
    int p;
    if (!detail::parse_int(fields[0], t)) throw fail("bad timestamp");
    if (!detail::parse_int(fields[1], x) || !detail::parse_int(fields[2], y)) throw fail("bad coordinate");
    if (!detail::parse_int(fields[3], p)) throw fail("bad polarity");
    if (opts.polarity_zero_neg) {
      if (p != 0 && p != 1) throw fail("polarity must be 0 or 1");
      if (p == 0) p = -1;
    } else if (p != 1 && p != -1) {
      throw fail("polarity must be 1 or -1");
    }
    if (!geometry.contains(x, y))
      throw fail("coordinate out of bounds for " + std::to_string(geometry.width) + "x" +
                 std::to_string(geometry.height) + " sensor");
    events.push_back(Event{static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), t, static_cast<std::int8_t>(p)});
    lines.push_back(lineno);
  }
  if (source.bad()) throw IoError("read failure while parsing text events");
  detail::finish_ordering(events, opts.allow_unsorted, lines, false);
  return events;
}

// EVH1 layout: "EVH1", u16 width, u16 height, u32 record_count, u32 reserved,
// then record_count x {u64 t_us, u16 x, u16 y, i8 p}, little-endian, packed.
inline constexpr std::string_view kEvh1Magic = "EVH1";
inline constexpr std::size_t kEvh1HeaderSize = 16;
inline constexpr std::size_t kEvh1RecordSize = 13;

struct Evh1Header {
  SensorGeometry geometry;
  std::uint32_t record_count = 0;
};

inline Evh1Header read_evh1_header(std::span<const std::uint8_t> data) {
  bytes::Reader r(data);
  if (r.get_raw(4, "magic") != kEvh1Magic) throw ParseError("bad magic: not an EVH1 event file", 0, 0);
  Evh1Header h;
  h.geometry.width = r.get<std::uint16_t>("width");
  h.geometry.height = r.get<std::uint16_t>("height");
  h.record_count = r.get<std::uint32_t>("record_count");
  const auto reserved = r.get<std::uint32_t>("reserved");
  if (reserved != 0) throw ParseError("EVH1 reserved header field is nonzero", 0, 12);
  return h;
}

/// Decodes a complete EVH1 image. The header geometry must match `geometry`.
inline std::vector<Event> parse_binary_stream(std::span<const std::uint8_t> data, const SensorGeometry& geometry,
                                              bool allow_unsorted = false) {
  const Evh1Header h = read_evh1_header(data);
  if (!(h.geometry == geometry))
    throw ParseError("EVH1 header geometry " + std::to_string(h.geometry.width) + "x" +
                         std::to_string(h.geometry.height) + " does not match expected " +
                         std::to_string(geometry.width) + "x" + std::to_string(geometry.height),
                     0, 4);
  const std::size_t body = data.size() - kEvh1HeaderSize;
  if (body % kEvh1RecordSize != 0) {
    const std::size_t offset = kEvh1HeaderSize + body / kEvh1RecordSize * kEvh1RecordSize;
    throw ParseError("truncated EVH1 record at byte offset " + std::to_string(offset), 0, offset);
  }
  if (body / kEvh1RecordSize != h.record_count) {
    const std::size_t expected = kEvh1HeaderSize + std::size_t{h.record_count} * kEvh1RecordSize;
    throw ParseError("EVH1 header declares " + std::to_string(h.record_count) + " records but file holds " +
                         std::to_string(body / kEvh1RecordSize) + " (truncated at byte offset " +
                         std::to_string(std::min(expected, data.size())) + ")",
                     0, std::min(expected, data.size()));
  }

  bytes::Reader r(data.subspan(kEvh1HeaderSize));
  std::vector<Event> events;
  std::vector<std::size_t> offsets;
  events.reserve(h.record_count);
  offsets.reserve(h.record_count);
  for (std::uint32_t i = 0; i < h.record_count; ++i) {
    const std::size_t off = kEvh1HeaderSize + r.offset();
    Event e;
    e.t = r.get<std::uint64_t>();
    e.x = r.get<std::uint16_t>();
    e.y = r.get<std::uint16_t>();
    e.p = r.get<std::int8_t>();
    if (e.p != 1 && e.p != -1)
      throw ParseError("invalid polarity byte " + std::to_string(int{e.p}) + " at byte offset " + std::to_string(off + 12),
                       0, off + 12);
    if (!geometry.contains(e.x, e.y))
      throw ParseError("coordinate (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                           ") out of bounds at byte offset " + std::to_string(off),
                       0, off);
    events.push_back(e);
    offsets.push_back(off);
  }
  detail::finish_ordering(events, allow_unsorted, offsets, true);
  return events;
}

/// Decodes an EVH1 image, taking the geometry from its header.
inline std::vector<Event> parse_binary_stream(std::span<const std::uint8_t> data, SensorGeometry* geometry_out = nullptr,
                                              bool allow_unsorted = false) {
  const auto h = read_evh1_header(data);
  if (geometry_out) *geometry_out = h.geometry;
  return parse_binary_stream(data, h.geometry, allow_unsorted);
}

inline std::vector<std::uint8_t> write_evh1(std::span<const Event> events, const SensorGeometry& geometry) {
  if (geometry.width > 0xFFFF || geometry.height > 0xFFFF) throw ConfigError("EVH1 geometry exceeds 16-bit range");
  bytes::Writer w;
  w.put_raw(kEvh1Magic);
  w.put(static_cast<std::uint16_t>(geometry.width));
  w.put(static_cast<std::uint16_t>(geometry.height));
  w.put(static_cast<std::uint32_t>(events.size()));
  w.put(std::uint32_t{0});
  for (const Event& e : events) {
    w.put(e.t);
    w.put(e.x);
    w.put(e.y);
    w.put(e.p);
  }
  return w.take();
}

}  // namespace evhta
