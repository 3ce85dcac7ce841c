#pragma once

// Hierarchical temporal aggregation: turns windows of events into pseudo-RGB
// frames through recency-weighted accumulation, reliability-modulated decay of
// two polarity state maps, competitive inhibition with tanh saturation, and a
// log-luminance projection with polarity tints.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "evhta/error.hpp"
#include "evhta/image.hpp"
#include "evhta/params.hpp"
#include "evhta/types.hpp"
#include "evhta/window.hpp"

namespace evhta {

template <class Real>
struct WindowResponse {
  Map<Real> positive;  // P
  Map<Real> negative;  // N

  WindowResponse() = default;
  explicit WindowResponse(const SensorGeometry& g) : positive(g), negative(g) {}

  Map<Real> activity() const {
    Map<Real> a(positive.height(), positive.width());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = positive[i] + negative[i];
    return a;
  }
  Map<Real> signed_response() const {
    Map<Real> s(positive.height(), positive.width());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = positive[i] - negative[i];
    return s;
  }
};

template <class Real>
struct EncoderState {
  Map<Real> plus;   // M+
  Map<Real> minus;  // M-
  std::optional<std::uint64_t> last_window_index;

  EncoderState() = default;
  explicit EncoderState(const SensorGeometry& g) : plus(g), minus(g) {}

  friend bool operator==(const EncoderState&, const EncoderState&) = default;
};

template <class Real>
struct ReliabilityFields {
  Map<Real> reliability;  // R in [0,1]
  Map<Real> decay_rate;   // kappa in [kappa_min, kappa_max], 1/s
};

template <class Real>
struct ProjectionFields {
  Map<Real> polarity_bias;  // Pi in [-1,1]
  Map<Real> intensity;      // U >= 0
  Map<Real> luminance;      // Y >= 0, before clipping
};

/// Raised when a frame sink fails; carries the index of the window being written.
class SinkError : public Error {
 public:
  SinkError(std::uint64_t window, const std::string& what)
      : Error("frame sink failed at window " + std::to_string(window) + ": " + what), window_(window) {}
  std::uint64_t window() const noexcept { return window_; }

 private:
  std::uint64_t window_;
};

// ---------------------------------------------------------------------------
// Pointwise formulas. Map-level operations and the fused encoder loop both go
// through these so the two paths cannot drift apart.

namespace pointwise {

inline double weight(double normalized_time, const HTAParams& p) {
  return p.lambda + (1.0 - p.lambda) * std::pow(normalized_time, p.gamma_t);
}

template <class Real>
inline Real reliability(Real blurred_activity, Real blurred_signed, const HTAParams& p) {
  const Real a = blurred_activity;
  const Real r = (a / (a + static_cast<Real>(p.tau))) * (std::abs(blurred_signed) / (a + static_cast<Real>(p.epsilon)));
  return std::clamp(r, Real{0}, Real{1});
}

template <class Real>
inline Real decay_rate(Real reliability, const HTAParams& p) {
  const Real k = static_cast<Real>(p.kappa0) * (Real{1} + static_cast<Real>(p.alpha) * (Real{1} - reliability));
  return std::clamp(k, static_cast<Real>(p.kappa_min), static_cast<Real>(p.kappa_max));
}

template <class Real>
inline Real decay_factor(Real kappa, Real dt_seconds, const HTAParams& p) {
  const Real base = Real{1} - kappa * dt_seconds;
  return p.b == 1.0 ? base : static_cast<Real>(std::pow(base, static_cast<Real>(p.b)));
}

template <class Real>
inline Real saturate(Real own, Real other, const HTAParams& p) {
  const Real cap = static_cast<Real>(p.cap);
  const Real excess = std::max(own - static_cast<Real>(p.beta) * other, Real{0});
  return cap * std::tanh(excess / cap);
}

struct Projection {
  double bias;
  double intensity;
  double luminance;
  double rgb[3];
};

template <class Real>
inline Projection project(Real m_plus, Real m_minus, const HTAParams& p) {
  Projection out{};
  const double mp = m_plus, mm = m_minus;
  if (mp == 0.0 && mm == 0.0) return out;
  const double diff = mp - mm;
  out.bias = diff / (mp + mm + p.epsilon);
  out.intensity = (1.0 - p.eta) * std::max(mp, mm) + p.eta * std::abs(diff);
  out.luminance = std::log1p(p.gain * out.intensity) / std::log1p(p.gain * p.effective_sigma());
  const double y = std::clamp(out.luminance, 0.0, 1.0);
  const double red = std::clamp(y + p.mu * std::max(out.bias, 0.0), 0.0, 1.0);
  const double blue = std::clamp(y + p.mu * std::max(-out.bias, 0.0), 0.0, 1.0);
  out.rgb[0] = std::pow(red, p.gamma_c);
  out.rgb[1] = std::pow(y, p.gamma_c);
  out.rgb[2] = std::pow(blue, p.gamma_c);
  return out;
}

}  // namespace pointwise

// ---------------------------------------------------------------------------
// Stage operations.

/// Recency weight of an event at time t inside `window`, in [lambda, 1].
inline double intra_weight(std::uint64_t t, const WindowSpec& window, const HTAParams& params) {
  if (!window.contains(t))
    throw Error("timestamp " + std::to_string(t) + " outside window [" + std::to_string(window.start) + ", " +
                std::to_string(window.end()) + ")");
  const double u = static_cast<double>(t - window.start) / static_cast<double>(window.duration);
  return pointwise::weight(u, params);
}

/// Weighted per-polarity accumulation, summed in event order.
template <class Real = double>
WindowResponse<Real> accumulate_window(std::span<const Event> events, const WindowSpec& window,
                                       const SensorGeometry& geometry, const HTAParams& params) {
  WindowResponse<Real> r(geometry);
  for (const Event& e : events) {
    if (!geometry.contains(e.x, e.y)) throw Error("event outside sensor geometry");
    const auto w = static_cast<Real>(intra_weight(e.t, window, params));
    (e.p > 0 ? r.positive : r.negative)(e.y, e.x) += w;
  }
  return r;
}

namespace detail {

// Separable clipped box sum: out = mean over the in-bounds part of the
// (2r+1)^2 neighborhood. `row_tmp` must have the map's size.
template <class Real>
void box_average_into(const Real* in, Real* row_tmp, Real* out, std::size_t h, std::size_t w, int radius) {
  const std::size_t r = static_cast<std::size_t>(radius);
  for (std::size_t y = 0; y < h; ++y) {
    const Real* src = in + y * w;
    Real* dst = row_tmp + y * w;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t x0 = x >= r ? x - r : 0;
      const std::size_t x1 = std::min(w - 1, x + r);
      Real s = 0;
      for (std::size_t i = x0; i <= x1; ++i) s += src[i];
      dst[x] = s;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t y0 = y >= r ? y - r : 0;
    const std::size_t y1 = std::min(h - 1, y + r);
    Real* dst = out + y * w;
    for (std::size_t x = 0; x < w; ++x) dst[x] = 0;
    for (std::size_t j = y0; j <= y1; ++j) {
      const Real* src = row_tmp + j * w;
      for (std::size_t x = 0; x < w; ++x) dst[x] += src[x];
    }
    const auto ny = static_cast<Real>(y1 - y0 + 1);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t x0 = x >= r ? x - r : 0;
      const std::size_t x1 = std::min(w - 1, x + r);
      dst[x] /= ny * static_cast<Real>(x1 - x0 + 1);
    }
  }
}

}  // namespace detail

/// Border-aware local mean over a (2r+1)x(2r+1) window; radius 0 is the identity.
template <class Real>
Map<Real> box_average(const Map<Real>& map, int radius) {
  if (radius < 0) throw Error("box_average radius must be >= 0");
  if (radius == 0 || map.size() == 0) return map;
  Map<Real> tmp(map.height(), map.width()), out(map.height(), map.width());
  detail::box_average_into(map.data(), tmp.data(), out.data(), map.height(), map.width(), radius);
  return out;
}

template <class Real>
Map<Real> reliability(const WindowResponse<Real>& response, const HTAParams& params) {
  const Map<Real> a = box_average(response.activity(), params.blur_radius);
  const Map<Real> s = box_average(response.signed_response(), params.blur_radius);
  Map<Real> r(a.height(), a.width());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = pointwise::reliability(a[i], s[i], params);
  return r;
}

template <class Real>
Map<Real> adaptive_decay(const Map<Real>& reliability_map, const HTAParams& params) {
  Map<Real> k(reliability_map.height(), reliability_map.width());
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = pointwise::decay_rate(reliability_map[i], params);
  return k;
}

/// Decayed state plus injected window response, before inhibition.
template <class Real>
std::pair<Map<Real>, Map<Real>> update_state(const EncoderState<Real>& state, const WindowResponse<Real>& response,
                                             const Map<Real>& decay_rate, double dt_seconds,
                                             const HTAParams& params) {
  if (!state.plus.same_shape(response.positive) || !decay_rate.same_shape(response.positive))
    throw ShapeError("update_state: map shapes differ");
  Map<Real> plus(state.plus.height(), state.plus.width()), minus(plus.height(), plus.width());
  const auto dt = static_cast<Real>(dt_seconds);
  const auto c = static_cast<Real>(params.c);
  for (std::size_t i = 0; i < plus.size(); ++i) {
    const Real f = pointwise::decay_factor(decay_rate[i], dt, params);
    plus[i] = f * state.plus[i] + c * response.positive[i];
    minus[i] = f * state.minus[i] + c * response.negative[i];
  }
  return {std::move(plus), std::move(minus)};
}

/// Polarity-competitive inhibition followed by cap * tanh(x / cap).
template <class Real>
EncoderState<Real> inhibit_and_saturate(const Map<Real>& plus, const Map<Real>& minus, const HTAParams& params) {
  if (!plus.same_shape(minus)) throw ShapeError("inhibit_and_saturate: map shapes differ");
  EncoderState<Real> s;
  s.plus = Map<Real>(plus.height(), plus.width());
  s.minus = Map<Real>(plus.height(), plus.width());
  for (std::size_t i = 0; i < plus.size(); ++i) {
    s.plus[i] = pointwise::saturate(plus[i], minus[i], params);
    s.minus[i] = pointwise::saturate(minus[i], plus[i], params);
  }
  return s;
}

template <class Real>
std::pair<ProjectionFields<Real>, FloatFrame> project_pseudo_rgb(const EncoderState<Real>& state,
                                                                  const HTAParams& params) {
  const std::size_t h = state.plus.height(), w = state.plus.width();
  ProjectionFields<Real> f{Map<Real>(h, w), Map<Real>(h, w), Map<Real>(h, w)};
  FloatFrame frame(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    const auto pr = pointwise::project(state.plus[i], state.minus[i], params);
    f.polarity_bias[i] = static_cast<Real>(pr.bias);
    f.intensity[i] = static_cast<Real>(pr.intensity);
    f.luminance[i] = static_cast<Real>(pr.luminance);
    for (int ch = 0; ch < 3; ++ch) frame.pixels[i * 3 + ch] = pr.rgb[ch];
  }
  return {std::move(f), std::move(frame)};
}

/// round-half-away-from-zero(v * 255), with v clamped to [0,1].
inline std::uint8_t quantize_channel(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline PseudoRGBFrame quantize(const FloatFrame& frame, const WindowSpec& window = {}) {
  PseudoRGBFrame out{RgbImage<std::uint8_t>(frame.height, frame.width), window};
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) out.image.pixels[i] = quantize_channel(frame.pixels[i]);
  return out;
}

// ---------------------------------------------------------------------------

/// Streaming encoder. Holds the polarity state across windows; windows must be
/// fed in index order. Real selects map precision (double by default).
template <class Real = double>
class BasicEncoder {
 public:
  BasicEncoder(const SensorGeometry& geometry, const HTAParams& params) : geometry_(geometry), params_(params) {
    geometry_.validate();
    params_.validate();
    state_ = EncoderState<Real>(geometry_);
    response_ = WindowResponse<Real>(geometry_);
    blur_a_ = Map<Real>(geometry_);
    blur_s_ = Map<Real>(geometry_);
    tmp_a_ = Map<Real>(geometry_);
    tmp_s_ = Map<Real>(geometry_);
    if (params_.dt_us <= kMaxWeightTable) {
      weight_table_.resize(params_.dt_us);
      for (std::uint64_t o = 0; o < params_.dt_us; ++o)
        weight_table_[o] = static_cast<Real>(
            pointwise::weight(static_cast<double>(o) / static_cast<double>(params_.dt_us), params_));
    }
  }

  const SensorGeometry& geometry() const noexcept { return geometry_; }
  const HTAParams& params() const noexcept { return params_; }
  const EncoderState<Real>& state() const noexcept { return state_; }

  /// Window response of the most recent advance().
  const WindowResponse<Real>& last_response() const noexcept { return response_; }

  void reset() { state_ = EncoderState<Real>(geometry_); }

  void restore(EncoderState<Real> state) {
    if (state.plus.height() != geometry_.height || state.plus.width() != geometry_.width ||
        !state.plus.same_shape(state.minus))
      throw ShapeError("checkpoint state does not match sensor geometry");
    state_ = std::move(state);
  }

  /// Accumulate, reliability, decay, update, inhibit/saturate: everything up to
  /// (not including) projection. Events must lie inside `window`.
  void advance(const WindowSpec& window, std::span<const Event> events) {
    if (window.duration != params_.dt_us) throw Error("window duration differs from configured dt_us");
    if (state_.last_window_index && window.index <= *state_.last_window_index)
      throw Error("windows must be encoded in increasing index order");
    accumulate(window, events);
    propagate();
    state_.last_window_index = window.index;
  }

  FloatFrame project() const { return project_pseudo_rgb(state_, params_).second; }

  /// Runs the full pipeline for one window and returns the pre-quantization frame.
  FloatFrame encode_window_float(const WindowSpec& window, std::span<const Event> events) {
    advance(window, events);
    FloatFrame frame(geometry_.height, geometry_.width);
    for (std::size_t i = 0; i < geometry_.pixels(); ++i) {
      if (state_.plus[i] == 0 && state_.minus[i] == 0) continue;
      const auto pr = pointwise::project(state_.plus[i], state_.minus[i], params_);
      frame.pixels[i * 3 + 0] = pr.rgb[0];
      frame.pixels[i * 3 + 1] = pr.rgb[1];
      frame.pixels[i * 3 + 2] = pr.rgb[2];
    }
    return frame;
  }

  PseudoRGBFrame encode_window(const WindowSpec& window, std::span<const Event> events) {
    return quantize(encode_window_float(window, events), window);
  }

 private:
  static constexpr std::uint64_t kMaxWeightTable = std::uint64_t{1} << 22;

  void accumulate(const WindowSpec& window, std::span<const Event> events) {
    response_.positive.fill(0);
    response_.negative.fill(0);
    Real* pos = response_.positive.data();
    Real* neg = response_.negative.data();
    const std::size_t w = geometry_.width;
    const bool table = !weight_table_.empty();
    for (const Event& e : events) {
      if (e.t < window.start || e.t >= window.end()) throw Error("event outside its window");
      if (e.x >= geometry_.width || e.y >= geometry_.height) throw Error("event outside sensor geometry");
      const std::uint64_t offset = e.t - window.start;
      const Real wgt = table ? weight_table_[offset]
                             : static_cast<Real>(pointwise::weight(
                                   static_cast<double>(offset) / static_cast<double>(window.duration), params_));
      (e.p > 0 ? pos : neg)[e.y * w + e.x] += wgt;
    }
  }

  void propagate() {
    const std::size_t n = geometry_.pixels();
    const Real* pos = response_.positive.data();
    const Real* neg = response_.negative.data();
    for (std::size_t i = 0; i < n; ++i) {
      tmp_a_[i] = pos[i] + neg[i];
      tmp_s_[i] = pos[i] - neg[i];
    }
    const Real* ba = tmp_a_.data();
    const Real* bs = tmp_s_.data();
    if (params_.blur_radius > 0) {
      box_into(tmp_a_, blur_a_);
      box_into(tmp_s_, blur_s_);
      ba = blur_a_.data();
      bs = blur_s_.data();
    }
    const auto dt = static_cast<Real>(params_.dt_seconds());
    const auto c = static_cast<Real>(params_.c);
    Real* mp = state_.plus.data();
    Real* mm = state_.minus.data();
    for (std::size_t i = 0; i < n; ++i) {
      const Real r = pointwise::reliability(ba[i], bs[i], params_);
      const Real k = pointwise::decay_rate(r, params_);
      const Real f = pointwise::decay_factor(k, dt, params_);
      const Real tp = f * mp[i] + c * pos[i];
      const Real tm = f * mm[i] + c * neg[i];
      mp[i] = pointwise::saturate(tp, tm, params_);
      mm[i] = pointwise::saturate(tm, tp, params_);
    }
  }

  // Blurs `src` into `dst` through a row-sum scratch buffer.
  void box_into(const Map<Real>& src, Map<Real>& dst) {
    row_tmp_.resize(src.size());
    detail::box_average_into(src.data(), row_tmp_.data(), dst.data(), src.height(), src.width(),
                             params_.blur_radius);
  }

  SensorGeometry geometry_;
  HTAParams params_;
  EncoderState<Real> state_;
  WindowResponse<Real> response_;
  Map<Real> blur_a_, blur_s_, tmp_a_, tmp_s_;
  std::vector<Real> row_tmp_;
  std::vector<Real> weight_table_;
};

using Encoder = BasicEncoder<double>;

/// Encodes windows in order, handing each frame to `sink(const PseudoRGBFrame&)`.
/// Empty windows still decay the state and emit a frame. Returns the frame count.
template <class Real, class Sink>
std::size_t encode_stream(std::span<const Window> windows, BasicEncoder<Real>& encoder, Sink&& sink) {
  std::size_t frames = 0;
  for (const Window& w : windows) {
    const PseudoRGBFrame frame = encoder.encode_window(w.spec, w.events);
    try {
      sink(frame);
    } catch (const SinkError&) {
      throw;
    } catch (const std::exception& e) {
      throw SinkError(w.spec.index, e.what());
    }
    ++frames;
  }
  return frames;
}

template <class Sink>
std::size_t encode_stream(std::span<const Window> windows, const SensorGeometry& geometry, const HTAParams& params,
                          Sink&& sink) {
  Encoder encoder(geometry, params);
  return encode_stream(windows, encoder, std::forward<Sink>(sink));
}

}  // namespace evhta
