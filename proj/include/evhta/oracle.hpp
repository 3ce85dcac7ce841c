#pragma once

// Brute-force reference for the streaming encoder. Shares no code with hta.hpp:
// own windowing, per-event pow() weights, naive neighborhood means, direct
// formulas in 64-bit arithmetic. Slow by design.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "evhta/image.hpp"
#include "evhta/params.hpp"
#include "evhta/types.hpp"

namespace evhta::oracle {

struct OracleFrame {
  std::uint64_t window_index = 0;
  FloatFrame values;              // pre-quantization, [0,1]
  RgbImage<std::uint8_t> pixels;  // quantized
};

struct CountMaps {
  std::vector<std::uint32_t> positive;  // row-major H x W
  std::vector<std::uint32_t> negative;
};

/// Unweighted per-pixel polarity counts (the 2D histogram representation).
inline CountMaps oracle_histogram2d(std::span<const Event> events, const SensorGeometry& geometry) {
  CountMaps m{std::vector<std::uint32_t>(geometry.pixels(), 0), std::vector<std::uint32_t>(geometry.pixels(), 0)};
  for (const Event& e : events) {
    const std::size_t idx = std::size_t{e.y} * geometry.width + e.x;
    if (e.p == 1)
      m.positive[idx] += 1;
    else
      m.negative[idx] += 1;
  }
  return m;
}

namespace detail {

inline double clip(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline std::uint8_t to_byte(double v) {
  const double scaled = clip(v, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::floor(scaled + 0.5));  // non-negative, so half rounds away from zero
}

inline double local_mean(const std::vector<double>& m, long h, long w, long y, long x, long r) {
  double sum = 0.0;
  long count = 0;
  for (long dy = -r; dy <= r; ++dy) {
    for (long dx = -r; dx <= r; ++dx) {
      const long yy = y + dy, xx = x + dx;
      if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
      sum += m[static_cast<std::size_t>(yy * w + xx)];
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

}  // namespace detail

/// Recomputes every window from scratch. Windows are [t0 + k dt, t0 + (k+1) dt),
/// t0 defaulting to the first timestamp floored to a multiple of dt.
inline std::vector<OracleFrame> oracle_encode(std::span<const Event> events, const SensorGeometry& geometry,
                                              const HTAParams& p, std::optional<std::uint64_t> t0 = std::nullopt) {
  std::vector<OracleFrame> frames;
  if (events.empty()) return frames;
  const std::uint64_t dt = p.dt_us;
  const std::uint64_t origin = t0 ? *t0 : (events[0].t / dt) * dt;
  std::uint64_t last_t = 0;
  for (const Event& e : events) last_t = std::max(last_t, e.t);
  const std::uint64_t windows = (last_t - origin) / dt + 1;

  const long H = geometry.height, W = geometry.width;
  const std::size_t n = geometry.pixels();
  const double dt_s = static_cast<double>(dt) / 1e6;
  const double sigma = p.sigma ? *p.sigma : p.cap;

  std::vector<double> m_plus(n, 0.0), m_minus(n, 0.0);

  for (std::uint64_t k = 0; k < windows; ++k) {
    const std::uint64_t Tk = origin + k * dt;

    // weighted accumulation, arrival order
    std::vector<double> P(n, 0.0), N(n, 0.0);
    for (const Event& e : events) {
      if (e.t < Tk || e.t >= Tk + dt) continue;
      const double omega =
          p.lambda + (1.0 - p.lambda) * std::pow(static_cast<double>(e.t - Tk) / static_cast<double>(dt), p.gamma_t);
      const std::size_t idx = static_cast<std::size_t>(e.y) * W + e.x;
      if (e.p == 1)
        P[idx] += omega;
      else
        N[idx] += omega;
    }

    std::vector<double> A(n), S(n);
    for (std::size_t i = 0; i < n; ++i) {
      A[i] = P[i] + N[i];
      S[i] = P[i] - N[i];
    }

    OracleFrame out;
    out.window_index = k;
    out.values = FloatFrame(geometry.height, geometry.width);
    out.pixels = RgbImage<std::uint8_t>(geometry.height, geometry.width);

    for (long y = 0; y < H; ++y) {
      for (long x = 0; x < W; ++x) {
        const std::size_t i = static_cast<std::size_t>(y * W + x);
        const double bA = detail::local_mean(A, H, W, y, x, p.blur_radius);
        const double bS = detail::local_mean(S, H, W, y, x, p.blur_radius);

        const double R = detail::clip(bA / (bA + p.tau) * (std::fabs(bS) / (bA + p.epsilon)), 0.0, 1.0);
        const double kappa = detail::clip(p.kappa0 * (1.0 + p.alpha * (1.0 - R)), p.kappa_min, p.kappa_max);
        const double decay = std::pow(1.0 - kappa * dt_s, p.b);
        const double mt_plus = decay * m_plus[i] + p.c * P[i];
        const double mt_minus = decay * m_minus[i] + p.c * N[i];

        m_plus[i] = p.cap * std::tanh(std::max(mt_plus - p.beta * mt_minus, 0.0) / p.cap);
        m_minus[i] = p.cap * std::tanh(std::max(mt_minus - p.beta * mt_plus, 0.0) / p.cap);

        const double mp = m_plus[i], mm = m_minus[i];
        const double Pi = (mp - mm) / (mp + mm + p.epsilon);
        const double U = (1.0 - p.eta) * std::max(mp, mm) + p.eta * std::fabs(mp - mm);
        const double Y = detail::clip(std::log(1.0 + p.gain * U) / std::log(1.0 + p.gain * sigma), 0.0, 1.0);
        const double rgb[3] = {
            std::pow(detail::clip(Y + p.mu * std::max(Pi, 0.0), 0.0, 1.0), p.gamma_c),
            std::pow(Y, p.gamma_c),
            std::pow(detail::clip(Y + p.mu * std::max(-Pi, 0.0), 0.0, 1.0), p.gamma_c),
        };
        for (int c = 0; c < 3; ++c) {
          out.values.at(y, x, c) = rgb[c];
          out.pixels.at(y, x, c) = detail::to_byte(rgb[c]);
        }
      }
    }
    frames.push_back(std::move(out));
  }
  return frames;
}

/// Result of comparing one encoder frame against its oracle counterpart.
struct FrameComparison {
  double max_divergence = 0.0;        // max |encoder - oracle| before quantization
  std::size_t boundary_cases = 0;     // 1-LSB differences explained by a rounding threshold
  std::size_t unexplained = 0;        // byte differences that are not boundary cases

  void merge(const FrameComparison& o) {
    max_divergence = std::max(max_divergence, o.max_divergence);
    boundary_cases += o.boundary_cases;
    unexplained += o.unexplained;
  }
  bool passes(double tolerance) const { return max_divergence <= tolerance && unexplained == 0; }
};

/// A quantized disagreement counts as a boundary case only when it is 1 LSB and
/// both pre-quantization values lie within `tolerance` of a rounding threshold
/// ((q + 0.5) / 255) that separates them.
inline FrameComparison compare_frames(const FloatFrame& enc_values, std::span<const std::uint8_t> enc_pixels,
                                      const OracleFrame& ref, double tolerance) {
  FrameComparison c;
  for (std::size_t i = 0; i < ref.values.pixels.size(); ++i) {
    const double a = enc_values.pixels[i], b = ref.values.pixels[i];
    c.max_divergence = std::max(c.max_divergence, std::fabs(a - b));
    const int qa = enc_pixels[i], qb = ref.pixels.pixels[i];
    if (qa == qb) continue;
    const double threshold = (std::min(qa, qb) + 0.5) / 255.0;
    const bool straddles = std::abs(qa - qb) == 1 && std::fabs(a - threshold) <= tolerance &&
                           std::fabs(b - threshold) <= tolerance;
    if (straddles)
      ++c.boundary_cases;
    else
      ++c.unexplained;
  }
  return c;
}

}  // namespace evhta::oracle
