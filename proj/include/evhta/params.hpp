#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>

#include "evhta/error.hpp"
#include "evhta/types.hpp"

namespace evhta {

/// Scalar parameters of the aggregation pipeline plus the window length.
/// Defaults are artifact choices; the method itself publishes none.
struct HTAParams {
  double lambda = 0.2;       // weight floor
  double gamma_t = 2.0;      // recency exponent
  double tau = 2.0;          // activity normalization
  double epsilon = 1e-6;     // division guard
  double kappa0 = 8.0;       // base decay rate, 1/s
  double alpha = 1.0;        // decay modulation
  double kappa_min = 2.0;    // 1/s
  double kappa_max = 19.0;   // 1/s
  double b = 1.0;            // decay exponent
  double c = 1.0;            // injection coefficient
  double beta = 1.0;         // inhibition coefficient
  double cap = 4.0;          // state cap C
  double eta = 0.3;          // polarity-difference blend
  double gain = 5.0;         // luminance gain g
  std::optional<double> sigma;  // normalization scale, defaults to cap
  double mu = 0.4;           // color strength
  double gamma_c = 1.0 / 1.2;
  int blur_radius = 2;
  std::uint64_t dt_us = 50'000;

  double effective_sigma() const noexcept { return sigma.value_or(cap); }
  double dt_seconds() const noexcept { return static_cast<double>(dt_us) * 1e-6; }

  /// Throws ConfigError naming the first violated constraint.
  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("invalid parameter: ") + what);
    };
    auto finite = [](double v) { return std::isfinite(v); };
    need(finite(lambda) && lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0,1]");
    need(finite(gamma_t) && gamma_t > 0.0, "gamma_t must be > 0");
    need(finite(tau) && tau > 0.0, "tau must be > 0");
    need(finite(epsilon) && epsilon > 0.0, "epsilon must be > 0");
    need(finite(kappa0), "kappa0 must be finite");
    need(finite(alpha) && alpha >= 0.0, "alpha must be >= 0");
    need(finite(kappa_min) && kappa_min >= 0.0, "kappa_min must be >= 0");
    need(finite(kappa_max) && kappa_max >= kappa_min, "kappa_max must be >= kappa_min");
    need(finite(b) && b > 0.0, "b must be > 0");
    need(finite(c) && c > 0.0, "c must be > 0");
    need(finite(beta) && beta >= 0.0, "beta must be >= 0");
    need(finite(cap) && cap > 0.0, "cap must be > 0");
    need(finite(eta) && eta >= 0.0 && eta <= 1.0, "eta must lie in [0,1]");
    need(finite(gain) && gain > 0.0, "gain must be > 0");
    need(finite(effective_sigma()) && effective_sigma() > 0.0, "sigma must be > 0");
    need(finite(mu) && mu >= 0.0, "mu must be >= 0");
    need(finite(gamma_c) && gamma_c > 0.0, "gamma_c must be > 0");
    need(blur_radius >= 0, "blur_radius must be >= 0");
    need(dt_us > 0, "dt_us must be > 0");
    need(kappa_max * dt_seconds() <= 1.0, "kappa_max * dt must be <= 1 so the decay base stays in [0,1]");
  }
};

/// Everything a configuration file can set.
struct EncoderConfig {
  HTAParams params;
  SensorGeometry geometry;
  bool geometry_set = false;  // width or height given explicitly
};

namespace detail {

using ParamSlot = std::variant<double HTAParams::*, int HTAParams::*, std::uint64_t HTAParams::*>;

struct ParamKey {
  std::string_view name;
  ParamSlot slot;
};

inline constexpr ParamKey kParamKeys[] = {
    {"lambda", &HTAParams::lambda},       {"gamma_t", &HTAParams::gamma_t},     {"tau", &HTAParams::tau},
    {"epsilon", &HTAParams::epsilon},     {"kappa0", &HTAParams::kappa0},       {"alpha", &HTAParams::alpha},
    {"kappa_min", &HTAParams::kappa_min}, {"kappa_max", &HTAParams::kappa_max}, {"b", &HTAParams::b},
    {"c", &HTAParams::c},                 {"beta", &HTAParams::beta},           {"cap", &HTAParams::cap},
    {"eta", &HTAParams::eta},             {"gain", &HTAParams::gain},           {"mu", &HTAParams::mu},
    {"gamma_c", &HTAParams::gamma_c},     {"blur_radius", &HTAParams::blur_radius},
    {"dt_us", &HTAParams::dt_us},
};

inline std::string_view trim_ws(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline double parse_double(std::string_view key, std::string_view v) {
  // from_chars for double is available in libstdc++ 11.
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("bad value '" + std::string(v) + "' for key '" + std::string(key) + "'");
  return out;
}

template <class I>
I parse_integer(std::string_view key, std::string_view v) {
  I out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("bad integer '" + std::string(v) + "' for key '" + std::string(key) + "'");
  return out;
}

}  // namespace detail

/// Applies one `key = value` assignment. Unknown keys throw ConfigError naming the key.
inline void apply_config_value(EncoderConfig& cfg, std::string_view key, std::string_view value) {
  key = detail::trim_ws(key);
  value = detail::trim_ws(value);
  if (key == "width" || key == "height") {
    auto v = detail::parse_integer<std::uint32_t>(key, value);
    (key == "width" ? cfg.geometry.width : cfg.geometry.height) = v;
    cfg.geometry_set = true;
    return;
  }
  if (key == "sigma") {
    cfg.params.sigma = detail::parse_double(key, value);
    return;
  }
  for (const auto& k : detail::kParamKeys) {
    if (k.name != key) continue;
    std::visit(
        [&](auto member) {
          using M = std::remove_reference_t<decltype(cfg.params.*member)>;
          if constexpr (std::is_same_v<M, double>)
            cfg.params.*member = detail::parse_double(key, value);
          else
            cfg.params.*member = detail::parse_integer<M>(key, value);
        },
        k.slot);
    return;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

/// Reads a line-based `key = value` file. '#' starts a comment.
inline void load_config(std::istream& in, EncoderConfig& cfg) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = detail::trim_ws(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    apply_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
}

inline EncoderConfig parse_config(std::string_view text) {
  EncoderConfig cfg;
  std::istringstream in{std::string(text)};
  load_config(in, cfg);
  return cfg;
}

/// Effective configuration in the same `key = value` form load_config reads.
inline std::string dump_config(const EncoderConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& k : detail::kParamKeys) {
    out << k.name << " = ";
    std::visit([&](auto member) { out << cfg.params.*member; }, k.slot);
    out << '\n';
  }
  out << "sigma = " << cfg.params.effective_sigma() << '\n';
  out << "width = " << cfg.geometry.width << '\n';
  out << "height = " << cfg.geometry.height << '\n';
  return out.str();
}

}  // namespace evhta
