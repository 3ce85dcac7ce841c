#pragma once

// Invariant and golden-tensor checks for the fusion forward pass. Each check
// reports by name so callers can list what failed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "evhta/byteio.hpp"
#include "evhta/fhtf.hpp"
#include "evhta/tensor.hpp"

namespace evhta::fhtf {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CheckOptions {
  std::vector<std::uint64_t> seeds{11, 12, 13};
  std::vector<std::uint32_t> hyperedges{1, 4, 8, 16, 32, 64};
  std::filesystem::path fixture_dir;  // empty: skip golden checks
  double golden_tolerance = 1e-5;
  double stochastic_tolerance = 1e-6;
  double shift_tolerance = 1e-5;
};

inline const char* const kGoldenFixtures[] = {"temporal_seed42.fhw", "anchors_seed7.fhw", "forward_seed123.fhw"};

namespace detail {

// Max of |a - b| / max(1, |b|).
inline double scaled_error(std::span<const float> got, std::span<const float> want) {
  if (got.size() != want.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double e = std::fabs(static_cast<double>(got[i]) - want[i]) / std::max(1.0, std::fabs(double{want[i]}));
    if (!(e <= worst)) worst = std::isnan(e) ? INFINITY : e;
  }
  return worst;
}

inline std::pair<FeatureMapSet, RecurrentState> fixture_inputs(const TensorTable& t) {
  FeatureMapSet f;
  RecurrentState s;
  for (std::size_t i = 0; i < kScales; ++i) {
    const auto n = std::to_string(i);
    f.maps[i] = t.get("input." + n);
    s.hidden[i] = t.get("state.hidden." + n);
    s.cell[i] = t.get("state.cell." + n);
  }
  return {f, s};
}

inline double compare_named(const TensorTable& t, const std::string& name, const Tensor& got, std::string& worst) {
  const Tensor& want = t.get(name, got.shape);
  const double e = scaled_error(got.data, want.data);
  worst = name;
  return e;
}

}  // namespace detail

/// Max scaled error of a fixture against this implementation. Which stages are
/// compared depends on the tensors the fixture carries.
inline double golden_error(const TensorTable& t, std::string* where = nullptr) {
  const FHTFParams params = FHTFParams::from_table(t);
  double worst = 0.0;
  std::string worst_name, name;
  auto track = [&](double e) {
    if (!(e <= worst)) {
      worst = e;
      worst_name = name;
    }
  };
  if (t.find("anchors.descriptor")) {
    const Tensor& d = t.get("anchors.descriptor");
    const Tensor& p = t.get("anchors.pooled");
    const AnchorMatrix a = build_anchors(std::vector<double>(d.data.begin(), d.data.end()),
                                         std::vector<double>(p.data.begin(), p.data.end()), params);
    name = "expected.anchors";
    track(detail::scaled_error(a.values, t.get(name, std::vector<std::uint32_t>{a.rows, a.cols}).data));
  }
  if (t.find("input.0")) {
    auto [f, s] = detail::fixture_inputs(t);
    const bool full = t.find("expected.incidence") != nullptr;
    ForwardTrace trace;
    auto [out, next] = full ? fhtf_forward(f, s, params, &trace) : temporal_evolve(f, s, params);
    for (std::size_t i = 0; i < kScales; ++i) {
      const auto n = std::to_string(i);
      track(detail::compare_named(t, "expected." + n, out.maps[i], name));
      track(detail::compare_named(t, "expected.hidden." + n, next.hidden[i], name));
      track(detail::compare_named(t, "expected.cell." + n, next.cell[i], name));
    }
    if (full) {
      name = "expected.incidence";
      track(detail::scaled_error(trace.incidence.values,
                                 t.get(name, std::vector<std::uint32_t>{trace.incidence.rows, trace.incidence.cols}).data));
      name = "expected.anchors";
      track(detail::scaled_error(trace.anchors.values,
                                 t.get(name, std::vector<std::uint32_t>{trace.anchors.rows, trace.anchors.cols}).data));
    }
  }
  if (where) *where = worst_name;
  return worst;
}

inline std::vector<CheckResult> run_checks(const CheckOptions& opt) {
  std::vector<CheckResult> results;
  auto record = [&](std::string name, auto&& body) {
    CheckResult r{std::move(name), false, {}};
    try {
      std::ostringstream detail;
      r.passed = body(detail);
      r.detail = detail.str();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    results.push_back(std::move(r));
  };

  const std::array<std::uint32_t, kScales> channels{4, 6, 8};
  auto shape_for = [&](std::uint32_t H) {
    ModelShape s;
    s.channels = channels;
    s.node_width = 8;
    s.key_dim = 4;
    s.hyperedges = H;
    return s;
  };

  record("gate_identity_temporal", [&](std::ostream& d) {
    for (auto seed : opt.seeds) {
      auto p = random_params(shape_for(8), seed);
      for (auto& s : p.scales) s.alpha = 0.0f;
      const auto f = random_pyramid(channels, 8, seed + 100);
      const auto st = RecurrentState::zeros_like(f);
      auto [out, next] = temporal_evolve(f, st, p);
      if (!(out == f)) {
        d << "seed " << seed << ": output differs from input";
        return false;
      }
      if (next == st) {
        d << "seed " << seed << ": state did not advance";
        return false;
      }
    }
    return true;
  });

  record("gate_identity_hypergraph", [&](std::ostream& d) {
    for (auto seed : opt.seeds) {
      auto p = random_params(shape_for(8), seed);
      std::fill(p.gate.data.begin(), p.gate.data.end(), 0.0f);
      const auto f = random_pyramid(channels, 8, seed + 200);
      const NodeMatrix X = align_nodes(f, p);
      const auto A = build_anchors(spectral_descriptor(X), pooled_statistics(X), p);
      const NodeMatrix Xr = hypergraph_refine(X, build_incidence(X, A, p), p);
      if (!(Xr == X)) {
        d << "seed " << seed << ": refined nodes differ";
        return false;
      }
    }
    return true;
  });

  record("gate_identity_composed", [&](std::ostream& d) {
    for (auto seed : opt.seeds) {
      for (auto H : opt.hyperedges) {
        auto p = random_params(shape_for(H), seed);
        for (auto& s : p.scales) s.alpha = 0.0f;
        std::fill(p.gate.data.begin(), p.gate.data.end(), 0.0f);
        const auto f = random_pyramid(channels, 8, seed + 300);
        auto [out, next] = fhtf_forward(f, RecurrentState::zeros_like(f), p);
        if (!(out == f)) {
          d << "seed " << seed << " H " << H << ": forward pass is not the identity";
          return false;
        }
      }
    }
    return true;
  });

  record("incidence_row_stochastic", [&](std::ostream& d) {
    double worst = 0.0;
    for (auto seed : opt.seeds) {
      for (auto H : opt.hyperedges) {
        const auto p = random_params(shape_for(H), seed);
        ForwardTrace tr;
        const auto f = random_pyramid(channels, 8, seed + 400);
        fhtf_forward(f, RecurrentState::zeros_like(f), p, &tr);
        for (std::size_t n = 0; n < tr.incidence.rows; ++n) {
          double sum = 0.0;
          for (std::size_t h = 0; h < tr.incidence.cols; ++h) {
            const float v = tr.incidence(n, h);
            if (!(v >= 0.0f && v <= 1.0f)) {
              d << "entry outside [0,1] at H " << H;
              return false;
            }
            sum += v;
          }
          worst = std::max(worst, std::fabs(sum - 1.0));
        }
      }
    }
    d << "max |row sum - 1| = " << worst;
    return worst <= opt.stochastic_tolerance;
  });

  record("shape_preservation", [&](std::ostream& d) {
    for (auto H : opt.hyperedges) {
      const auto p = random_params(shape_for(H), opt.seeds.front());
      const auto f = random_pyramid(channels, 8, 500 + H);
      ForwardTrace tr;
      auto [out, next] = fhtf_forward(f, RecurrentState::zeros_like(f), p, &tr);
      const auto N = static_cast<std::uint32_t>(f.tokens());
      bool ok = tr.nodes.rows == N && tr.nodes.cols == p.node_width && tr.anchors.rows == H &&
                tr.anchors.cols == p.key_dim && tr.incidence.rows == N && tr.incidence.cols == H &&
                tr.refinement.rows == N && tr.refinement.cols == p.node_width &&
                tr.descriptor.size() == 2 * std::size_t{p.node_width};
      for (std::size_t i = 0; i < kScales; ++i)
        ok = ok && out.maps[i].shape == f.maps[i].shape && tr.evolved.maps[i].shape == f.maps[i].shape &&
             next.hidden[i].shape == f.maps[i].shape && next.cell[i].shape == f.maps[i].shape;
      if (!ok) {
        d << "shape mismatch at H " << H;
        return false;
      }
    }
    return true;
  });

  record("spectral_nonnegative_shift_invariant", [&](std::ostream& d) {
    double worst = 0.0;
    for (auto seed : opt.seeds) {
      for (std::uint32_t N : {21u, 32u, 84u}) {
        Rng rng(seed * 977 + N);
        NodeMatrix X(N, 8);
        for (auto& v : X.values) v = static_cast<float>(rng.symmetric(2.0));
        const auto base = spectral_descriptor(X);
        for (double v : base)
          if (!(v >= 0.0)) {
            d << "negative descriptor entry";
            return false;
          }
        for (std::uint32_t shift : {1u, 5u, N - 1}) {
          NodeMatrix Y(N, 8);
          for (std::uint32_t n = 0; n < N; ++n)
            for (std::uint32_t c = 0; c < 8; ++c) Y((n + shift) % N, c) = X(n, c);
          const auto moved = spectral_descriptor(Y);
          for (std::size_t i = 0; i < base.size(); ++i) worst = std::max(worst, std::fabs(base[i] - moved[i]));
        }
      }
    }
    d << "max shift deviation = " << worst;
    return worst <= opt.shift_tolerance;
  });

  record("determinism", [&](std::ostream& d) {
    for (auto seed : opt.seeds) {
      const auto p = random_params(shape_for(opt.hyperedges.back()), seed);
      const auto f = random_pyramid(channels, 8, seed + 600);
      auto s = RecurrentState::zeros_like(f);
      auto a = fhtf_forward(f, s, p);
      auto b = fhtf_forward(f, s, p);
      if (!(a.first == b.first) || !(a.second == b.second)) {
        d << "seed " << seed << ": repeated runs differ";
        return false;
      }
    }
    return true;
  });

  record("parameter_count_vs_hyperedges", [&](std::ostream& d) {
    const auto base = random_params(shape_for(1), opt.seeds.front());
    for (auto H : opt.hyperedges) {
      const auto p = random_params(shape_for(H), opt.seeds.front());
      if (p.prototypes.size() != std::size_t{H} * p.key_dim ||
          p.parameter_count() - base.parameter_count() != std::size_t{H - 1} * p.key_dim) {
        d << "parameter count at H " << H << " is not base + (H-1)*d_k";
        return false;
      }
    }
    d << "base count " << base.parameter_count();
    return true;
  });

  if (!opt.fixture_dir.empty()) {
    for (const char* fixture : kGoldenFixtures) {
      record(std::string("golden:") + fixture, [&](std::ostream& d) {
        const auto table = read_fhw1(bytes::read_file(opt.fixture_dir / fixture));
        std::string where;
        const double e = golden_error(table, &where);
        d << "max scaled error " << e;
        if (!where.empty()) d << " (" << where << ")";
        return e <= opt.golden_tolerance;
      });
    }
  }
  return results;
}

}  // namespace evhta::fhtf
