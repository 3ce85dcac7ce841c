// Acceptance run: one PASS/FAIL line per criterion.
//
//   evhta_acceptance [--only <name>] [--baseline <file>]

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "evhta/evhta.hpp"
#include "support.hpp"

using namespace evhta;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  constexpr int kStreams = 20;
  constexpr double kTol = 1e-6;
  oracle::FrameComparison total;
  std::size_t min_events = SIZE_MAX, min_windows = SIZE_MAX;
  for (int s = 0; s < kStreams; ++s) {
    Rng pick(1000 + s);
    synth::SceneSpec scene;
    scene.seed = 1000 + s;
    scene.duration_us = 2'600'000;
    scene.noise.rate = 0.5 + pick.uniform();
    scene.bar.speed = 20 + 60 * pick.uniform();
    scene.bar.width = 2 + pick.below(12);
    scene.bar.edge_rate = 50 + 300 * pick.uniform();
    scene.bar.start_x = 10 + pick.below(60);
    scene.bar.direction = 1;
    HTAParams p;
    if (s % 2) {  // odd streams exercise non-default parameters
      p.blur_radius = static_cast<int>(pick.below(4));
      p.gamma_t = 0.5 + 2.5 * pick.uniform();
      p.lambda = pick.uniform();
      p.beta = 0.5 + pick.uniform();
      p.b = 0.5 + pick.uniform();
    }
    const auto events = synth::generate(scene).events;
    const auto windows = window_iter(events, p.dt_us, 0);
    const auto ref = oracle::oracle_encode(events, scene.geometry, p, 0);
    if (ref.size() != windows.size()) return {false, fmt("stream %d: window count %zu vs %zu", s, windows.size(), ref.size())};
    Encoder enc(scene.geometry, p);
    for (std::size_t k = 0; k < windows.size(); ++k) {
      const auto values = enc.encode_window_float(windows[k].spec, windows[k].events);
      const auto frame = quantize(values, windows[k].spec);
      total.merge(oracle::compare_frames(values, frame.bytes(), ref[k], kTol));
    }
    min_events = std::min(min_events, events.size());
    min_windows = std::min(min_windows, windows.size());
  }
  const bool sized = min_events >= 100'000 && min_windows >= 50;
  return {sized && total.passes(kTol),
          fmt("%d streams, min events %zu, min windows %zu, max divergence %.3e (tol %.0e), boundary cases %zu, "
              "unexplained %zu",
              kStreams, min_events, min_windows, total.max_divergence, kTol, total.boundary_cases, total.unexplained)};
}

// ---------------------------------------------------------------------------

Outcome hta_invariants() {
  const SensorGeometry g;
  constexpr int kStreams = 50, kWindows = 20;
  Rng rng(4242);
  std::size_t windows = 0, violations = 0;
  std::string first;
  auto fail = [&](std::string why) {
    if (violations++ == 0) first = std::move(why);
  };
  double worst_tail = 0.0;
  for (int s = 0; s < kStreams; ++s) {
    HTAParams p;
    p.beta = 1.0 + rng.uniform();
    p.lambda = rng.uniform();
    p.gamma_t = 0.5 + 3.0 * rng.uniform();
    p.blur_radius = static_cast<int>(rng.below(4));
    p.alpha = 2.0 * rng.uniform();
    p.cap = 1.0 + 6.0 * rng.uniform();
    HTAParams hist = p;
    hist.lambda = 1.0;
    Encoder a(g, p), b(g, p);
    for (int k = 0; k < kWindows; ++k, ++windows) {
      const WindowSpec w{static_cast<std::uint64_t>(k), k * p.dt_us, p.dt_us};
      const auto ev = fuzz::clustered_events(rng, g, rng.below(20'000), w.start, w.end());
      const auto fa = a.encode_window(w, ev);
      const auto fb = b.encode_window(w, ev);
      if (fa.image != fb.image || !(a.state() == b.state())) fail(fmt("stream %d window %d: runs differ", s, k));

      const auto& st = a.state();
      for (std::size_t i = 0; i < st.plus.size(); ++i) {
        if (!(st.plus[i] >= 0.0 && st.plus[i] <= p.cap && st.minus[i] >= 0.0 && st.minus[i] <= p.cap))
          fail(fmt("stream %d window %d: state outside [0, C]", s, k));
        if (st.plus[i] != 0.0 && st.minus[i] != 0.0) fail(fmt("stream %d window %d: both polarities active", s, k));
      }
      for (double v : a.project().pixels)
        if (!(v >= 0.0 && v <= 1.0)) fail(fmt("stream %d window %d: channel outside [0,1]", s, k));

      const auto counts = oracle::oracle_histogram2d(ev, g);
      const auto r = accumulate_window(ev, w, g, hist);
      for (std::size_t i = 0; i < g.pixels(); ++i)
        if (r.positive[i] != counts.positive[i] || r.negative[i] != counts.negative[i])
          fail(fmt("stream %d window %d: lambda = 1 is not the histogram", s, k));
    }
    // Empty stream: state must shrink monotonically toward zero.
    double prev = INFINITY;
    for (int k = kWindows; k < kWindows + 50; ++k) {
      a.advance(WindowSpec{static_cast<std::uint64_t>(k), k * p.dt_us, p.dt_us}, {});
      double peak = 0.0;
      for (auto v : a.state().plus.values()) peak = std::max(peak, v);
      for (auto v : a.state().minus.values()) peak = std::max(peak, v);
      if (peak > prev) fail(fmt("stream %d: state grew without events", s));
      prev = peak;
    }
    worst_tail = std::max(worst_tail, prev);
  }
  if (worst_tail > 1e-9) fail(fmt("empty stream did not converge (residual %.3e)", worst_tail));
  return {violations == 0 && windows >= 1000,
          fmt("%zu fuzzed windows, %zu violations%s%s, residual after 50 empty windows %.2e", windows, violations,
              violations ? ", first: " : "", first.c_str(), worst_tail)};
}

// ---------------------------------------------------------------------------

Outcome noise_proxy() {
  synth::SceneSpec scene;  // seed 1, moving bar
  scene.noise.rate = 20.0;
  const auto generated = synth::generate(scene);
  HTAParams p;
  const auto windows = window_iter(generated.events, p.dt_us, 0);
  Encoder enc(scene.geometry, p);
  double hta_sum = 0.0, hist_sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < windows.size() && k < generated.masks.size(); ++k) {
    const auto frame = enc.encode_window(windows[k].spec, windows[k].events);
    const auto counts = oracle::oracle_histogram2d(windows[k].events, scene.geometry);
    const auto hist = synth::histogram_frame(counts.positive, counts.negative, scene.geometry);
    hta_sum += synth::snr_metric(frame, generated.masks[k]);
    hist_sum += synth::snr_metric(hist, generated.masks[k]);
    ++used;
  }
  const double hta = hta_sum / used, hist = hist_sum / used;
  const double factor = hta / hist;
  return {factor >= 1.5, fmt("seed 1, noise %.0f ev/px/s, %zu windows: HTA ratio %.3f, histogram ratio %.3f, "
                             "factor %.3f (target >= 1.5)",
                             scene.noise.rate, used, hta, hist, factor)};
}

// ---------------------------------------------------------------------------

Outcome fhtf_suite() {
  fhtf::CheckOptions opt;
  opt.fixture_dir = EVHTA_FIXTURE_DIR;
  std::size_t failed = 0;
  std::string names, golden;
  for (const auto& r : fhtf::run_checks(opt)) {
    if (!r.passed) {
      ++failed;
      names += " " + r.name;
    }
    if (r.name == "incidence_row_stochastic" || r.name == "spectral_nonnegative_shift_invariant" ||
        r.name.starts_with("golden:"))
      golden += "; " + r.name + ": " + r.detail;
  }
  return {failed == 0, fmt("%zu failed%s%s", failed, names.c_str(), golden.c_str())};
}

// ---------------------------------------------------------------------------

// Reads the number after `key=` in `text`.
std::optional<double> field(const std::string& text, const std::string& key) {
  const auto at = text.find(key + "=");
  if (at == std::string::npos) return std::nullopt;
  return std::strtod(text.c_str() + at + key.size() + 1, nullptr);
}

Outcome throughput(const std::string& baseline_path) {
  constexpr double kTarget = 1e7;
  const std::string cmd = std::string("'") + EVHTA_CLI_PATH + "' bench --repeat 3 2>&1";
  std::string out;
  if (FILE* pipe = popen(cmd.c_str(), "r")) {
    char buf[512];
    while (std::fgets(buf, sizeof buf, pipe)) out += buf;
    if (pclose(pipe) != 0) return {false, "bench exited nonzero: " + out};
  } else {
    return {false, "cannot launch bench"};
  }
  const auto rate = field(out, "events_per_s");
  const auto ms = field(out, "ms_per_frame");
  if (!rate || !ms) return {false, "no bench line in output: " + out};
  std::string gate = "no baseline";
  bool gate_ok = true;
  if (!baseline_path.empty()) {
    std::ifstream in(baseline_path);
    std::stringstream ss;
    ss << in.rdbuf();
    if (const auto base = field(ss.str(), "events_per_s")) {
      gate_ok = *rate >= 0.8 * *base;
      gate = fmt("baseline %.3e, floor %.3e", *base, 0.8 * *base);
    } else {
      gate_ok = false;
      gate = "baseline file unreadable: " + baseline_path;
    }
  }
  return {*rate >= kTarget && gate_ok,
          fmt("accumulate+update %.3e events/s at 304x240 (target %.0e), %.3f ms/frame, %s", *rate, kTarget, *ms,
              gate.c_str())};
}

// ---------------------------------------------------------------------------

Outcome format_round_trips() {
  Rng rng(777);
  std::size_t evh = 0, htf = 0, mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const SensorGeometry g{1 + rng.below(2048), 1 + rng.below(2048)};
    auto ev = fuzz::random_events(rng, g, rng.below(2000), rng.next() >> 20, (rng.next() >> 20) + (1ull << 44));
    std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    const auto first = write_evh1(ev, g);
    SensorGeometry back;
    const auto parsed = parse_binary_stream(first, &back);
    mismatches += write_evh1(parsed, back) != first;
    ++evh;
  }
  for (int trial = 0; trial < 500; ++trial) {
    HtfTensor t{1 + rng.below(64), 1 + rng.below(64), 1 + rng.below(8), rng.below(2) ? HtfDtype::f32 : HtfDtype::u8,
                {}, {}};
    if (t.dtype == HtfDtype::u8) {
      t.u8.resize(t.elements());
      for (auto& v : t.u8) v = static_cast<std::uint8_t>(rng.below(256));
    } else {
      t.f32.resize(t.elements());
      for (auto& v : t.f32) {
        const auto bits = static_cast<std::uint32_t>(rng.next());
        v = std::bit_cast<float>(bits);
        if (std::isnan(v)) v = std::numeric_limits<float>::quiet_NaN();
      }
    }
    const auto first = write_htf1(t);
    mismatches += write_htf1(read_htf1(first)) != first;
    ++htf;
  }
  return {mismatches == 0, fmt("%zu EVH1 + %zu HTF1 fuzzed files, %zu byte mismatches", evh, htf, mismatches)};
}

}  // namespace

int main(int argc, char** argv) {
  std::string only, baseline = EVHTA_BASELINE_FILE;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--only") && i + 1 < argc) {
      only = argv[++i];
    } else if (!std::strcmp(argv[i], "--baseline") && i + 1 < argc) {
      baseline = argv[++i];
    } else {
      std::fprintf(stderr, "usage: %s [--only <criterion>] [--baseline <file>]\n", argv[0]);
      return 2;
    }
  }

  const std::vector<Criterion> criteria{
      {"oracle_equivalence", 120, oracle_equivalence},
      {"hta_invariants", 60, hta_invariants},
      {"noise_suppression_proxy", 30, noise_proxy},
      {"fhtf_invariants", 60, fhtf_suite},
      {"throughput", 120, [&] { return throughput(baseline); }},
      {"format_round_trips", 60, format_round_trips},
  };

  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && only != c.name) continue;
    ++ran;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_s;
    const bool ok = o.passed && in_budget;
    failed += !ok;
    std::printf("%s %-24s %s [%.2f s, budget %.0f s%s]\n", ok ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs,
                c.budget_s, in_budget ? "" : ", over budget");
    std::fflush(stdout);
  }
  if (ran == 0) {
    std::fprintf(stderr, "unknown criterion '%s'\n", only.c_str());
    return 2;
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed ? 1 : 0;
}
