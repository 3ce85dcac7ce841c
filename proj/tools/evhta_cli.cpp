// evhta: event stream -> pseudo-RGB frame encoder and verification tool.
//
// Exit codes: 0 ok, 1 input parse error, 2 configuration/usage error,
// 3 I/O error, 4 verification or invariant failure.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "evhta/evhta.hpp"

#ifndef EVHTA_FIXTURE_DIR
#define EVHTA_FIXTURE_DIR "tests/fixtures"
#endif

namespace fs = std::filesystem;
using namespace evhta;

namespace {

enum Exit : int { kOk = 0, kParse = 1, kConfig = 2, kIo = 3, kVerify = 4 };

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  bool dump_config = false;
};

struct InputOptions {
  bool text = false;
  bool binary = false;
  bool polarity_zero_neg = false;
  bool allow_unsorted = false;
  std::optional<std::uint64_t> t0;
};

EncoderConfig load_effective_config(const CommonOptions& c) {
  EncoderConfig cfg;
  std::string path = c.config_path;
  if (path.empty())
    if (const char* env = std::getenv("EVHTA_CONFIG")) path = env;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    load_config(in, cfg);
  }
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.params.validate();
  cfg.geometry.validate();
  return cfg;
}

bool looks_binary(const fs::path& p, std::span<const std::uint8_t> data) {
  if (data.size() >= 4 && std::string_view(reinterpret_cast<const char*>(data.data()), 4) == kEvh1Magic) return true;
  return p.extension() == ".evh" || p.extension() == ".evh1";
}

struct LoadedStream {
  SensorGeometry geometry;
  std::vector<Event> events;
};

LoadedStream load_events(const fs::path& path, const InputOptions& in, EncoderConfig& cfg) {
  if (!fs::exists(path)) throw IoError("input not found: '" + path.string() + "'");
  const auto data = bytes::read_file(path);
  const bool binary = in.binary || (!in.text && looks_binary(path, data));
  LoadedStream s;
  if (binary) {
    const auto header = read_evh1_header(data);
    if (cfg.geometry_set && !(header.geometry == cfg.geometry))
      throw ConfigError("configured geometry " + std::to_string(cfg.geometry.width) + "x" +
                        std::to_string(cfg.geometry.height) + " differs from file header");
    s.geometry = header.geometry;
    s.events = parse_binary_stream(data, s.geometry, in.allow_unsorted);
  } else {
    s.geometry = cfg.geometry;
    std::istringstream text(std::string(data.begin(), data.end()));
    s.events = parse_text_stream(text, s.geometry, TextParseOptions{in.polarity_zero_neg, in.allow_unsorted});
  }
  return s;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string frame_name(std::uint64_t k, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06llu.%s", static_cast<unsigned long long>(k), ext);
  return buf;
}

// Runs `body`, mapping the library's exception taxonomy onto exit codes.
template <class Fn>
int guarded(Fn&& body) {
  try {
    return body();
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kParse;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const SinkError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
}

// ---------------------------------------------------------------------------

struct EncodeOptions {
  std::vector<std::string> inputs;
  std::string out_dir;
  std::string format = "png";
  std::string checkpoint;
  std::string resume;
  unsigned threads = 1;
};

struct EncodeStats {
  std::size_t windows = 0;
  std::size_t events = 0;
  double seconds = 0;
  std::uint64_t hash = 0;
};

EncodeStats encode_one(const fs::path& input, const fs::path& out_dir, const EncodeOptions& opt,
                       const InputOptions& in, EncoderConfig cfg) {
  const auto stream = load_events(input, in, cfg);
  const auto windows = window_iter(stream.events, cfg.params.dt_us, in.t0);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir.string() + "': " + ec.message());

  Encoder encoder(stream.geometry, cfg.params);
  if (!opt.resume.empty()) encoder.restore(read_hts1(bytes::read_file(opt.resume)));

  const bool png = opt.format == "png" || opt.format == "both";
  const bool htf = opt.format == "htf" || opt.format == "both";
  const bool htf_f32 = opt.format == "htf-f32";
  FrameHasher hasher;
  const auto start = std::chrono::steady_clock::now();
  std::size_t frames = 0;
  const auto resumed_at = encoder.state().last_window_index;
  for (const Window& w : windows) {
    if (resumed_at && w.spec.index <= *resumed_at) {
      if (!w.events.empty())
        throw ConfigError("window " + std::to_string(w.spec.index) + " holds events but the checkpoint already covers it");
      continue;
    }
    const FloatFrame values = encoder.encode_window_float(w.spec, w.events);
    const PseudoRGBFrame frame = quantize(values, w.spec);
    hasher.update(frame.bytes());
    try {
      if (png) bytes::write_file(out_dir / frame_name(w.spec.index, "png"), encode_png(frame.image));
      if (htf) bytes::write_file(out_dir / frame_name(w.spec.index, "htf"), write_htf1(to_htf(frame.image)));
      if (htf_f32) bytes::write_file(out_dir / frame_name(w.spec.index, "htf"), write_htf1(to_htf(values)));
    } catch (const std::exception& e) {
      throw SinkError(w.spec.index, e.what());
    }
    ++frames;
  }
  const auto stop = std::chrono::steady_clock::now();
  if (!opt.checkpoint.empty()) bytes::write_file(opt.checkpoint, write_hts1(encoder.state()));
  return {frames, stream.events.size(), std::chrono::duration<double>(stop - start).count(), hasher.digest()};
}

int cmd_encode(const CommonOptions& common, const InputOptions& in, const EncodeOptions& opt) {
  return guarded([&] {
    const EncoderConfig cfg = load_effective_config(common);
    if (common.dump_config) std::cout << dump_config(cfg);
    if (opt.inputs.size() > 1 && (!opt.checkpoint.empty() || !opt.resume.empty()))
      throw ConfigError("--checkpoint/--resume take a single input");

    std::vector<EncodeStats> stats(opt.inputs.size());
    std::vector<int> codes(opt.inputs.size(), kOk);
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    auto worker = [&] {
      for (std::size_t i; (i = next++) < opt.inputs.size();) {
        const fs::path input = opt.inputs[i];
        const fs::path out = opt.inputs.size() == 1 ? fs::path(opt.out_dir) : fs::path(opt.out_dir) / input.stem();
        codes[i] = guarded([&] {
          stats[i] = encode_one(input, out, opt, in, cfg);
          return kOk;
        });
        if (codes[i] != kOk) {
          std::lock_guard lock(err_mu);
          std::cerr << "  (while encoding '" << input.string() << "')\n";
        }
      }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(opt.inputs.size())));
    {
      std::vector<std::jthread> pool;
      for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
      worker();
    }
    int rc = kOk;
    for (std::size_t i = 0; i < opt.inputs.size(); ++i) {
      if (codes[i] != kOk) {
        rc = rc == kOk ? codes[i] : rc;
        continue;
      }
      const auto& s = stats[i];
      std::printf("%s: windows=%zu events=%zu wall_s=%.6f events_per_s=%.0f frame_hash=%s\n",
                  opt.inputs[i].c_str(), s.windows, s.events, s.seconds,
                  s.seconds > 0 ? static_cast<double>(s.events) / s.seconds : 0.0, hex64(s.hash).c_str());
    }
    return rc;
  });
}

// ---------------------------------------------------------------------------

struct VerifyOptions {
  std::string input;
  std::optional<std::uint64_t> synth_seed;
  std::vector<std::string> perturb;
  double tolerance = 1e-6;
};

int cmd_verify(const CommonOptions& common, const InputOptions& in, const VerifyOptions& opt) {
  return guarded([&] {
    EncoderConfig cfg = load_effective_config(common);
    if (common.dump_config) std::cout << dump_config(cfg);
    LoadedStream stream;
    if (opt.synth_seed) {
      synth::SceneSpec scene;
      scene.geometry = cfg.geometry;
      scene.seed = *opt.synth_seed;
      stream.geometry = cfg.geometry;
      stream.events = synth::generate(scene).events;
    } else {
      if (opt.input.empty()) throw ConfigError("verify needs --input or --synth-seed");
      stream = load_events(opt.input, in, cfg);
    }
    EncoderConfig oracle_cfg = cfg;
    for (const auto& kv : opt.perturb) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("perturbation '" + kv + "' is not key=value");
      apply_config_value(oracle_cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    oracle_cfg.params.validate();

    const auto windows = window_iter(stream.events, cfg.params.dt_us, in.t0);
    const auto origin = in.t0.value_or(default_origin(stream.events, cfg.params.dt_us));
    const auto reference = oracle::oracle_encode(stream.events, stream.geometry, oracle_cfg.params, origin);
    if (reference.size() != windows.size()) {
      std::printf("verify: window count mismatch encoder=%zu oracle=%zu\n", windows.size(), reference.size());
      return kVerify;
    }
    Encoder encoder(stream.geometry, cfg.params);
    oracle::FrameComparison total;
    for (std::size_t k = 0; k < windows.size(); ++k) {
      const auto values = encoder.encode_window_float(windows[k].spec, windows[k].events);
      const auto frame = quantize(values, windows[k].spec);
      total.merge(oracle::compare_frames(values, frame.bytes(), reference[k], opt.tolerance));
    }
    const bool ok = total.passes(opt.tolerance);
    std::printf("verify: windows=%zu events=%zu max_divergence=%.3e boundary_cases=%zu mismatches=%zu result=%s\n",
                windows.size(), stream.events.size(), total.max_divergence, total.boundary_cases, total.unexplained,
                ok ? "PASS" : "FAIL");
    return ok ? kOk : kVerify;
  });
}

// ---------------------------------------------------------------------------

struct BenchOptions {
  std::uint64_t seed = 1;
  std::uint64_t duration_ms = 2000;
  double noise_rate = 200.0;
  int repeat = 2;
  std::string baseline;
  double regression = 0.20;
};

struct BenchResult {
  double events_per_s = 0;
  double ms_per_frame = 0;
  std::uint64_t hash = 0;
};

BenchResult bench_once(const std::vector<Window>& windows, std::size_t events, const SensorGeometry& g,
                       const HTAParams& p) {
  using clock = std::chrono::steady_clock;
  Encoder encoder(g, p);
  FrameHasher hasher;
  clock::duration stage{}, total{};
  for (const Window& w : windows) {
    const auto t0 = clock::now();
    encoder.advance(w.spec, w.events);
    const auto t1 = clock::now();
    const auto frame = quantize(encoder.project(), w.spec);
    const auto t2 = clock::now();
    stage += t1 - t0;
    total += t2 - t0;
    hasher.update(frame.bytes());
  }
  const double stage_s = std::chrono::duration<double>(stage).count();
  const double total_ms = std::chrono::duration<double, std::milli>(total).count();
  return {stage_s > 0 ? static_cast<double>(events) / stage_s : 0.0,
          windows.empty() ? 0.0 : total_ms / static_cast<double>(windows.size()), hasher.digest()};
}

/// Reads `events_per_s=<n>` from a baseline file.
double read_baseline(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open baseline '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    const auto at = line.find("events_per_s=");
    if (at != std::string::npos) return std::stod(line.substr(at + 13));
  }
  throw ConfigError("baseline '" + path + "' has no events_per_s entry");
}

int cmd_bench(const CommonOptions& common, const BenchOptions& opt) {
  return guarded([&] {
    const EncoderConfig cfg = load_effective_config(common);
    synth::SceneSpec scene;
    scene.geometry = cfg.geometry;
    scene.seed = opt.seed;
    scene.duration_us = opt.duration_ms * 1000;
    scene.noise.rate = opt.noise_rate;
    scene.bar.speed = 60.0;
    scene.bar.start_x = 20.0;
    scene.window_us = cfg.params.dt_us;
    const auto generated = synth::generate(scene);
    const auto windows = window_iter(generated.events, cfg.params.dt_us, 0);

    BenchResult best;
    std::vector<std::uint64_t> hashes;
    for (int r = 0; r < std::max(1, opt.repeat); ++r) {
      const auto res = bench_once(windows, generated.events.size(), scene.geometry, cfg.params);
      hashes.push_back(res.hash);
      if (res.events_per_s > best.events_per_s) best = res;
    }
    const bool deterministic = std::all_of(hashes.begin(), hashes.end(), [&](auto h) { return h == hashes[0]; });
    std::printf("bench: events=%zu windows=%zu geometry=%ux%u frame_hash=%s deterministic=%s\n",
                generated.events.size(), windows.size(), scene.geometry.width, scene.geometry.height,
                hex64(hashes[0]).c_str(), deterministic ? "yes" : "no");
    std::printf("bench: events_per_s=%.0f ms_per_frame=%.4f\n", best.events_per_s, best.ms_per_frame);
    if (!deterministic) return kVerify;
    if (!opt.baseline.empty()) {
      const double base = read_baseline(opt.baseline);
      const double floor = base * (1.0 - opt.regression);
      const bool ok = best.events_per_s >= floor;
      std::printf("bench: baseline=%.0f floor=%.0f result=%s\n", base, floor, ok ? "PASS" : "REGRESSION");
      if (!ok) return kVerify;
    }
    return kOk;
  });
}

// ---------------------------------------------------------------------------

struct SynthOptions {
  std::string out;
  std::string mask;
  synth::SceneSpec scene;
  std::uint64_t duration_ms = 1000;
};

int cmd_synth(const CommonOptions& common, SynthOptions opt) {
  return guarded([&] {
    const EncoderConfig cfg = load_effective_config(common);
    opt.scene.geometry = cfg.geometry;
    opt.scene.duration_us = opt.duration_ms * 1000;
    opt.scene.window_us = cfg.params.dt_us;
    const auto scene = synth::generate(opt.scene);
    bytes::write_file(opt.out, write_evh1(scene.events, opt.scene.geometry));
    if (!opt.mask.empty()) {
      HtfTensor mask{cfg.geometry.height, cfg.geometry.width, static_cast<std::uint32_t>(scene.masks.size()),
                     HtfDtype::u8, {}, {}};
      for (const auto& m : scene.masks) mask.u8.insert(mask.u8.end(), m.values().begin(), m.values().end());
      bytes::write_file(opt.mask, write_htf1(mask));
    }
    std::printf("synth: events=%zu windows=%zu seed=%llu out=%s\n", scene.events.size(), scene.masks.size(),
                static_cast<unsigned long long>(opt.scene.seed), opt.out.c_str());
    return kOk;
  });
}

int cmd_inspect(const CommonOptions& common, const InputOptions& in, const std::string& input) {
  return guarded([&] {
    EncoderConfig cfg = load_effective_config(common);
    if (!fs::exists(input)) throw IoError("input not found: '" + input + "'");
    const auto data = bytes::read_file(input);
    if (in.binary || (!in.text && looks_binary(input, data))) {
      const auto h = read_evh1_header(data);
      std::printf("header: magic=EVH1 width=%u height=%u record_count=%u\n", h.geometry.width, h.geometry.height,
                  h.record_count);
    }
    const auto stream = load_events(input, in, cfg);
    std::printf("events: %zu\n", stream.events.size());
    if (stream.events.empty()) return kOk;
    const auto t_first = stream.events.front().t, t_last = stream.events.back().t;
    std::printf("time_span_us: %llu..%llu (%llu)\n", static_cast<unsigned long long>(t_first),
                static_cast<unsigned long long>(t_last), static_cast<unsigned long long>(t_last - t_first));
    std::size_t positive = 0;
    for (const auto& e : stream.events) positive += e.p > 0;
    std::printf("polarity: positive=%zu negative=%zu\n", positive, stream.events.size() - positive);
    const auto windows = window_iter(stream.events, cfg.params.dt_us, in.t0);
    std::printf("windows: %zu (dt_us=%llu)\n", windows.size(), static_cast<unsigned long long>(cfg.params.dt_us));
    for (const auto& w : windows)
      std::printf("  window %6llu start=%llu events=%zu\n", static_cast<unsigned long long>(w.spec.index),
                  static_cast<unsigned long long>(w.spec.start), w.events.size());
    return kOk;
  });
}

int cmd_fhtf_check(const std::string& fixtures, const std::vector<std::uint32_t>& hyperedges,
                   const std::vector<std::uint64_t>& seeds) {
  return guarded([&] {
    fhtf::CheckOptions opt;
    opt.fixture_dir = fixtures;
    if (!hyperedges.empty()) opt.hyperedges = hyperedges;
    if (!seeds.empty()) opt.seeds = seeds;
    const auto results = fhtf::run_checks(opt);
    std::vector<std::string> failed;
    for (const auto& r : results) {
      std::printf("%-40s %s  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.detail.c_str());
      if (!r.passed) failed.push_back(r.name);
    }
    if (failed.empty()) {
      std::printf("fhtf-check: all %zu checks passed\n", results.size());
      return kOk;
    }
    std::string names;
    for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
    std::printf("fhtf-check: FAILED %s\n", names.c_str());
    return kVerify;
  });
}

void add_common(CLI::App* sub, CommonOptions& c) {
  sub->add_option("--config", c.config_path, "key = value configuration file (default: $EVHTA_CONFIG)");
  sub->add_option("--set", c.overrides, "override a configuration key, key=value (repeatable)");
  sub->add_flag("--dump-config", c.dump_config, "print the effective configuration");
}

void add_input(CLI::App* sub, InputOptions& in) {
  auto* text = sub->add_flag("--text", in.text, "treat input as t_us,x,y,p text");
  auto* bin = sub->add_flag("--binary", in.binary, "treat input as EVH1 binary");
  text->excludes(bin);
  sub->add_flag("--polarity-zero-neg", in.polarity_zero_neg, "text polarity 0 means -1");
  sub->add_flag("--allow-unsorted", in.allow_unsorted, "stable-sort events by timestamp instead of rejecting");
  sub->add_option("--t0", in.t0, "window origin in microseconds (default: first event floored to dt)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evhta: hierarchical temporal aggregation of event streams"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonOptions common;
  InputOptions input;

  EncodeOptions enc;
  auto* encode = app.add_subcommand("encode", "encode event files into pseudo-RGB frames");
  add_common(encode, common);
  add_input(encode, input);
  encode->add_option("--input,-i", enc.inputs, "event file(s)")->required();
  encode->add_option("--out,-o", enc.out_dir, "output directory")->required();
  encode->add_option("--format", enc.format, "png | htf | htf-f32 | both")
      ->check(CLI::IsMember({"png", "htf", "htf-f32", "both"}));
  encode->add_option("--checkpoint", enc.checkpoint, "write the final encoder state (HTS1)");
  encode->add_option("--resume", enc.resume, "start from an HTS1 checkpoint");
  encode->add_option("--threads", enc.threads, "parallel workers across input files")->check(CLI::PositiveNumber);

  VerifyOptions ver;
  auto* verify = app.add_subcommand("verify", "compare the encoder against the brute-force oracle");
  add_common(verify, common);
  add_input(verify, input);
  verify->add_option("--input,-i", ver.input, "event file");
  verify->add_option("--synth-seed", ver.synth_seed, "use a generated scene instead of a file");
  verify->add_option("--perturb", ver.perturb, "override a key for the oracle run only, key=value");
  verify->add_option("--tolerance", ver.tolerance, "max pre-quantization divergence");

  BenchOptions bo;
  auto* bench = app.add_subcommand("bench", "measure encoder throughput on a seeded synthetic stream");
  add_common(bench, common);
  bench->add_option("--seed", bo.seed);
  bench->add_option("--duration-ms", bo.duration_ms);
  bench->add_option("--noise-rate", bo.noise_rate, "background events/s per pixel");
  bench->add_option("--repeat", bo.repeat);
  bench->add_option("--baseline", bo.baseline, "baseline file with events_per_s=<n>");
  bench->add_option("--max-regression", bo.regression, "allowed fractional drop versus baseline");

  SynthOptions so;
  auto* synth_cmd = app.add_subcommand("synth", "generate a moving-bar event scene (EVH1 + mask)");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--out,-o", so.out, "EVH1 output file")->required();
  synth_cmd->add_option("--mask", so.mask, "HTF1 u8 mask sidecar, one channel per window");
  synth_cmd->add_option("--seed", so.scene.seed);
  synth_cmd->add_option("--duration-ms", so.duration_ms);
  synth_cmd->add_option("--noise-rate", so.scene.noise.rate, "background events/s per pixel");
  synth_cmd->add_option("--edge-rate", so.scene.bar.edge_rate, "events/s per edge pixel");
  synth_cmd->add_option("--bar-speed", so.scene.bar.speed, "px/s");
  synth_cmd->add_option("--bar-width", so.scene.bar.width, "px");
  synth_cmd->add_option("--bar-start", so.scene.bar.start_x, "left column at t = 0");
  synth_cmd->add_option("--direction", so.scene.bar.direction, "+1 or -1");

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "summarize an event file");
  add_common(inspect, common);
  add_input(inspect, input);
  inspect->add_option("input", inspect_path, "event file")->required();

  std::string fixtures = EVHTA_FIXTURE_DIR;
  std::vector<std::uint32_t> hyperedges;
  std::vector<std::uint64_t> seeds;
  auto* fcheck = app.add_subcommand("fhtf-check", "run the fusion forward-pass invariant suite");
  fcheck->add_option("--fixtures", fixtures, "directory holding golden FHW1 fixtures");
  fcheck->add_option("--hyperedges", hyperedges, "restrict the sweep to these hyperedge counts");
  fcheck->add_option("--seeds", seeds, "random seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  if (*encode) return cmd_encode(common, input, enc);
  if (*verify) return cmd_verify(common, input, ver);
  if (*bench) return cmd_bench(common, bo);
  if (*synth_cmd) return cmd_synth(common, so);
  if (*inspect) return cmd_inspect(common, input, inspect_path);
  if (*fcheck) return cmd_fhtf_check(fixtures, hyperedges, seeds);
  return kConfig;
}
