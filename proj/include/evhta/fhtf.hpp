#pragma once

// Forward-pass reference for frequency-aware hypergraph temporal fusion over a
// three-scale feature pyramid:
//
//   1. per scale, a residual-gated ConvLSTM step:  f^ = f + alpha * h'
//   2. per-scale affine projection to a common width C, tokens concatenated
//      into a node matrix X (N x C)
//   3. spectral statistics of X (DFT along the token axis, per channel) plus
//      pooled statistics modulate a prototype matrix into H hyperedge anchors
//   4. soft incidence by scaled dot-product softmax over hyperedges
//   5. dual-hop refinement  X' = X + gate * bcast(Hm * agg(Hm^T X))
//   6. the refinement is projected back onto each scale and added residually.
//
// Weights are supplied constants (FHW1 files); nothing here trains.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evhta/error.hpp"
#include "evhta/fft.hpp"
#include "evhta/rng.hpp"
#include "evhta/tensor.hpp"

namespace evhta::fhtf {

inline constexpr std::size_t kScales = 3;

/// Row-major float matrix.
struct Matrix {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values;

  Matrix() = default;
  Matrix(std::uint32_t r, std::uint32_t c, float fill = 0.0f) : rows(r), cols(c), values(std::size_t{r} * c, fill) {}

  float& operator()(std::size_t r, std::size_t c) noexcept { return values[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const noexcept { return values[r * cols + c]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

using NodeMatrix = Matrix;       // N tokens x C channels
using IncidenceMatrix = Matrix;  // N tokens x H hyperedges
using AnchorMatrix = Matrix;     // H hyperedges x d_k

struct FeatureMapSet {
  std::array<Tensor, kScales> maps;  // each C_i x H_i x W_i
  std::int64_t timestep = 0;

  void validate() const {
    for (std::size_t i = 0; i < kScales; ++i) {
      const auto& m = maps[i];
      if (m.rank() != 3 || m.dim(0) < 1 || m.dim(1) < 1 || m.dim(2) < 1)
        throw ShapeError("feature scale " + std::to_string(i) + " must be a non-empty C x H x W tensor, got " +
                         m.shape_string());
    }
  }
  std::size_t tokens() const {
    std::size_t n = 0;
    for (const auto& m : maps) n += std::size_t{m.dim(1)} * m.dim(2);
    return n;
  }

  friend bool operator==(const FeatureMapSet&, const FeatureMapSet&) = default;
};

struct RecurrentState {
  std::array<Tensor, kScales> hidden;
  std::array<Tensor, kScales> cell;

  static RecurrentState zeros_like(const FeatureMapSet& f) {
    RecurrentState s;
    for (std::size_t i = 0; i < kScales; ++i) s.hidden[i] = s.cell[i] = Tensor(f.maps[i].shape);
    return s;
  }

  friend bool operator==(const RecurrentState&, const RecurrentState&) = default;
};

struct ScaleWeights {
  float alpha = 0.0f;   // residual gate, zero at initialization
  Tensor lstm_weight;   // 4C_i x 2C_i x k x k, gate order (input, forget, cell, output), input order (x, h)
  Tensor lstm_bias;     // 4C_i
  Tensor in_weight;     // C x C_i
  Tensor in_bias;       // C
  Tensor out_weight;    // C_i x C

  std::uint32_t channels() const { return lstm_bias.size() ? static_cast<std::uint32_t>(lstm_bias.size() / 4) : 0; }
  std::uint32_t kernel() const { return lstm_weight.rank() == 4 ? lstm_weight.dim(2) : 0; }
};

/// Layer sizes used to build or check a parameter set.
struct ModelShape {
  std::array<std::uint32_t, kScales> channels{8, 8, 8};
  std::uint32_t node_width = 8;  // C
  std::uint32_t key_dim = 4;     // d_k
  std::uint32_t hyperedges = 8;  // H
  std::uint32_t kernel = 3;      // ConvLSTM kernel k_r
};

struct FHTFParams {
  std::array<ScaleWeights, kScales> scales;
  std::uint32_t node_width = 0;
  std::uint32_t key_dim = 0;
  std::uint32_t hyperedges = 0;
  Tensor prototypes;    // H x d_k
  Tensor mod_weight;    // 2 d_k x 4C: [spectral mean, spectral max, pooled mean, pooled max] -> (scale, shift)
  Tensor mod_bias;      // 2 d_k
  Tensor key_weight;    // d_k x C
  Tensor key_bias;      // d_k
  Tensor agg_weight;    // C x C
  Tensor agg_bias;      // C
  Tensor bcast_weight;  // C x C
  Tensor bcast_bias;    // C
  Tensor gate;          // C, channel-wise refinement gate
  float temperature = 1.0f;

  ModelShape shape() const {
    ModelShape s;
    for (std::size_t i = 0; i < kScales; ++i) s.channels[i] = scales[i].channels();
    s.node_width = node_width;
    s.key_dim = key_dim;
    s.hyperedges = hyperedges;
    s.kernel = scales[0].kernel();
    return s;
  }

  void validate() const {
    if (hyperedges < 1) throw ShapeError("hyperedge count must be >= 1");
    if (key_dim < 1) throw ShapeError("key dimension must be >= 1");
    if (node_width < 1) throw ShapeError("node width must be >= 1");
    if (!(temperature > 0.0f) || !std::isfinite(temperature)) throw ShapeError("incidence temperature must be > 0");
    auto expect = [](const Tensor& t, std::vector<std::uint32_t> s, const char* name) {
      if (t.shape != s) {
        Tensor e(std::move(s));
        throw ShapeError(std::string(name) + " has shape " + t.shape_string() + ", expected " + e.shape_string());
      }
    };
    const std::uint32_t C = node_width, dk = key_dim;
    for (const auto& s : scales) {
      const std::uint32_t ci = s.channels(), k = s.kernel();
      if (ci < 1) throw ShapeError("scale channel count must be >= 1");
      if (k % 2 == 0) throw ShapeError("ConvLSTM kernel size must be odd");
      if (!std::isfinite(s.alpha)) throw ShapeError("alpha must be finite");
      expect(s.lstm_weight, {4 * ci, 2 * ci, k, k}, "lstm weight");
      expect(s.lstm_bias, {4 * ci}, "lstm bias");
      expect(s.in_weight, {C, ci}, "input projection weight");
      expect(s.in_bias, {C}, "input projection bias");
      expect(s.out_weight, {ci, C}, "output projection weight");
    }
    expect(prototypes, {hyperedges, dk}, "prototypes");
    expect(mod_weight, {2 * dk, 4 * C}, "modulation weight");
    expect(mod_bias, {2 * dk}, "modulation bias");
    expect(key_weight, {dk, C}, "key weight");
    expect(key_bias, {dk}, "key bias");
    expect(agg_weight, {C, C}, "aggregation weight");
    expect(agg_bias, {C}, "aggregation bias");
    expect(bcast_weight, {C, C}, "broadcast weight");
    expect(bcast_bias, {C}, "broadcast bias");
    expect(gate, {C}, "gate");
    for (float g : gate.data)
      if (!std::isfinite(g)) throw ShapeError("gate must be finite");
  }

  /// Scalar parameter count. Only the prototype matrix depends on H.
  std::size_t parameter_count() const {
    std::size_t n = 1;  // temperature
    for (const auto& s : scales)
      n += 1 + s.lstm_weight.size() + s.lstm_bias.size() + s.in_weight.size() + s.in_bias.size() + s.out_weight.size();
    for (const Tensor* t : {&prototypes, &mod_weight, &mod_bias, &key_weight, &key_bias, &agg_weight, &agg_bias,
                            &bcast_weight, &bcast_bias, &gate})
      n += t->size();
    return n;
  }

  TensorTable to_table() const {
    TensorTable t;
    Tensor alpha({kScales});
    for (std::size_t i = 0; i < kScales; ++i) alpha[i] = scales[i].alpha;
    t.set("alpha", alpha);
    for (std::size_t i = 0; i < kScales; ++i) {
      const auto p = std::to_string(i);
      t.set("lstm." + p + ".weight", scales[i].lstm_weight);
      t.set("lstm." + p + ".bias", scales[i].lstm_bias);
      t.set("in_proj." + p + ".weight", scales[i].in_weight);
      t.set("in_proj." + p + ".bias", scales[i].in_bias);
      t.set("out_proj." + p + ".weight", scales[i].out_weight);
    }
    t.set("prototypes", prototypes);
    t.set("mod.weight", mod_weight);
    t.set("mod.bias", mod_bias);
    t.set("key.weight", key_weight);
    t.set("key.bias", key_bias);
    t.set("agg.weight", agg_weight);
    t.set("agg.bias", agg_bias);
    t.set("bcast.weight", bcast_weight);
    t.set("bcast.bias", bcast_bias);
    t.set("gate", gate);
    t.set("temperature", Tensor({1}, temperature));
    return t;
  }

  static FHTFParams from_table(const TensorTable& t) {
    FHTFParams p;
    const Tensor& alpha = t.get("alpha");
    if (alpha.size() != kScales) throw ShapeError("alpha must hold one gate per scale");
    for (std::size_t i = 0; i < kScales; ++i) {
      const auto s = std::to_string(i);
      auto& w = p.scales[i];
      w.alpha = alpha[i];
      w.lstm_weight = t.get("lstm." + s + ".weight");
      w.lstm_bias = t.get("lstm." + s + ".bias");
      w.in_weight = t.get("in_proj." + s + ".weight");
      w.in_bias = t.get("in_proj." + s + ".bias");
      w.out_weight = t.get("out_proj." + s + ".weight");
    }
    p.prototypes = t.get("prototypes");
    if (p.prototypes.rank() != 2) throw ShapeError("prototypes must be H x d_k");
    p.hyperedges = p.prototypes.dim(0);
    p.key_dim = p.prototypes.dim(1);
    p.gate = t.get("gate");
    p.node_width = static_cast<std::uint32_t>(p.gate.size());
    p.mod_weight = t.get("mod.weight");
    p.mod_bias = t.get("mod.bias");
    p.key_weight = t.get("key.weight");
    p.key_bias = t.get("key.bias");
    p.agg_weight = t.get("agg.weight");
    p.agg_bias = t.get("agg.bias");
    p.bcast_weight = t.get("bcast.weight");
    p.bcast_bias = t.get("bcast.bias");
    if (const Tensor* temp = t.find("temperature")) p.temperature = temp->size() ? (*temp)[0] : 1.0f;
    p.validate();
    return p;
  }
};

/// Uniform(-scale, scale) weights with zero LSTM biases and nonzero gates.
inline FHTFParams random_params(const ModelShape& shape, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  auto fill = [&](std::vector<std::uint32_t> s, double half) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = static_cast<float>(rng.symmetric(half));
    return t;
  };
  FHTFParams p;
  const std::uint32_t C = shape.node_width, dk = shape.key_dim, k = shape.kernel;
  p.node_width = C;
  p.key_dim = dk;
  p.hyperedges = shape.hyperedges;
  for (std::size_t i = 0; i < kScales; ++i) {
    const std::uint32_t ci = shape.channels[i];
    auto& w = p.scales[i];
    w.alpha = static_cast<float>(0.5 + rng.uniform());
    w.lstm_weight = fill({4 * ci, 2 * ci, k, k}, scale);
    w.lstm_bias = Tensor({4 * ci});
    w.in_weight = fill({C, ci}, scale);
    w.in_bias = fill({C}, scale);
    w.out_weight = fill({ci, C}, scale);
  }
  // Everything outside the prototypes is drawn first, so for a fixed seed the
  // non-prototype weights do not depend on H.
  p.mod_weight = fill({2 * dk, 4 * C}, scale * 0.1);
  p.mod_bias = fill({2 * dk}, scale);
  p.key_weight = fill({dk, C}, scale);
  p.key_bias = fill({dk}, scale);
  p.agg_weight = fill({C, C}, scale);
  p.agg_bias = fill({C}, scale);
  p.bcast_weight = fill({C, C}, scale);
  p.bcast_bias = fill({C}, scale);
  p.gate = fill({C}, 1.0);
  p.prototypes = fill({shape.hyperedges, dk}, 1.0);
  p.temperature = 1.0f;
  return p;
}

/// Pyramid with spatial sizes (side, side/2, side/4) clamped to >= 1, values uniform in [-1, 1].
inline FeatureMapSet random_pyramid(const std::array<std::uint32_t, kScales>& channels, std::uint32_t side,
                                    std::uint64_t seed) {
  Rng rng(seed);
  FeatureMapSet f;
  for (std::size_t i = 0; i < kScales; ++i) {
    const std::uint32_t s = std::max<std::uint32_t>(1, side >> i);
    f.maps[i] = Tensor({channels[i], s, s});
    for (auto& v : f.maps[i].data) v = static_cast<float>(rng.symmetric(1.0));
  }
  return f;
}

// ---------------------------------------------------------------------------

namespace detail {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(what) + ": shape " + a.shape_string() + " vs " + b.shape_string());
}

// One ConvLSTM step at a single scale. Returns (h', c').
inline std::pair<Tensor, Tensor> convlstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                               const ScaleWeights& w) {
  const std::uint32_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (w.channels() != C) throw ShapeError("ConvLSTM channel count does not match feature map");
  const long k = w.kernel(), pad = k / 2;
  const std::size_t plane = std::size_t{H} * W;
  std::vector<double> gates(std::size_t{4} * C * plane);
  for (std::uint32_t oc = 0; oc < 4 * C; ++oc) {
    for (std::uint32_t y = 0; y < H; ++y) {
      for (std::uint32_t xx = 0; xx < W; ++xx) {
        double acc = w.lstm_bias[oc];
        for (std::uint32_t ic = 0; ic < 2 * C; ++ic) {
          const Tensor& src = ic < C ? x : h;
          const std::uint32_t sc = ic < C ? ic : ic - C;
          for (long ky = 0; ky < k; ++ky) {
            const long yy = static_cast<long>(y) + ky - pad;
            if (yy < 0 || yy >= static_cast<long>(H)) continue;
            for (long kx = 0; kx < k; ++kx) {
              const long xs = static_cast<long>(xx) + kx - pad;
              if (xs < 0 || xs >= static_cast<long>(W)) continue;
              const float wt = w.lstm_weight[((std::size_t{oc} * 2 * C + ic) * k + ky) * k + kx];
              acc += static_cast<double>(wt) * src.at(sc, yy, xs);
            }
          }
        }
        gates[oc * plane + y * W + xx] = acc;
      }
    }
  }
  Tensor h2(x.shape), c2(x.shape);
  for (std::uint32_t ch = 0; ch < C; ++ch) {
    for (std::size_t p = 0; p < plane; ++p) {
      const double i = sigmoid(gates[(0 * C + ch) * plane + p]);
      const double f = sigmoid(gates[(1 * C + ch) * plane + p]);
      const double g = std::tanh(gates[(2 * C + ch) * plane + p]);
      const double o = sigmoid(gates[(3 * C + ch) * plane + p]);
      const double cn = f * c[ch * plane + p] + i * g;
      c2[ch * plane + p] = static_cast<float>(cn);
      h2[ch * plane + p] = static_cast<float>(o * std::tanh(cn));
    }
  }
  return {std::move(h2), std::move(c2)};
}

// y = W x + b for each row x of `in` (rows x in_cols), W is out_cols x in_cols.
inline std::vector<double> affine_rows(const std::vector<double>& in, std::size_t rows, std::size_t in_cols,
                                       const Tensor& weight, const Tensor* bias) {
  const std::size_t out_cols = weight.dim(0);
  std::vector<double> out(rows * out_cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out_cols; ++o) {
      double acc = bias ? (*bias)[o] : 0.0;
      for (std::size_t i = 0; i < in_cols; ++i) acc += static_cast<double>(weight[o * in_cols + i]) * in[r * in_cols + i];
      out[r * out_cols + o] = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Residual-gated recurrent step on every scale. A zero gate returns the input
/// maps unchanged while the state still advances.
inline std::pair<FeatureMapSet, RecurrentState> temporal_evolve(const FeatureMapSet& f, const RecurrentState& state,
                                                                const FHTFParams& params) {
  f.validate();
  FeatureMapSet out = f;
  RecurrentState next;
  for (std::size_t i = 0; i < kScales; ++i) {
    detail::require_same(f.maps[i], state.hidden[i], "temporal_evolve hidden state");
    detail::require_same(f.maps[i], state.cell[i], "temporal_evolve cell state");
    auto [h, c] = detail::convlstm_step(f.maps[i], state.hidden[i], state.cell[i], params.scales[i]);
    const float alpha = params.scales[i].alpha;
    if (alpha != 0.0f)
      for (std::size_t j = 0; j < h.size(); ++j)
        out.maps[i][j] = static_cast<float>(f.maps[i][j] + static_cast<double>(alpha) * h[j]);
    next.hidden[i] = std::move(h);
    next.cell[i] = std::move(c);
  }
  return {std::move(out), std::move(next)};
}

/// Projects every scale to the common node width and concatenates tokens
/// (scale 0 first, pixels row-major).
inline NodeMatrix align_nodes(const FeatureMapSet& f, const FHTFParams& params) {
  f.validate();
  const std::uint32_t C = params.node_width;
  NodeMatrix X(static_cast<std::uint32_t>(f.tokens()), C);
  std::size_t row = 0;
  for (std::size_t i = 0; i < kScales; ++i) {
    const Tensor& m = f.maps[i];
    const auto& w = params.scales[i];
    const std::uint32_t ci = m.dim(0);
    if (w.in_weight.shape != std::vector<std::uint32_t>{C, ci})
      throw ShapeError("input projection does not match scale " + std::to_string(i));
    const std::size_t plane = std::size_t{m.dim(1)} * m.dim(2);
    for (std::size_t p = 0; p < plane; ++p, ++row) {
      for (std::uint32_t c = 0; c < C; ++c) {
        double acc = w.in_bias[c];
        for (std::uint32_t k = 0; k < ci; ++k) acc += static_cast<double>(w.in_weight[c * ci + k]) * m[k * plane + p];
        X(row, c) = static_cast<float>(acc);
      }
    }
  }
  return X;
}

/// [mean_k |F(X)|_kc, max_k |F(X)|_kc] per channel c, F the un-normalized DFT
/// over the token axis. Length 2C.
inline std::vector<double> spectral_descriptor(const NodeMatrix& X) {
  if (X.rows < 1) throw ShapeError("spectral_descriptor needs at least one token");
  std::vector<double> out(2 * std::size_t{X.cols}, 0.0);
  std::vector<fft::cplx> column(X.rows);
  for (std::uint32_t c = 0; c < X.cols; ++c) {
    for (std::uint32_t n = 0; n < X.rows; ++n) column[n] = X(n, c);
    const auto spectrum = fft::forward(column);
    double sum = 0.0, peak = 0.0;
    for (const auto& v : spectrum) {
      const double a = std::abs(v);
      sum += a;
      peak = std::max(peak, a);
    }
    out[c] = sum / X.rows;
    out[X.cols + c] = peak;
  }
  return out;
}

/// Global mean and max over all tokens, per channel. Length 2C.
inline std::vector<double> pooled_statistics(const NodeMatrix& X) {
  if (X.rows < 1) throw ShapeError("pooled_statistics needs at least one token");
  std::vector<double> out(2 * std::size_t{X.cols});
  for (std::uint32_t c = 0; c < X.cols; ++c) {
    double sum = 0.0, peak = X(0, c);
    for (std::uint32_t n = 0; n < X.rows; ++n) {
      sum += X(n, c);
      peak = std::max<double>(peak, X(n, c));
    }
    out[c] = sum / X.rows;
    out[X.cols + c] = peak;
  }
  return out;
}

/// anchors = P * (1 + scale) + shift, with (scale, shift) an affine map of the
/// concatenated spectral and pooled statistics, broadcast over hyperedges.
inline AnchorMatrix build_anchors(const std::vector<double>& descriptor, const std::vector<double>& pooled,
                                  const FHTFParams& params) {
  const std::size_t C = params.node_width, dk = params.key_dim;
  if (descriptor.size() != 2 * C || pooled.size() != 2 * C)
    throw ShapeError("anchor statistics must have length 2C");
  std::vector<double> stats(descriptor);
  stats.insert(stats.end(), pooled.begin(), pooled.end());
  for (double v : stats)
    if (!std::isfinite(v)) throw Error("build_anchors: non-finite statistics");
  const auto mod = detail::affine_rows(stats, 1, 4 * C, params.mod_weight, &params.mod_bias);
  AnchorMatrix a(params.hyperedges, params.key_dim);
  for (std::size_t h = 0; h < params.hyperedges; ++h)
    for (std::size_t j = 0; j < dk; ++j)
      a(h, j) = static_cast<float>(params.prototypes[h * dk + j] * (1.0 + mod[j]) + mod[dk + j]);
  return a;
}

/// Row n: softmax_h(key(X_n) . anchor_h / (sqrt(d_k) * T)).
inline IncidenceMatrix build_incidence(const NodeMatrix& X, const AnchorMatrix& anchors, const FHTFParams& params) {
  const std::size_t dk = params.key_dim, H = anchors.rows;
  if (X.cols != params.node_width || anchors.cols != dk) throw ShapeError("build_incidence: shape mismatch");
  std::vector<double> x(X.values.begin(), X.values.end());
  const auto keys = detail::affine_rows(x, X.rows, X.cols, params.key_weight, &params.key_bias);
  const double scale = 1.0 / (std::sqrt(static_cast<double>(dk)) * params.temperature);
  IncidenceMatrix inc(X.rows, static_cast<std::uint32_t>(H));
  std::vector<double> logits(H);
  for (std::size_t n = 0; n < X.rows; ++n) {
    for (std::size_t h = 0; h < H; ++h) {
      double dot = 0.0;
      for (std::size_t j = 0; j < dk; ++j) dot += keys[n * dk + j] * anchors(h, j);
      logits[h] = dot * scale;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (auto& l : logits) total += (l = std::exp(l - top));
    for (std::size_t h = 0; h < H; ++h) inc(n, h) = static_cast<float>(logits[h] / total);
  }
  return inc;
}

/// gate * bcast(Hm * agg(Hm^T X)), the refinement term added to X.
inline NodeMatrix refinement_term(const NodeMatrix& X, const IncidenceMatrix& inc, const FHTFParams& params) {
  const std::size_t N = X.rows, C = X.cols, H = inc.cols;
  if (inc.rows != N || C != params.node_width) throw ShapeError("hypergraph_refine: shape mismatch");
  std::vector<double> edges(H * C, 0.0);  // Hm^T X, unnormalized
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t h = 0; h < H; ++h) {
      const double a = inc(n, h);
      for (std::size_t c = 0; c < C; ++c) edges[h * C + c] += a * X(n, c);
    }
  const auto agg = detail::affine_rows(edges, H, C, params.agg_weight, &params.agg_bias);
  std::vector<double> nodes(N * C, 0.0);  // Hm * agg
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t h = 0; h < H; ++h) {
      const double a = inc(n, h);
      for (std::size_t c = 0; c < C; ++c) nodes[n * C + c] += a * agg[h * C + c];
    }
  const auto bc = detail::affine_rows(nodes, N, C, params.bcast_weight, &params.bcast_bias);
  NodeMatrix term(static_cast<std::uint32_t>(N), static_cast<std::uint32_t>(C));
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) term(n, c) = static_cast<float>(params.gate[c] * bc[n * C + c]);
  return term;
}

/// X' = X + refinement_term; channels with a zero gate are left untouched.
inline NodeMatrix hypergraph_refine(const NodeMatrix& X, const IncidenceMatrix& inc, const FHTFParams& params) {
  const NodeMatrix term = refinement_term(X, inc, params);
  NodeMatrix out = X;
  for (std::size_t n = 0; n < X.rows; ++n)
    for (std::size_t c = 0; c < X.cols; ++c)
      if (params.gate[c] != 0.0f) out(n, c) = X(n, c) + term(n, c);
  return out;
}

/// Adds the per-scale output projection of the refinement term back onto the maps.
inline FeatureMapSet scatter_refinement(const FeatureMapSet& f, const NodeMatrix& term, const FHTFParams& params) {
  if (term.rows != f.tokens() || term.cols != params.node_width) throw ShapeError("scatter: token count mismatch");
  std::vector<std::size_t> live;
  for (std::size_t c = 0; c < term.cols; ++c)
    if (params.gate[c] != 0.0f) live.push_back(c);
  FeatureMapSet out = f;
  if (live.empty()) return out;
  std::size_t row = 0;
  for (std::size_t i = 0; i < kScales; ++i) {
    Tensor& m = out.maps[i];
    const std::uint32_t ci = m.dim(0);
    const std::size_t plane = std::size_t{m.dim(1)} * m.dim(2);
    const Tensor& w = params.scales[i].out_weight;
    for (std::size_t p = 0; p < plane; ++p, ++row) {
      for (std::uint32_t k = 0; k < ci; ++k) {
        double acc = 0.0;
        for (std::size_t c : live) acc += static_cast<double>(w[k * term.cols + c]) * term(row, c);
        m[k * plane + p] = static_cast<float>(m[k * plane + p] + acc);
      }
    }
  }
  return out;
}

/// Intermediate tensors of one forward pass, exposed for inspection.
struct ForwardTrace {
  FeatureMapSet evolved;
  NodeMatrix nodes;
  std::vector<double> descriptor;
  std::vector<double> pooled;
  AnchorMatrix anchors;
  IncidenceMatrix incidence;
  NodeMatrix refinement;
};

inline std::pair<FeatureMapSet, RecurrentState> fhtf_forward(const FeatureMapSet& pyramid,
                                                             const RecurrentState& state, const FHTFParams& params,
                                                             ForwardTrace* trace = nullptr) {
  params.validate();
  auto [evolved, next] = temporal_evolve(pyramid, state, params);
  NodeMatrix X = align_nodes(evolved, params);
  auto descriptor = spectral_descriptor(X);
  auto pooled = pooled_statistics(X);
  AnchorMatrix anchors = build_anchors(descriptor, pooled, params);
  IncidenceMatrix inc = build_incidence(X, anchors, params);
  NodeMatrix term = refinement_term(X, inc, params);
  FeatureMapSet out = scatter_refinement(evolved, term, params);
  out.timestep = pyramid.timestep;
  if (trace)
    *trace = ForwardTrace{std::move(evolved), std::move(X), std::move(descriptor), std::move(pooled),
                          std::move(anchors), std::move(inc), std::move(term)};
  return {std::move(out), std::move(next)};
}

}  // namespace evhta::fhtf
