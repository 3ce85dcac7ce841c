#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>

#include "evhta/byteio.hpp"
#include "evhta/fft.hpp"
#include "evhta/fhtf.hpp"
#include "evhta/fhtf_checks.hpp"

using namespace evhta;
using namespace evhta::fhtf;

namespace {

const std::filesystem::path kFixtures = EVHTA_FIXTURE_DIR;

std::vector<fft::cplx> naive_dft(const std::vector<fft::cplx>& x) {
  const std::size_t n = x.size();
  std::vector<fft::cplx> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      out[k] += x[j] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>((j * k) % n) / n);
  return out;
}

// Single-channel parameters with identity projections and unit gate.
FHTFParams tiny_params(std::uint32_t hyperedges) {
  FHTFParams p;
  p.node_width = 1;
  p.key_dim = 1;
  p.hyperedges = hyperedges;
  p.prototypes = Tensor({hyperedges, 1}, 1.0f);
  p.mod_weight = Tensor({2, 4});
  p.mod_bias = Tensor({2});
  p.key_weight = Tensor({1, 1}, 1.0f);
  p.key_bias = Tensor({1});
  p.agg_weight = Tensor({1, 1}, 1.0f);
  p.agg_bias = Tensor({1});
  p.bcast_weight = Tensor({1, 1}, 1.0f);
  p.bcast_bias = Tensor({1});
  p.gate = Tensor({1}, 1.0f);
  return p;
}

ModelShape shape_with(std::uint32_t H) {
  ModelShape s;
  s.channels = {4, 6, 8};
  s.hyperedges = H;
  return s;
}

}  // namespace

TEST(Fft, MatchesNaiveDft) {
  Rng rng(3);
  for (std::size_t n : {1u, 2u, 3u, 5u, 8u, 12u, 21u, 64u, 84u, 97u}) {
    std::vector<fft::cplx> x(n);
    for (auto& v : x) v = {rng.symmetric(1.0), rng.symmetric(1.0)};
    const auto fast = fft::forward(x);
    const auto slow = naive_dft(x);
    for (std::size_t k = 0; k < n; ++k) EXPECT_LT(std::abs(fast[k] - slow[k]), 1e-10 * n) << "n=" << n;
  }
}

TEST(Spectral, Examples) {
  for (std::uint32_t N : {8u, 21u}) {
    NodeMatrix zero(N, 3);
    for (double v : spectral_descriptor(zero)) EXPECT_EQ(v, 0.0);

    NodeMatrix impulse(N, 1);
    impulse(N / 2, 0) = 1.0f;
    const auto d = spectral_descriptor(impulse);
    EXPECT_NEAR(d[0], 1.0, 1e-12);
    EXPECT_NEAR(d[1], 1.0, 1e-12);

    NodeMatrix constant(N, 1, 2.5f);
    const auto c = spectral_descriptor(constant);
    EXPECT_NEAR(c[0], 2.5, 1e-12);
    EXPECT_NEAR(c[1], N * 2.5, 1e-11);
  }
}

TEST(Pooled, MeanAndMax) {
  NodeMatrix X(3, 2);
  X(0, 0) = 1;
  X(1, 0) = -2;
  X(2, 0) = 4;
  X(0, 1) = -1;
  X(1, 1) = -3;
  X(2, 1) = -2;
  const auto s = pooled_statistics(X);
  EXPECT_DOUBLE_EQ(s[0], 1.0);
  EXPECT_DOUBLE_EQ(s[1], -2.0);
  EXPECT_DOUBLE_EQ(s[2], 4.0);
  EXPECT_DOUBLE_EQ(s[3], -1.0);
}

TEST(Anchors, ZeroModulationAndZeroPrototypes) {
  auto p = random_params(shape_with(8), 5);
  std::fill(p.mod_weight.data.begin(), p.mod_weight.data.end(), 0.0f);
  std::fill(p.mod_bias.data.begin(), p.mod_bias.data.end(), 0.0f);
  const std::vector<double> stats(2 * p.node_width, 0.7);
  const auto a = build_anchors(stats, stats, p);
  EXPECT_EQ(a.values, p.prototypes.data);

  auto q = random_params(shape_with(8), 6);
  std::fill(q.prototypes.data.begin(), q.prototypes.data.end(), 0.0f);
  const auto b = build_anchors(stats, stats, q);
  const auto shifted = build_anchors(stats, stats, q);
  for (std::uint32_t h = 1; h < b.rows; ++h)
    for (std::uint32_t j = 0; j < b.cols; ++j) EXPECT_EQ(b(h, j), b(0, j));  // shift only, same for every edge
  EXPECT_EQ(b, shifted);

  auto bad = stats;
  bad[0] = std::nan("");
  EXPECT_THROW(build_anchors(bad, stats, p), Error);
  EXPECT_THROW(build_anchors(std::vector<double>(3), stats, p), ShapeError);
}

TEST(Incidence, SingletonAndSymmetry) {
  auto p = random_params(shape_with(1), 9);
  const auto f = random_pyramid({4, 6, 8}, 8, 10);
  const NodeMatrix X = align_nodes(f, p);
  const auto A = build_anchors(spectral_descriptor(X), pooled_statistics(X), p);
  for (float v : build_incidence(X, A, p).values) EXPECT_EQ(v, 1.0f);

  auto q = random_params(shape_with(16), 9);
  AnchorMatrix same(16, q.key_dim, 0.0f);
  for (std::uint32_t h = 0; h < 16; ++h)
    for (std::uint32_t j = 0; j < q.key_dim; ++j) same(h, j) = 0.3f * (j + 1);
  for (float v : build_incidence(X, same, q).values) EXPECT_FLOAT_EQ(v, 1.0f / 16);
}

TEST(Refine, HandExample) {
  const auto p = tiny_params(1);
  NodeMatrix X(2, 1);
  X(0, 0) = 1;
  X(1, 0) = 3;
  const IncidenceMatrix inc(2, 1, 1.0f);
  const auto out = hypergraph_refine(X, inc, p);
  EXPECT_EQ(out(0, 0), 5.0f);
  EXPECT_EQ(out(1, 0), 7.0f);
}

TEST(Refine, ZeroGateAndZeroInput) {
  auto p = random_params(shape_with(8), 4);
  const auto f = random_pyramid({4, 6, 8}, 8, 5);
  const NodeMatrix X = align_nodes(f, p);
  const auto inc = build_incidence(X, build_anchors(spectral_descriptor(X), pooled_statistics(X), p), p);
  auto g = p;
  std::fill(g.gate.data.begin(), g.gate.data.end(), 0.0f);
  EXPECT_EQ(hypergraph_refine(X, inc, g), X);

  auto z = p;
  for (auto* t : {&z.agg_bias, &z.bcast_bias}) std::fill(t->data.begin(), t->data.end(), 0.0f);
  const NodeMatrix zero(X.rows, X.cols);
  for (float v : hypergraph_refine(zero, inc, z).values) EXPECT_EQ(v, 0.0f);
}

TEST(Temporal, ZeroGateIsIdentityButStateAdvances) {
  auto p = random_params(shape_with(8), 1);
  for (auto& s : p.scales) s.alpha = 0.0f;
  const auto f = random_pyramid({4, 6, 8}, 8, 2);
  const auto st = RecurrentState::zeros_like(f);
  const auto [out, next] = temporal_evolve(f, st, p);
  EXPECT_EQ(out, f);
  EXPECT_NE(next, st);
}

TEST(Temporal, ZeroInputZeroStateStaysZero) {
  auto p = random_params(shape_with(8), 1);
  for (auto& s : p.scales) std::fill(s.lstm_bias.data.begin(), s.lstm_bias.data.end(), 0.0f);
  auto f = random_pyramid({4, 6, 8}, 8, 2);
  for (auto& m : f.maps) std::fill(m.data.begin(), m.data.end(), 0.0f);
  const auto [out, next] = temporal_evolve(f, RecurrentState::zeros_like(f), p);
  for (const auto& m : out.maps)
    for (float v : m.data) EXPECT_EQ(v, 0.0f);
}

TEST(Forward, ComposedIdentityAndShapes) {
  for (std::uint32_t H : {1u, 4u, 8u, 16u, 32u, 64u}) {
    auto p = random_params(shape_with(H), 77);
    const auto f = random_pyramid({4, 6, 8}, 8, 78);
    ForwardTrace tr;
    const auto [out, next] = fhtf_forward(f, RecurrentState::zeros_like(f), p, &tr);
    EXPECT_EQ(tr.incidence.cols, H);
    for (std::size_t i = 0; i < kScales; ++i) EXPECT_EQ(out.maps[i].shape, f.maps[i].shape);

    for (auto& s : p.scales) s.alpha = 0.0f;
    std::fill(p.gate.data.begin(), p.gate.data.end(), 0.0f);
    EXPECT_EQ(fhtf_forward(f, RecurrentState::zeros_like(f), p).first, f);
  }
}

TEST(Forward, ParamsTableRoundTrip) {
  const auto p = random_params(shape_with(8), 3);
  const auto table = p.to_table();
  const auto q = FHTFParams::from_table(read_fhw1(write_fhw1(table)));
  EXPECT_EQ(q.to_table(), table);
  EXPECT_EQ(q.parameter_count(), p.parameter_count());
}

TEST(Golden, FixturesMatch) {
  for (const char* name : kGoldenFixtures) {
    const auto table = read_fhw1(bytes::read_file(kFixtures / name));
    std::string where;
    EXPECT_LE(golden_error(table, &where), 1e-5) << name << " worst at " << where;
  }
}

TEST(Golden, CorruptedFixtureDetected) {
  for (const char* name : kGoldenFixtures) {
    auto table = read_fhw1(bytes::read_file(kFixtures / name));
    TensorTable corrupted;
    for (const auto& [n, t] : table.entries()) {
      Tensor copy = t;
      if (n.starts_with("expected.")) copy.data[0] += 0.01f;
      corrupted.set(n, copy);
    }
    std::string where;
    EXPECT_GT(golden_error(corrupted, &where), 1e-5) << name;
    EXPECT_FALSE(where.empty());
  }
}

TEST(Checks, AllPassAndCorruptionIsNamed) {
  CheckOptions opt;
  opt.fixture_dir = kFixtures;
  for (const auto& r : run_checks(opt)) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;

  const auto tmp = std::filesystem::temp_directory_path() / "evhta_corrupt_fixtures";
  std::filesystem::create_directories(tmp);
  for (const char* name : kGoldenFixtures) std::filesystem::copy_file(kFixtures / name, tmp / name,
                                                                      std::filesystem::copy_options::overwrite_existing);
  auto data = bytes::read_file(tmp / "forward_seed123.fhw");
  data[data.size() - 6] ^= 0x40;  // flip a bit inside the last expected tensor
  bytes::write_file(tmp / "forward_seed123.fhw", data);
  opt.fixture_dir = tmp;
  std::vector<std::string> failed;
  for (const auto& r : run_checks(opt))
    if (!r.passed) failed.push_back(r.name);
  ASSERT_EQ(failed.size(), 1u);
  EXPECT_EQ(failed[0], "golden:forward_seed123.fhw");
  std::filesystem::remove_all(tmp);
}
