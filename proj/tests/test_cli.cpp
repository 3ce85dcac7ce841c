#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "evhta/byteio.hpp"
#include "evhta/event_io.hpp"
#include "evhta/frame_io.hpp"

namespace fs = std::filesystem;
using namespace evhta;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("evhta_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args, const std::string& env = "EVHTA_CONFIG=") {
    const fs::path log = dir_ / "log.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" + std::string(EVHTA_CLI_PATH) + "' " +
                            args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
  }

  void write_text(const std::string& name, const std::string& text) { std::ofstream(dir_ / name) << text; }

  fs::path dir_;
};

std::size_t count_ext(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

}  // namespace

TEST_F(Cli, EncodeThreeWindowFileWritesThreePngs) {
  const std::vector<Event> ev{{1, 1, 0, 1}, {2, 2, 60'000, -1}, {3, 3, 140'000, 1}};
  bytes::write_file(dir_ / "a.evh", write_evh1(ev, SensorGeometry{}));
  write_text("hta.cfg", "tau = 2\n");
  const auto r = run("encode --input a.evh --out frames --config hta.cfg");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(count_ext(dir_ / "frames", ".png"), 3u);
  EXPECT_NE(r.out.find("windows=3"), std::string::npos);
  EXPECT_NE(r.out.find("events=3"), std::string::npos);
  EXPECT_NE(r.out.find("events_per_s="), std::string::npos);
  EXPECT_NE(r.out.find("frame_hash="), std::string::npos);
  const auto img = decode_png(bytes::read_file(dir_ / "frames" / "frame_000002.png"));
  EXPECT_EQ(img.width, 304u);
  EXPECT_GT(img.at(3, 3, 1), 0);
}

TEST_F(Cli, FormatsAreSelectableAndHashesStable) {
  write_text("e.txt", "0,1,1,1\n10,2,2,0\n70000,5,5,1\n");
  const auto a = run("encode -i e.txt -o htf --format htf --polarity-zero-neg");
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(count_ext(dir_ / "htf", ".htf"), 2u);
  EXPECT_EQ(count_ext(dir_ / "htf", ".png"), 0u);
  const auto t = read_htf1(bytes::read_file(dir_ / "htf" / "frame_000000.htf"));
  EXPECT_EQ(t.channels, 3u);
  const auto b = run("encode -i e.txt -o both --format both --polarity-zero-neg");
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(count_ext(dir_ / "both", ".png"), 2u);
  const std::regex hash("frame_hash=([0-9a-f]{16})");
  std::smatch ma, mb;
  ASSERT_TRUE(std::regex_search(a.out, ma, hash));
  ASSERT_TRUE(std::regex_search(b.out, mb, hash));
  EXPECT_EQ(ma[1], mb[1]);
  EXPECT_EQ(run("encode -i e.txt -o x --format jpeg").code, 2);
  EXPECT_EQ(run("encode -i e.txt -o x --text --binary").code, 2);
}

TEST_F(Cli, ErrorExitCodes) {
  auto r = run("encode --input missing.evh --out f");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("missing.evh"), std::string::npos);

  write_text("e.txt", "0,1,1,1\n");
  write_text("bad.cfg", "tua = 1\n");
  r = run("encode -i e.txt -o f --config bad.cfg");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("tua"), std::string::npos);

  r = run("encode -i e.txt -o f", "EVHTA_CONFIG=bad.cfg");
  EXPECT_EQ(r.code, 2) << "config from environment";

  r = run("encode -i e.txt -o f --set kappa_max=40");
  EXPECT_EQ(r.code, 2);

  write_text("broken.txt", "0,1,1,1\n5,1,1\n");
  r = run("encode -i broken.txt -o f");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("line 2"), std::string::npos);

  r = run("frobnicate");
  EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, FlagOverridesBeatConfigFile) {
  write_text("a.cfg", "tau = 3\n");
  const auto r = run("encode -i none -o f --config a.cfg --set tau=4.5 --dump-config");
  EXPECT_NE(r.out.find("tau = 4.5"), std::string::npos) << r.out;
  const auto env = run("inspect --dump-config none", "EVHTA_CONFIG=a.cfg");
  EXPECT_EQ(env.code, 3);
}

TEST_F(Cli, SynthInspectVerify) {
  auto r = run("synth -o s.evh --mask m.htf --duration-ms 300 --noise-rate 4 --seed 9");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto again = run("synth -o s2.evh --duration-ms 300 --noise-rate 4 --seed 9");
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(bytes::read_file(dir_ / "s.evh"), bytes::read_file(dir_ / "s2.evh"));
  const auto mask = read_htf1(bytes::read_file(dir_ / "m.htf"));
  EXPECT_EQ(mask.channels, 6u);
  EXPECT_EQ(mask.dtype, HtfDtype::u8);

  r = run("inspect s.evh");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("record_count="), std::string::npos);
  EXPECT_NE(r.out.find("windows: 6"), std::string::npos);
  std::smatch m;
  ASSERT_TRUE(std::regex_search(r.out, m, std::regex("events: (\\d+)")));
  // Expected: noise 4 * 0.3 s * pixels + two bar edges 400 * 0.3 s * height.
  const double expected = 4 * 0.3 * 304 * 240 + 2 * 400 * 0.3 * 240;
  EXPECT_LE(std::fabs(std::stod(m[1]) - expected), 5 * std::sqrt(expected));

  r = run("verify -i s.evh");
  EXPECT_EQ(r.code, 0) << r.out;
  ASSERT_TRUE(std::regex_search(r.out, m, std::regex("max_divergence=([0-9.e+-]+)")));
  EXPECT_LE(std::stod(m[1]), 1e-6);

  r = run("verify -i s.evh --perturb tau=2.5");
  EXPECT_EQ(r.code, 4);

  auto data = bytes::read_file(dir_ / "s.evh");
  data.resize(data.size() - 5);
  bytes::write_file(dir_ / "t.evh", data);
  r = run("inspect t.evh");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("offset"), std::string::npos);
}

TEST_F(Cli, VerifyEmptyStream) {
  write_text("empty.txt", "");
  const auto r = run("verify -i empty.txt --text");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("max_divergence=0.000e+00"), std::string::npos);
}

TEST_F(Cli, CheckpointResumeMatchesSingleRun) {
  ASSERT_EQ(run("synth -o s.evh --duration-ms 200 --noise-rate 2").code, 0);
  const auto all = bytes::read_file(dir_ / "s.evh");
  const auto ev = parse_binary_stream(all);
  std::vector<Event> head, tail;
  for (const auto& e : ev) (e.t < 100'000 ? head : tail).push_back(e);
  bytes::write_file(dir_ / "head.evh", write_evh1(head, SensorGeometry{}));
  bytes::write_file(dir_ / "tail.evh", write_evh1(tail, SensorGeometry{}));
  ASSERT_EQ(run("encode -i s.evh -o full --format htf --t0 0").code, 0);
  ASSERT_EQ(run("encode -i head.evh -o part --format htf --t0 0 --checkpoint st.hts").code, 0);
  const auto r = run("encode -i tail.evh -o part --format htf --t0 0 --resume st.hts");
  ASSERT_EQ(r.code, 0) << r.out;
  // Checkpoints hold 32-bit maps, so resumed frames may differ by rounding only.
  for (int k = 2; k < 4; ++k) {
    const std::string name = "frame_00000" + std::to_string(k) + ".htf";
    const auto a = read_htf1(bytes::read_file(dir_ / "full" / name));
    const auto b = read_htf1(bytes::read_file(dir_ / "part" / name));
    ASSERT_EQ(a.u8.size(), b.u8.size());
    for (std::size_t i = 0; i < a.u8.size(); ++i) EXPECT_LE(std::abs(int(a.u8[i]) - int(b.u8[i])), 1);
  }
}

TEST_F(Cli, MultipleInputsWithThreads) {
  ASSERT_EQ(run("synth -o a.evh --duration-ms 100 --noise-rate 1 --seed 1").code, 0);
  ASSERT_EQ(run("synth -o b.evh --duration-ms 150 --noise-rate 1 --seed 2").code, 0);
  const auto r = run("encode -i a.evh b.evh -o out --threads 2");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(count_ext(dir_ / "out" / "a", ".png"), 2u);
  EXPECT_EQ(count_ext(dir_ / "out" / "b", ".png"), 3u);
}

TEST_F(Cli, BenchIsDeterministic) {
  const auto r = run("bench --duration-ms 300 --repeat 2");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("deterministic=yes"), std::string::npos);
  EXPECT_TRUE(std::regex_search(r.out, std::regex("bench: events_per_s=\\d+ ms_per_frame=[0-9.]+")));
  const auto again = run("bench --duration-ms 300 --repeat 1");
  std::smatch a, b;
  const std::regex line("events=(\\d+) .*frame_hash=([0-9a-f]+)");
  ASSERT_TRUE(std::regex_search(r.out, a, line));
  ASSERT_TRUE(std::regex_search(again.out, b, line));
  EXPECT_EQ(a[1], b[1]);
  EXPECT_EQ(a[2], b[2]);
  write_text("base.txt", "bench: events_per_s=1e15\n");
  EXPECT_EQ(run("bench --duration-ms 100 --baseline base.txt").code, 4);
}

TEST_F(Cli, FhtfCheck) {
  auto r = run("fhtf-check");
  EXPECT_EQ(r.code, 0) << r.out;
  r = run("fhtf-check --hyperedges 8");
  EXPECT_EQ(r.code, 0) << r.out;

  fs::create_directories(dir_ / "fx");
  for (const auto& e : fs::directory_iterator(EVHTA_FIXTURE_DIR)) fs::copy_file(e.path(), dir_ / "fx" / e.path().filename());
  auto data = bytes::read_file(dir_ / "fx" / "anchors_seed7.fhw");
  data[data.size() - 3] ^= 0x20;
  bytes::write_file(dir_ / "fx" / "anchors_seed7.fhw", data);
  r = run("fhtf-check --fixtures fx");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("FAILED golden:anchors_seed7.fhw"), std::string::npos) << r.out;
}
