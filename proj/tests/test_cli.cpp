#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "vgcn/cli.hpp"

namespace {

using namespace vgcn;
namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Small enough for a few seconds of training on one core.
std::vector<std::string> data_flags() {
  return {"--sequences", "6", "--width", "48", "--height", "48", "--frames", "9", "--radius-min", "7",
          "--radius-max", "10", "--drift", "0.5", "--wobble", "2", "--split", "0.5,0,0.5", "--crop", "16",
          "--gt-points", "50", "--flow-iterations", "10", "--deterministic"};
}

std::vector<std::string> tiny_flags() {
  auto f = data_flags();
  for (const char* x : {"--hidden", "8", "--blocks", "1", "--iterations", "2", "--points", "8", "--interval", "3",
                        "--encoder-stage1", "4", "--encoder-stage2", "4", "--encoder-appearance", "4", "--epochs",
                        "1", "--max-steps", "2", "--batch", "2"})
    f.push_back(x);
  return f;
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("vgcn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& p) const { return (dir_ / p).string(); }
  fs::path dir_;
};

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path().string());
  }
  return out;
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

TEST_F(CliTest, HelpExitsZeroAndListsFlags) {
  const auto top = run({"--help"});
  EXPECT_EQ(top.code, 0);
  for (const char* s : {"generate", "train", "evaluate", "benchmark", "sweep", "serve", "infer"})
    EXPECT_NE(top.out.find(s), std::string::npos) << s;
  const auto ev = run({"evaluate", "--help"});
  EXPECT_EQ(ev.code, 0);
  for (const char* f : {"--gt-boxes", "--checkpoint", "--threads", "--deterministic", "--config", "--smooth"})
    EXPECT_NE(ev.out.find(f), std::string::npos) << f;
}

TEST_F(CliTest, UnknownFlagPrintsUsageAndExitsTwo) {
  const auto r = run({"generate", "--no-such-flag"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
}

TEST_F(CliTest, RuntimeErrorsAreOneMachineParseableLine) {
  const auto r = run({"evaluate", "--out", path("ev"), "--checkpoint", path("missing.ckpt")});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(r.err.starts_with("error: invalid_input: ")) << r.err;
  EXPECT_EQ(lines(r.err), 1u);
  const auto m = run({"train", "--out", path("tr"), "--model", "nope"});
  EXPECT_EQ(m.code, 1);
  EXPECT_TRUE(m.err.starts_with("error: invalid_config: ")) << m.err;
}

TEST_F(CliTest, GenerateIsDeterministic) {
  const std::vector<std::string> flags{"--seed", "7", "--sequences", "20", "--width", "40", "--height", "40",
                                       "--frames", "5", "--radius-min", "6", "--radius-max", "8", "--drift", "0.5", "--wobble", "2"};
  ASSERT_EQ(run(cat({"generate", "--out", path("a")}, flags)).code, 0);
  ASSERT_EQ(run(cat({"generate", "--out", path("b")}, flags)).code, 0);
  const auto a = tree(dir_ / "a"), b = tree(dir_ / "b");
  EXPECT_EQ(a.size(), 1u + 1u + 20u * (2u + 5u));
  EXPECT_EQ(a, b);
  EXPECT_EQ(load_corpus(dir_ / "a").size(), 20u);
}

TEST_F(CliTest, EffectiveConfigReproducesTheRun) {
  ASSERT_EQ(run({"generate", "--out", path("a"), "--seed", "3", "--sequences", "2", "--frames", "5", "--width", "40",
                 "--height", "40", "--radius-min", "6", "--radius-max", "8", "--drift", "0.5", "--wobble", "2"})
                .code,
            0);
  ASSERT_EQ(run({"generate", "--out", path("b"), "--config", path("a/effective_config.json")}).code, 0);
  EXPECT_EQ(tree(dir_ / "a"), tree(dir_ / "b"));
}

TEST_F(CliTest, FlagsOverrideTheConfigFile) {
  write_file(path("cfg.json"), R"({"data": {"sequences": 3, "synth": {"seed": 5, "frames": 5, "width": 40, "height": 40,
      "radius_min": 6, "radius_max": 8, "motion": {"drift": 0.5, "wobble": 2}}}})");
  ASSERT_EQ(run({"generate", "--config", path("cfg.json"), "--sequences", "1", "--out", path("g")}).code, 0);
  const auto echoed = nlohmann::json::parse(read_file(path("g/effective_config.json")));
  EXPECT_EQ(echoed["data"]["sequences"], 1);
  EXPECT_EQ(echoed["data"]["synth"]["seed"], 5);
  EXPECT_EQ(echoed["data"]["synth"]["frames"], 5);
  EXPECT_EQ(load_corpus(dir_ / "g").size(), 1u);
}

TEST_F(CliTest, BadConfigFileIsAUsageError) {
  write_file(path("bad.json"), "{not json");
  const auto r = run({"generate", "--config", path("bad.json"), "--out", path("g")});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(r.err.starts_with("error: invalid_config: "));
}

TEST_F(CliTest, TrainEvaluateInfer) {
  const auto t = run(cat({"train", "--out", path("t"), "--model", "vgcn"}, tiny_flags()));
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(dir_ / "t/model.ckpt"));
  EXPECT_TRUE(fs::exists(dir_ / "t/checkpoints/epoch_001.ckpt"));
  EXPECT_EQ(lines(read_file(path("t/loss_curve.csv"))), 3u);
  EXPECT_EQ(read_file(path("t/model.ckpt")), read_file(path("t/checkpoints/epoch_001.ckpt")));

  const auto flags = data_flags();
  const auto e = run(cat({"evaluate", "--out", path("e"), "--checkpoint", path("t/model.ckpt")}, flags));
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("mIoU"), std::string::npos);
  const std::string csv = read_file(path("e/metrics.csv"));
  EXPECT_NE(csv.find("average,"), std::string::npos);
  ASSERT_EQ(run(cat({"evaluate", "--out", path("g"), "--gt-boxes", "--checkpoint", path("t/model.ckpt")}, flags)).code, 0);
  EXPECT_NE(read_file(path("g/metrics.csv")), csv);

  ASSERT_EQ(run({"generate", "--out", path("c"), "--sequences", "1", "--width", "48", "--height", "48", "--frames",
                 "9", "--radius-min", "7", "--radius-max", "10", "--drift", "0.5", "--wobble", "2"})
                .code,
            0);
  const auto m = read_manifest(dir_ / "c/seq_0000/manifest.jsonl");
  nlohmann::json boxes;
  for (std::size_t k : {1u, 4u, 7u}) {
    const auto b = *m.frames[k].box;
    boxes[std::to_string(k)] = {b.x0, b.y0, b.x1, b.y1};
  }
  write_file(path("boxes.json"), boxes.dump());
  const auto i = run({"infer", "--out", path("i"), "--checkpoint", path("t/model.ckpt"), "--manifest",
                      path("c/seq_0000/manifest.jsonl"), "--boxes", path("boxes.json"), "--crop", "16"});
  ASSERT_EQ(i.code, 0) << i.err;
  const auto polys = parse_manifest(manifest_text(m), read_file(path("i/polygons.jsonl")));
  for (std::size_t k = 0; k < 9; ++k) {
    EXPECT_EQ(polys.frames[k].polygon.has_value(), k >= 1 && k <= 7) << k;
    if (polys.frames[k].polygon) {
      EXPECT_EQ(polys.frames[k].polygon->size(), 8u);
    }
  }
}

TEST_F(CliTest, InferRejectsASingleKeyframe) {
  ASSERT_EQ(run(cat({"train", "--out", path("t")}, tiny_flags())).code, 0);
  ASSERT_EQ(run({"generate", "--out", path("c"), "--sequences", "1", "--frames", "5", "--width", "40", "--height",
                 "40", "--radius-min", "6", "--radius-max", "8", "--drift", "0.5", "--wobble", "2"})
                .code,
            0);
  write_file(path("boxes.json"), R"([{"frame": 1, "box": [4, 4, 20, 20]}])");
  const auto r = run({"infer", "--out", path("i"), "--checkpoint", path("t/model.ckpt"), "--manifest",
                      path("c/seq_0000/manifest.jsonl"), "--boxes", path("boxes.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(r.err.starts_with("error: invalid_input: "));
}

TEST_F(CliTest, BenchmarkCsvHasTwoModelsTimesCategoriesPlusOneRowsPerSeed) {
  const auto r = run(cat({"benchmark", "--out", path("b"), "--models", "sgcn,vgcn", "--seeds", "1,2,3"}, tiny_flags()));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_file(path("b/runs.csv"));
  std::set<std::string> cats;
  std::map<std::string, std::size_t> per_seed;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
    ASSERT_EQ(f.size(), 9u);
    ++per_seed[f[1]];
    if (f[3] != "average") cats.insert(f[3]);
  }
  ASSERT_EQ(per_seed.size(), 3u);
  for (const auto& [seed, n] : per_seed) EXPECT_EQ(n, 2 * (cats.size() + 1)) << seed;
  EXPECT_NE(r.out.find("NBCD/F1"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "b/checkpoints/vgcn_seed3.ckpt"));
}

TEST_F(CliTest, SweepWritesOneRowPerModelAndInterval) {
  const auto r = run(cat({"sweep", "--out", path("s"), "--models", "sgcn,vgcn", "--seeds", "1", "--intervals", "2,3"},
                         tiny_flags()));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(read_file(path("s/sweep.csv"))), 1u + 2u * 2u);
}

TEST(CliBoxes, BothBoxFileLayoutsParse) {
  const auto a = cli::parse_boxes(R"({"0": [1, 2, 3, 4], "10": [5, 6, 7, 8]})");
  const auto b = cli::parse_boxes(R"([{"frame": 0, "box": [1, 2, 3, 4]}, {"frame": 10, "box": [5, 6, 7, 8]}])");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.at(10), (PixelBox{5, 6, 7, 8}));
  EXPECT_THROW(cli::parse_boxes(R"({"x": [1, 2, 3, 4]})"), InvalidInput);
  EXPECT_THROW(cli::parse_boxes(R"({"0": [1, 2, 3]})"), InvalidInput);
  EXPECT_THROW(cli::parse_boxes("7"), InvalidInput);
}

}  // namespace
