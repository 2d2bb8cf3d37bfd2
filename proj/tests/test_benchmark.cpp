#include <gtest/gtest.h>

#include <algorithm>

#include "model_fixtures.hpp"
#include "vgcn/benchmark.hpp"

namespace {

using namespace vgcn;

struct Corpus {
  std::vector<Sequence> seqs;
  Split split;
};

PrepareOptions tiny_prepare() {
  PrepareOptions opt;
  opt.crop_size = 16;
  opt.points = 8;
  opt.gt_points = 50;
  opt.flow.iterations = 10;
  return opt;
}

const Corpus& corpus() {
  static const Corpus c = [] {
    SynthConfig sc;
    sc.width = 48;
    sc.height = 48;
    sc.frames = 9;
    sc.radius_min = 7;
    sc.radius_max = 10;
    Corpus out;
    out.seqs = generate_corpus(sc, 4);
    out.split.train = {0, 1};
    out.split.test = {2, 3};
    return out;
  }();
  return c;
}

CompareOptions tiny_compare() {
  CompareOptions o;
  o.models = {"sgcn", "sgcn-smoothed", "vgcn"};
  o.seeds = {3, 4};
  o.base = fixture::tiny_config();
  o.train.epochs = 1;
  o.train.max_steps = 1;
  o.train.batch_size = 2;
  return o;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

TEST(Benchmark, SmoothedVariantMapsToItsBaseModel) {
  EXPECT_EQ(trained_model("sgcn-smoothed"), "sgcn");
  EXPECT_EQ(trained_model("vgcn"), "vgcn");
  EXPECT_TRUE(is_smoothed("sgcn-smoothed"));
  EXPECT_FALSE(is_smoothed("sgcn"));
  EXPECT_EQ(trained_models({"sgcn", "sgcn-smoothed", "vgcn", "sgcn"}), (std::vector<std::string>{"sgcn", "vgcn"}));
}

TEST(Benchmark, RejectsUnknownModelsAndEmptySeeds) {
  auto o = tiny_compare();
  o.models = {"nope"};
  EXPECT_THROW(o.validate(), InvalidConfig);
  o = tiny_compare();
  o.seeds.clear();
  EXPECT_THROW(o.validate(), InvalidConfig);
}

TEST(Benchmark, SampleStatistics) {
  const Stat s = stat_of({1.0, 2.0, 4.0});
  EXPECT_NEAR(s.mean, 7.0 / 3.0, 1e-12);
  const double m = 7.0 / 3.0;
  const double var = ((1 - m) * (1 - m) + (2 - m) * (2 - m) + (4 - m) * (4 - m)) / 2.0;
  EXPECT_NEAR(s.std, std::sqrt(var), 1e-12);
  EXPECT_EQ(stat_of({5.0}).std, 0.0);
}

struct BenchmarkRun : ::testing::Test {
  static const BenchmarkResult& result() {
    static const BenchmarkResult r = [] {
      const auto& c = corpus();
      auto train = prepare_windows(c.seqs, c.split.train, 2, tiny_prepare());
      auto test = prepare_windows(c.seqs, c.split.test, 2, tiny_prepare());
      return benchmark(tiny_compare(), train, test);
    }();
    return r;
  }
};

TEST_F(BenchmarkRun, TrainsEachBaseModelOncePerSeed) {
  const auto& r = result();
  ASSERT_EQ(r.trained.size(), 4u);
  EXPECT_EQ(r.runs.size(), 6u);
  EXPECT_EQ(find_trained(r.trained, "sgcn-smoothed", 3).model, "sgcn");
  EXPECT_EQ(find_trained(r.trained, "vgcn", 4).config.topology, Topology::FullConnection);
  EXPECT_FALSE(find_trained(r.trained, "sgcn", 4).config.use_motion_features);
  EXPECT_THROW(find_trained(r.trained, "vgcn", 9), InvalidInput);
}

TEST_F(BenchmarkRun, SmoothedRunEvaluatesTheSgcnCheckpointWithSmoothing) {
  const auto& r = result();
  const auto& c = corpus();
  const auto test = prepare_windows(c.seqs, c.split.test, 2, tiny_prepare());
  const auto& sg = find_trained(r.trained, "sgcn", 3);
  EvalOptions eo;
  eo.smooth = true;
  const EvalReport expect = evaluate(sg.params, sg.config, test, eo);
  const auto it = std::find_if(r.runs.begin(), r.runs.end(),
                               [](const ModelRun& m) { return m.model == "sgcn-smoothed" && m.seed == 3; });
  ASSERT_NE(it, r.runs.end());
  EXPECT_EQ(it->report.average().miou, expect.average().miou);
  EXPECT_EQ(it->report.average().nbcd, expect.average().nbcd);
}

TEST_F(BenchmarkRun, SeedsGiveDifferentModels) {
  const auto& r = result();
  const auto a = find_trained(r.trained, "vgcn", 3).params.at("encoder.conv1.weight").value.data();
  const auto b = find_trained(r.trained, "vgcn", 4).params.at("encoder.conv1.weight").value.data();
  EXPECT_FALSE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
}

TEST_F(BenchmarkRun, CsvHasOneRowPerRunAndReportRow) {
  const auto& r = result();
  std::size_t rows = 0;
  for (const auto& run : r.runs) rows += run.report.rows.size();
  const std::string csv = runs_csv(r.runs);
  EXPECT_EQ(count_lines(csv), rows + 1);
  EXPECT_TRUE(csv.starts_with("model,seed,interval,category,miou,nbcd,f1_1px,f1_2px,frames\n"));
}

TEST_F(BenchmarkRun, SummaryAveragesOverSeeds) {
  const auto& r = result();
  const Summary s = summarize(r.runs);
  EXPECT_EQ(s.models, (std::vector<std::string>{"sgcn", "sgcn-smoothed", "vgcn"}));
  EXPECT_EQ(s.categories.back(), kAverageRow);
  std::vector<double> v;
  for (const auto& run : r.runs)
    if (run.model == "vgcn") v.push_back(run.report.average().nbcd);
  const Stat want = stat_of(v);
  EXPECT_DOUBLE_EQ(s.at("vgcn").nbcd.mean, want.mean);
  EXPECT_DOUBLE_EQ(s.at("vgcn").nbcd.std, want.std);
  const std::string table = summary_table(s);
  for (const auto& m : s.models) EXPECT_NE(table.find(m), std::string::npos);
  EXPECT_NE(table.find("NBCD/F1(2px)"), std::string::npos);
}

TEST_F(BenchmarkRun, RewindowSweepReproducesTheBenchmarkAtItsInterval) {
  const auto& r = result();
  SweepOptions so;
  so.compare = tiny_compare();
  so.intervals = {2, 3};
  so.train_interval = 2;
  so.prepare = tiny_prepare();
  const auto points = sparsity_sweep(corpus().seqs, corpus().split, so, &r.trained);
  ASSERT_EQ(points.size(), 2 * r.runs.size());
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    EXPECT_EQ(points[i].interval, 2u);
    EXPECT_EQ(points[i].model, r.runs[i].model);
    EXPECT_EQ(points[i].report.average().miou, r.runs[i].report.average().miou);
    EXPECT_EQ(points[i].report.average().nbcd, r.runs[i].report.average().nbcd);
  }
  for (std::size_t i = r.runs.size(); i < points.size(); ++i) EXPECT_EQ(points[i].interval, 3u);
  EXPECT_EQ(count_lines(sweep_csv(points)), 1 + 3 * 2u);
}

TEST(Sweep, RetrainModeTrainsPerInterval) {
  SweepOptions so;
  so.compare = tiny_compare();
  so.compare.models = {"sgcn"};
  so.compare.seeds = {1};
  so.intervals = {2, 3};
  so.retrain = true;
  so.prepare = tiny_prepare();
  const auto points = sparsity_sweep(corpus().seqs, corpus().split, so);
  ASSERT_EQ(points.size(), 2u);
  EXPECT_EQ(points[0].interval, 2u);
  EXPECT_EQ(points[1].interval, 3u);
  EXPECT_EQ(count_lines(sweep_csv(points)), 3u);
}

}  // namespace
