#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "vgcn/model.hpp"

using namespace vgcn;

namespace {

void expect_box_near(const Box& a, const Box& b, double tol = 1e-12) {
  EXPECT_NEAR(a.cx, b.cx, tol);
  EXPECT_NEAR(a.cy, b.cy, tol);
  EXPECT_NEAR(a.w, b.w, tol);
  EXPECT_NEAR(a.h, b.h, tol);
}

Image textured(std::size_t w, std::size_t h, double shift_x = 0.0) {
  Image img(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) - shift_x, v = static_cast<double>(y);
      const double val = 128 + 50 * std::sin(u * 0.31 + 0.2 * v) + 40 * std::cos(v * 0.23 - 0.17 * u);
      for (int c = 0; c < 3; ++c) img.pixel(x, y)[c] = static_cast<std::uint8_t>(std::lround(val));
    }
  return img;
}

Tensor<float> gray_crop(std::size_t s, const std::function<double(double, double)>& f) {
  Tensor<float> t({1, s, s});
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) t[y * s + x] = static_cast<float>(f(double(x), double(y)));
  return t;
}

}  // namespace

TEST(InterpolateBoxes, Examples) {
  const Box a{0.2, 0.2, 0.1, 0.1}, b{0.4, 0.2, 0.3, 0.1};
  const auto boxes = interpolate_boxes(a, b, 10);
  ASSERT_EQ(boxes.size(), 13u);
  expect_box_near(boxes[6], {0.3, 0.2, 0.2, 0.1});
  // one step before frame 1: subtract one per-frame increment
  const Box step{(b.cx - a.cx) / 10, (b.cy - a.cy) / 10, (b.w - a.w) / 10, (b.h - a.h) / 10};
  expect_box_near(interpolate_box(a, b, 10, 0), {a.cx - step.cx, a.cy - step.cy, a.w - step.w, a.h - step.h});
  expect_box_near(interpolate_box(a, b, 10, 0), {0.18, 0.2, 0.08, 0.1});
}

TEST(InterpolateBoxes, IdenticalKeyframes) {
  const Box a{0.5, 0.4, 0.2, 0.3};
  for (const Box& b : interpolate_boxes(a, a, 7)) expect_box_near(b, a, 1e-15);
}

TEST(InterpolateBoxes, ExactAtKeyframesAndAffine) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> c(0.3, 0.7), s(0.05, 0.3);
  for (int t = 0; t < 100; ++t) {
    const Box a{c(rng), c(rng), s(rng), s(rng)}, b{c(rng), c(rng), s(rng), s(rng)};
    const std::size_t k = 1 + t % 12;
    expect_box_near(interpolate_box(a, b, k, 1), a);
    expect_box_near(interpolate_box(a, b, k, k + 1), b);
    for (std::size_t f = 1; f + 1 < k + 3; ++f) {
      const Box p = interpolate_box(a, b, k, f - 1), q = interpolate_box(a, b, k, f), r = interpolate_box(a, b, k, f + 1);
      EXPECT_NEAR(q.cx - p.cx, r.cx - q.cx, 1e-12);
      EXPECT_NEAR(q.w - p.w, r.w - q.w, 1e-12);
    }
  }
}

TEST(InterpolateBoxes, ClippedToImage) {
  for (const Box& b : interpolate_boxes({0.05, 0.5, 0.1, 0.2}, {0.0, 0.5, 0.1, 0.2}, 2)) {
    EXPECT_GE(b.x0(), 0.0);
    EXPECT_LE(b.x1(), 1.0);
    EXPECT_GT(b.w, 0.0);
  }
}

TEST(Crop, MarginGrowsBoxBy15Percent) {
  const CropWindow win = expanded_window({0.5, 0.5, 100.0 / 400, 50.0 / 400}, 400, 400);
  EXPECT_NEAR(win.x1 - win.x0, 115.0, 1e-9);
  EXPECT_NEAR(win.y1 - win.y0, 57.5, 1e-9);
}

TEST(Crop, ClippedAndOutsideBoxes) {
  const CropWindow win = expanded_window({0.02, 0.5, 0.2, 0.2}, 100, 100);
  EXPECT_EQ(win.x0, 0.0);
  EXPECT_THROW(expanded_window({1.5, 0.5, 0.2, 0.2}, 100, 100), InvalidInput);
}

TEST(Crop, RoundTripIdentity) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const CropWindow win = expanded_window({0.4, 0.6, 0.3, 0.2}, 640, 480);
  for (int t = 0; t < 1000; ++t) {
    const Point p{win.x0 + u(rng) * (win.x1 - win.x0), win.y0 + u(rng) * (win.y1 - win.y0)};
    const Point q = win.to_image(win.to_crop(p));
    EXPECT_LT(distance(p, q), 1e-9);
    const Point c = win.to_crop(p);
    EXPECT_GE(c.x, 0.0);
    EXPECT_LE(c.x, 1.0);
  }
}

TEST(Crop, FullFrameNoMarginIsBilinearResize) {
  const Image img = textured(40, 30);
  const std::size_t s = 20;
  const Crop crop = expand_and_crop(img, {0.5, 0.5, 1.0, 1.0}, s, 0.0);
  // Oracle: sample point u/(s-1) of the full frame, pixel centres at i + 0.5.
  for (std::size_t v = 0; v < s; ++v)
    for (std::size_t u = 0; u < s; ++u) {
      const double fx = std::clamp(u / double(s - 1) * 40 - 0.5, 0.0, 39.0);
      const double fy = std::clamp(v / double(s - 1) * 30 - 0.5, 0.0, 29.0);
      const std::size_t x0 = std::size_t(fx), y0 = std::size_t(fy);
      const std::size_t x1 = std::min<std::size_t>(x0 + 1, 39), y1 = std::min<std::size_t>(y0 + 1, 29);
      const double ax = fx - x0, ay = fy - y0;
      const double val = (1 - ay) * ((1 - ax) * img.pixel(x0, y0)[0] + ax * img.pixel(x1, y0)[0]) +
                         ay * ((1 - ax) * img.pixel(x0, y1)[0] + ax * img.pixel(x1, y1)[0]);
      EXPECT_NEAR(crop.pixels[v * s + u], val / 255.0, 1e-6);
    }
}

TEST(HornSchunck, IdenticalFramesGiveZeroFlow) {
  const auto a = gray_crop(32, [](double x, double y) { return 0.5 + 0.3 * std::sin(0.4 * x + 0.2 * y); });
  const FlowField f = horn_schunck_flow(a, a);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    EXPECT_EQ(f.u[i], 0.0f);
    EXPECT_EQ(f.v[i], 0.0f);
  }
}

TEST(HornSchunck, ConstantFramesGiveZeroFlow) {
  const auto a = gray_crop(16, [](double, double) { return 0.3; });
  const auto b = gray_crop(16, [](double, double) { return 0.3; });
  const FlowField f = horn_schunck_flow(a, b);
  for (float u : f.u) EXPECT_EQ(u, 0.0f);
}

TEST(HornSchunck, TranslatedPatchRecoversShift) {
  const std::size_t s = 64;
  auto tex = [](double x, double y) {
    return 0.5 + 0.2 * std::sin(0.35 * x + 0.1 * y) + 0.15 * std::cos(0.27 * y - 0.12 * x);
  };
  const auto a = gray_crop(s, tex);
  const auto b = gray_crop(s, [&](double x, double y) { return tex(x - 1.0, y); });
  const FlowField f = horn_schunck_flow(a, b);
  double mu = 0, mv = 0;
  std::size_t n = 0;
  for (std::size_t y = 16; y < 48; ++y)
    for (std::size_t x = 16; x < 48; ++x) mu += f.u[y * s + x], mv += f.v[y * s + x], ++n;
  EXPECT_NEAR(mu / n, 1.0, 0.25);
  EXPECT_NEAR(mv / n, 0.0, 0.25);
}

TEST(HornSchunck, EnergyNonIncreasing) {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    const auto a = gray_crop(24, [&](double, double) { return u(rng); });
    const auto b = gray_crop(24, [&](double, double) { return u(rng); });
    HornSchunckOptions opts;
    opts.alpha = 1.0 + 5.0 * t;
    opts.iterations = 30;
    double prev = std::numeric_limits<double>::infinity();
    int sweeps = 0;
    horn_schunck_flow(a, b, opts, [&](const detail::HsProblem& p, const FlowField& f) {
      if (sweeps == 0) {
        const FlowField zero{f.height, f.width, std::vector<float>(f.u.size()), std::vector<float>(f.u.size())};
        prev = horn_schunck_energy(p, zero, opts.alpha);
      }
      const double e = horn_schunck_energy(p, f, opts.alpha);
      EXPECT_LE(e, prev * (1 + 1e-6));
      prev = e;
      ++sweeps;
    });
    EXPECT_EQ(sweeps, 30);
  }
}

TEST(PoolFlow, AveragesAndNormalizes) {
  FlowField f{8, 8, std::vector<float>(64, 2.0f), std::vector<float>(64, 0.0f)};
  f.v[0] = 16.0f;  // cell (0,0) covers 16 pixels
  const auto p = pool_flow<double>(f, 2);
  EXPECT_NEAR(p[0], 2.0 / 7.0, 1e-7);
  EXPECT_NEAR(p[4], 1.0 / 7.0, 1e-7);
  EXPECT_EQ(p[5], 0.0);
  EXPECT_THROW(pool_flow<double>(f, 3), DimensionError);
}

namespace {

struct Encoded {
  ad::Tape<double> tape;
  FeatureVolume<double> vol;
};

void run_encoder(Encoded& e, const Params<double>& params, std::size_t frames) {
  std::mt19937_64 rng(34);
  auto vars = bind_params(e.tape, params, true);
  Tensor<double> input = oracle::random_tensor({frames, 5, kCropSize, kCropSize}, rng, -0.5, 0.5);
  Tensor<double> flow = oracle::random_tensor({frames, 2, kGridSize, kGridSize}, rng, -0.1, 0.1);
  e.vol = encode(e.tape, encoder_vars(vars), std::move(input), std::move(flow));
}

}  // namespace

TEST(Encode, DefaultShapesAndBoundaryRange) {
  const ModelConfig cfg;
  Encoded e;
  run_encoder(e, init_params<double>(cfg, 1), 2);
  EXPECT_EQ(e.vol.appearance.shape(), (Shape{2, 32, 28, 28}));
  EXPECT_EQ(e.vol.boundary.shape(), (Shape{2, 2, 28, 28}));
  EXPECT_EQ(e.vol.flow.shape(), (Shape{2, 2, 28, 28}));
  for (double v : e.vol.boundary.value().data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Encode, ZeroFinalLayerGivesZeroAppearance) {
  const ModelConfig cfg;
  auto params = init_params<double>(cfg, 1);
  params.at("encoder.conv3.weight").value.fill(0.0);
  Encoded e;
  run_encoder(e, params, 1);
  for (double v : e.vol.appearance.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Encode, MismatchedFlowRejected) {
  const ModelConfig cfg;
  ad::Tape<double> tape;
  auto vars = bind_params(tape, init_params<double>(cfg, 1), false);
  EXPECT_THROW(encode(tape, encoder_vars(vars), Tensor<double>({1, 5, 112, 112}), Tensor<double>({1, 2, 14, 14})),
               ContractViolation);
  EXPECT_THROW(encode(tape, encoder_vars(vars), Tensor<double>({1, 3, 112, 112}), Tensor<double>({1, 2, 28, 28})),
               ContractViolation);
}

TEST(EncoderInput, NormalizesAndZeroesFlowWithoutMotion) {
  std::vector<Tensor<float>> crops{Tensor<float>({3, 4, 4}, 1.0f)};
  std::vector<FlowField> flows{{4, 4, std::vector<float>(16, 2.0f), std::vector<float>(16, -4.0f)}};
  const auto with = encoder_input<double>(crops, flows, true);
  EXPECT_EQ(with.shape(), (Shape{1, 5, 4, 4}));
  EXPECT_EQ(with[0], 0.5);
  EXPECT_EQ(with[3 * 16], 2.0 * kFlowInputScale);
  EXPECT_EQ(with[4 * 16], -4.0 * kFlowInputScale);
  const auto without = encoder_input<double>(crops, {}, false);
  EXPECT_EQ(without[3 * 16], 0.0);
}

TEST(NodeFeatures, WidthAndFlowSlots) {
  const ModelConfig cfg;
  EXPECT_EQ(cfg.feature_width(), 38u);
  Encoded e;
  run_encoder(e, init_params<double>(cfg, 2), 2);
  const std::vector<std::size_t> frame_of_row{0, 0, 1};
  auto coords = e.tape.constant(Tensor<double>::matrix(3, 2, {0.5, 0.5, 0.1, 0.9, 0.3, 0.7}));
  const auto f0 = assemble_node_features(e.vol, coords, frame_of_row, 0, true);
  const auto f1 = assemble_node_features(e.vol, coords, frame_of_row, 1, true);
  const auto fn = assemble_node_features(e.vol, coords, frame_of_row, 0, false);
  ASSERT_EQ(f0.shape(), (Shape{3, 38}));
  ASSERT_EQ(f1.shape(), (Shape{3, 38}));
  ASSERT_EQ(fn.shape(), (Shape{3, 38}));
  bool any_flow = false;
  for (std::size_t r = 0; r < 3; ++r) {
    any_flow = any_flow || f0.value()(r, 36) != 0.0;
    EXPECT_EQ(f1.value()(r, 36), 0.0);
    EXPECT_EQ(f1.value()(r, 37), 0.0);
    EXPECT_EQ(fn.value()(r, 37), 0.0);
    EXPECT_EQ(f0.value()(r, 34), coords.value()(r, 0));
    EXPECT_EQ(f0.value()(r, 35), coords.value()(r, 1));
  }
  EXPECT_TRUE(any_flow);
}

TEST(NodeFeatures, CentreNodeSamplesCentreCells) {
  // 3x3 grid with distinct values: the centre coordinate hits cell (1,1) exactly.
  ad::Tape<double> tape;
  FeatureVolume<double> vol;
  std::vector<double> app(9);
  for (std::size_t i = 0; i < 9; ++i) app[i] = static_cast<double>(i);
  vol.appearance = tape.constant(Tensor<double>({1, 1, 3, 3}, app));
  vol.boundary = tape.constant(Tensor<double>({1, 2, 3, 3}, 0.25));
  vol.flow = tape.constant(Tensor<double>({1, 2, 3, 3}, 0.0));
  auto coords = tape.constant(Tensor<double>::matrix(1, 2, {0.5, 0.5}));
  const auto f = assemble_node_features(vol, coords, {0}, 0, true);
  EXPECT_EQ(f.value()(0, 0), 4.0);
  EXPECT_EQ(f.value()(0, 1), 0.25);
}

TEST(BoundaryTargets, MarksEdgeAndVertexCells) {
  const Polygon sq{{0.25, 0.25}, {0.75, 0.25}, {0.75, 0.75}, {0.25, 0.75}};
  const auto t = boundary_targets<double>(sq, 4, 5);
  // corners of the square sit on cells (1,1), (3,1), (3,3), (1,3)
  EXPECT_EQ(t[25 + 1 * 5 + 1], 1.0);
  EXPECT_EQ(t[25 + 3 * 5 + 3], 1.0);
  EXPECT_EQ(t[25 + 2 * 5 + 2], 0.0);
  EXPECT_EQ(t[1 * 5 + 2], 1.0);
  EXPECT_EQ(t[2 * 5 + 2], 0.0);
}
