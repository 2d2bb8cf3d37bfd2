#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "vgcn/dataset.hpp"

namespace {

using namespace vgcn;
namespace fs = std::filesystem;

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.width = 96;
  cfg.height = 80;
  cfg.frames = 8;
  cfg.radius_min = 12;
  cfg.radius_max = 16;
  cfg.motion.wobble = 3.0;
  return cfg;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vgcn_test_dataset_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  const SynthConfig cfg = small_config();
  for (ShapeFamily f : cfg.families) {
    const Sequence a = generate_synthetic(cfg, f, 99, "a");
    const Sequence b = generate_synthetic(cfg, f, 99, "a");
    EXPECT_EQ(a.manifest, b.manifest);
    ASSERT_EQ(a.frames.size(), b.frames.size());
    for (std::size_t k = 0; k < a.frames.size(); ++k) EXPECT_EQ(a.frames[k].rgb, b.frames[k].rgb);
  }
}

TEST(Synthetic, DifferentSeedsDiffer) {
  const SynthConfig cfg = small_config();
  const Sequence a = generate_synthetic(cfg, ShapeFamily::Blob, 1, "a");
  const Sequence b = generate_synthetic(cfg, ShapeFamily::Blob, 2, "a");
  EXPECT_NE(a.frames[0].rgb, b.frames[0].rgb);
}

TEST(Synthetic, BoxIsPolygonExtentAndShapeStaysInside) {
  const SynthConfig cfg = small_config();
  for (const Sequence& s : generate_corpus(cfg, 6)) {
    ASSERT_EQ(s.manifest.frames.size(), cfg.frames);
    for (const FrameRecord& f : s.manifest.frames) {
      ASSERT_TRUE(f.polygon && f.box);
      EXPECT_EQ(*f.box, polygon_extent(*f.polygon));
      EXPECT_GE(f.box->x0, 0.0);
      EXPECT_GE(f.box->y0, 0.0);
      EXPECT_LE(f.box->x1, static_cast<double>(cfg.width));
      EXPECT_LE(f.box->y1, static_cast<double>(cfg.height));
    }
  }
}

TEST(Synthetic, ZeroMotionKeepsThePolygonFixed) {
  SynthConfig cfg = small_config();
  cfg.motion = MotionConfig{0.0, 0.0, 14.0, 0.0, 0.0, 0.0};
  for (ShapeFamily f : cfg.families) {
    const Sequence s = generate_synthetic(cfg, f, 5, "still");
    for (const FrameRecord& r : s.manifest.frames) EXPECT_EQ(*r.polygon, *s.manifest.frames[0].polygon);
  }
}

// Without texture or noise the object is a flat colour on a flat background,
// so the pixels that differ from the background colour are the object.
TEST(Synthetic, FlatRenderMatchesRasterizedPolygon) {
  SynthConfig cfg = small_config();
  cfg.noise_sigma = 0.0;
  cfg.texture_amplitude = 0.0;
  cfg.contrast_min = cfg.contrast_max = 0.5;
  for (ShapeFamily f : cfg.families) {
    const Sequence s = generate_synthetic(cfg, f, 11, "s");
    for (std::size_t k = 0; k < s.frames.size(); ++k) {
      const Image& img = s.frames[k];
      const Mask gt = rasterize(*s.manifest.frames[k].polygon, cfg.height, cfg.width);
      // The corner pixel is background: shapes keep a margin from the border.
      const std::uint8_t* bg = img.pixel(0, 0);
      Mask drawn(cfg.height, cfg.width);
      for (std::size_t y = 0; y < cfg.height; ++y) {
        for (std::size_t x = 0; x < cfg.width; ++x) {
          const std::uint8_t* p = img.pixel(x, y);
          drawn.at(y, x) = p[0] != bg[0] || p[1] != bg[1] || p[2] != bg[2];
        }
      }
      EXPECT_EQ(drawn.data, gt.data) << to_string(f) << " frame " << k;
    }
  }
}

TEST(Synthetic, BackgroundIsStatic) {
  SynthConfig cfg = small_config();
  cfg.noise_sigma = 0.0;
  const Sequence s = generate_synthetic(cfg, ShapeFamily::Star, 12, "s");
  Mask any(cfg.height, cfg.width);
  for (const auto& r : s.manifest.frames) {
    const Mask m = rasterize(*r.polygon, cfg.height, cfg.width);
    for (std::size_t i = 0; i < m.data.size(); ++i) any.data[i] |= m.data[i];
  }
  for (std::size_t y = 0; y < cfg.height; ++y) {
    for (std::size_t x = 0; x < cfg.width; ++x) {
      if (any.at(y, x)) continue;
      for (std::size_t k = 1; k < s.frames.size(); ++k) {
        for (int c = 0; c < 3; ++c) ASSERT_EQ(s.frames[k].pixel(x, y)[c], s.frames[0].pixel(x, y)[c]);
      }
    }
  }
}

TEST(Synthetic, RejectsBadConfig) {
  SynthConfig cfg = small_config();
  cfg.frames = 3;
  EXPECT_THROW(generate_synthetic(cfg, ShapeFamily::Ellipse, 1, "x"), InvalidConfig);
  cfg = small_config();
  cfg.radius_min = 200;
  cfg.radius_max = 200;
  EXPECT_THROW(generate_synthetic(cfg, ShapeFamily::Ellipse, 1, "x"), InvalidConfig);
  EXPECT_THROW(shape_family_from_string("cube"), InvalidConfig);
}

TEST(Synthetic, CorpusPrefixIsStable) {
  const SynthConfig cfg = small_config();
  const auto a = generate_corpus(cfg, 3);
  const auto b = generate_corpus(cfg, 5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i].manifest, b[i].manifest);
  EXPECT_EQ(a[1].manifest.id, "seq_0001");
  EXPECT_EQ(a[1].manifest.category, "star");
}

TEST(Manifest, TextRoundTripIsByteStable) {
  const Sequence s = generate_synthetic(small_config(), ShapeFamily::Blob, 3, "blob_3");
  SequenceManifest m = s.manifest;
  m.frames[2].origin = "human";
  m.frames[4].polygon.reset();
  const std::string mt = manifest_text(m), pt = polygons_text(m);
  const SequenceManifest back = parse_manifest(mt, pt);
  EXPECT_EQ(back, m);
  EXPECT_EQ(manifest_text(back), mt);
  EXPECT_EQ(polygons_text(back), pt);
}

TEST(Manifest, DiskRoundTrip) {
  const fs::path dir = scratch_dir("disk");
  const auto seqs = generate_corpus(small_config(), 2);
  write_corpus(dir, seqs);
  const auto back = load_corpus(dir);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].manifest, seqs[i].manifest);
    for (std::size_t k = 0; k < seqs[i].frames.size(); ++k) EXPECT_EQ(back[i].frames[k].rgb, seqs[i].frames[k].rgb);
  }
  fs::remove_all(dir);
}

TEST(Manifest, ParseErrors) {
  const Sequence s = generate_synthetic(small_config(), ShapeFamily::Ellipse, 3, "e");
  const std::string mt = manifest_text(s.manifest), pt = polygons_text(s.manifest);
  EXPECT_THROW(parse_manifest("", pt), FormatError);
  EXPECT_THROW(parse_manifest("{\"format\":\"other\"}\n", pt), FormatError);
  EXPECT_THROW(parse_manifest("not json\n", pt), FormatError);
  std::string bad_version = mt;
  bad_version.replace(bad_version.find("\"version\":1"), 11, "\"version\":9");
  EXPECT_THROW(parse_manifest(bad_version, pt), FormatError);
  // header says more frames than listed
  const std::string truncated = mt.substr(0, mt.rfind('{'));
  EXPECT_THROW(parse_manifest(truncated, pt), FormatError);
  EXPECT_THROW(parse_manifest(mt, "{\"index\":99,\"points\":[[0,0],[1,0],[0,1]]}\n"), FormatError);
  EXPECT_THROW(parse_manifest(mt, "{\"index\":0,\"points\":[[0,0],[1,0]]}\n"), FormatError);
}

TEST(Manifest, GtBoxFallsBackToPolygonExtent) {
  SequenceManifest m;
  m.width = 100;
  m.height = 50;
  m.frames.resize(2);
  m.frames[0].polygon = Polygon{{10, 10}, {30, 10}, {30, 20}, {10, 20}};
  const auto b = m.gt_box(0);
  ASSERT_TRUE(b);
  EXPECT_NEAR(b->x0(), 0.1, 1e-12);
  EXPECT_NEAR(b->y1(), 0.4, 1e-12);
  EXPECT_FALSE(m.gt_box(1));
}

SequenceManifest manifest_with_frames(std::size_t n) {
  SequenceManifest m;
  m.id = "m";
  m.width = 100;
  m.height = 100;
  m.frames.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double x = 10.0 + static_cast<double>(k);
    m.frames[k].polygon = Polygon{{x, 20}, {x + 30, 20}, {x + 30, 50}, {x, 50}};
  }
  return m;
}

TEST(Windows, TwentyFiveFramesAtKTen) {
  const auto w = extract_subsequences(manifest_with_frames(25), 0, 10);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].start, 0u);
  EXPECT_EQ(w[1].start, 10u);
  for (const auto& s : w) {
    ASSERT_EQ(s.frames.size(), 13u);
    EXPECT_EQ(s.frames[1], s.start);
    EXPECT_EQ(s.frames[11], s.start + 10);
    EXPECT_EQ(s.boxes.size(), 13u);
  }
  // leading pad clamps to frame 0
  EXPECT_EQ(w[0].frames[0], 0u);
  EXPECT_EQ(w[1].frames[0], 9u);
  EXPECT_EQ(w[1].frames[12], 21u);
}

TEST(Windows, KOneHasFourFramesAndTrailingPadClamps) {
  const auto w = extract_subsequences(manifest_with_frames(3), 0, 1);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[1].frames, (std::vector<std::size_t>{0, 1, 2, 2}));
}

TEST(Windows, KeyframeBoxesAreExactAndInterpolationAffine) {
  const auto w = extract_subsequences(manifest_with_frames(21), 0, 10);
  const auto m = manifest_with_frames(21);
  for (const auto& s : w) {
    EXPECT_NEAR(s.boxes[1].cx, m.gt_box(s.start)->cx, 1e-12);
    EXPECT_NEAR(s.boxes[11].cx, m.gt_box(s.start + 10)->cx, 1e-12);
    // GT moves one pixel per frame, so interpolation recovers every frame.
    for (std::size_t r = 1; r <= 11; ++r) EXPECT_NEAR(s.boxes[r].cx, m.gt_box(s.frames[r])->cx, 1e-12);
  }
}

TEST(Windows, ShortSequenceIsSkippedWithWarning) {
  std::ostringstream log;
  EXPECT_TRUE(extract_subsequences(manifest_with_frames(5), 0, 10, 0, &log).empty());
  EXPECT_NE(log.str().find("too short"), std::string::npos);
}

TEST(Windows, MissingKeyframeGtIsAnError) {
  auto m = manifest_with_frames(11);
  m.frames[10].polygon.reset();
  EXPECT_THROW(extract_subsequences(m, 0, 10), InvalidInput);
  EXPECT_THROW(extract_subsequences(m, 0, 0), InvalidConfig);
}

TEST(Split, SizesDisjointAndCovering) {
  const Split s = split(100, {0.8, 0.1, 0.1}, 4);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.val.size(), 10u);
  EXPECT_EQ(s.test.size(), 10u);
  std::set<std::size_t> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));
    all.insert(part->begin(), part->end());
  }
  EXPECT_EQ(all.size(), 100u);
}

TEST(Split, DeterministicAndDegenerateRatios) {
  const Split a = split(37, {0.6, 0.2, 0.2}, 9), b = split(37, {0.6, 0.2, 0.2}, 9);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  const Split all_train = split(10, {1.0, 0.0, 0.0}, 1);
  EXPECT_EQ(all_train.train.size(), 10u);
  EXPECT_TRUE(all_train.val.empty() && all_train.test.empty());
  EXPECT_THROW(split(10, {0.5, 0.2, 0.2}, 1), InvalidConfig);
  EXPECT_THROW(split(10, {1.2, -0.2, 0.0}, 1), InvalidConfig);
}

TEST(Split, PropertyOverRandomRatios) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 300;
    double a = u(rng), b = u(rng) * (1.0 - a);
    const Split s = split(n, {a, b, 1.0 - a - b}, rng());
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), n);
    EXPECT_LE(std::abs(static_cast<double>(s.train.size()) - a * n), 0.5 + 1e-9);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    all.insert(s.test.begin(), s.test.end());
    EXPECT_EQ(all.size(), n);
  }
}

}  // namespace
