#pragma once

// Sequences, manifests and sub-sequence windows.
//
// A sequence on disk is a directory holding `manifest.jsonl` (a header line
// followed by one line per frame), a `polygons.jsonl` sidecar with per-frame
// ground-truth vertex lists, and the frame PNGs. Every coordinate is in
// full-image pixels, origin top-left, y down.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "vgcn/errors.hpp"
#include "vgcn/features.hpp"
#include "vgcn/geometry.hpp"
#include "vgcn/image.hpp"
#include "vgcn/types.hpp"

namespace vgcn {

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestFormat = "vgcn-manifest";

/// Pixel-space axis-aligned box [x0, x1] x [y0, y1].
struct PixelBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

inline PixelBox polygon_extent(std::span<const Point> poly) {
  if (poly.empty()) throw InvalidInput("extent of an empty polygon");
  PixelBox b{poly[0].x, poly[0].y, poly[0].x, poly[0].y};
  for (Point p : poly) {
    b.x0 = std::min(b.x0, p.x), b.x1 = std::max(b.x1, p.x);
    b.y0 = std::min(b.y0, p.y), b.y1 = std::max(b.y1, p.y);
  }
  return b;
}

inline Box normalized_box(const PixelBox& b, std::size_t width, std::size_t height) {
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  return Box::from_corners(b.x0 / w, b.y0 / h, b.x1 / w, b.y1 / h);
}

inline PixelBox pixel_box(const Box& b, std::size_t width, std::size_t height) {
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  return {b.x0() * w, b.y0() * h, b.x1() * w, b.y1() * h};
}

struct FrameRecord {
  std::string image;                  // path relative to the manifest directory
  std::optional<Polygon> polygon;     // ground truth, pixels
  std::optional<PixelBox> box;        // ground-truth box, pixels
  std::optional<std::string> origin;  // provenance of the polygon ("human", "machine"), if known
  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

struct SequenceManifest {
  std::string id;
  std::string category;
  double fps = 10.0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<FrameRecord> frames;
  friend bool operator==(const SequenceManifest&, const SequenceManifest&) = default;

  /// Ground-truth box of frame k (explicit, else the polygon extent), normalized.
  std::optional<Box> gt_box(std::size_t k) const {
    const FrameRecord& f = frames.at(k);
    if (f.box) return normalized_box(*f.box, width, height);
    if (f.polygon && !f.polygon->empty()) return normalized_box(polygon_extent(*f.polygon), width, height);
    return std::nullopt;
  }
};

/// A manifest plus its decoded frames.
struct Sequence {
  SequenceManifest manifest;
  std::vector<Image> frames;
};

// ---------------------------------------------------------------------------
// Manifest text format

namespace detail {

inline nlohmann::json points_json(std::span<const Point> poly) {
  nlohmann::json pts = nlohmann::json::array();
  for (Point p : poly) pts.push_back({p.x, p.y});
  return pts;
}

inline Polygon points_from_json(const nlohmann::json& j) {
  Polygon out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw FormatError("polygon vertex must be [x, y]");
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

inline void check_polygon(const Polygon& poly, std::size_t frame) {
  if (poly.size() < 3) throw FormatError("polygon at frame " + std::to_string(frame) + " has fewer than 3 vertices");
  for (Point p : poly) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw FormatError("polygon at frame " + std::to_string(frame) + " has a non-finite vertex");
    }
  }
}

inline std::vector<nlohmann::json> json_lines(const std::string& text, const char* what) {
  std::vector<nlohmann::json> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string(what) + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace detail

inline std::string manifest_text(const SequenceManifest& m) {
  std::string out;
  nlohmann::json header{{"format", kManifestFormat}, {"version", kManifestVersion},
                        {"id", m.id},                {"category", m.category},
                        {"fps", m.fps},              {"width", m.width},
                        {"height", m.height},        {"frames", m.frames.size()},
                        {"polygons", "polygons.jsonl"}};
  out += header.dump() + "\n";
  for (std::size_t k = 0; k < m.frames.size(); ++k) {
    const FrameRecord& f = m.frames[k];
    nlohmann::json line{{"index", k}, {"image", f.image}};
    if (f.box) line["box"] = {f.box->x0, f.box->y0, f.box->x1, f.box->y1};
    out += line.dump() + "\n";
  }
  return out;
}

inline std::string polygons_text(const SequenceManifest& m) {
  std::string out;
  for (std::size_t k = 0; k < m.frames.size(); ++k) {
    const FrameRecord& f = m.frames[k];
    if (!f.polygon) continue;
    nlohmann::json line{{"index", k}, {"points", detail::points_json(*f.polygon)}};
    if (f.origin) line["origin"] = *f.origin;
    out += line.dump() + "\n";
  }
  return out;
}

inline SequenceManifest parse_manifest(const std::string& manifest, const std::string& polygons) {
  const auto lines = detail::json_lines(manifest, "manifest");
  if (lines.empty()) throw FormatError("manifest is empty");
  const auto& h = lines[0];
  if (h.value("format", "") != kManifestFormat) throw FormatError("not a vgcn manifest");
  if (h.value("version", 0) != kManifestVersion) {
    throw FormatError("unsupported manifest version " + std::to_string(h.value("version", 0)));
  }
  SequenceManifest m;
  try {
    m.id = h.at("id").get<std::string>();
    m.category = h.value("category", "");
    m.fps = h.value("fps", 10.0);
    m.width = h.at("width").get<std::size_t>();
    m.height = h.at("height").get<std::size_t>();
    const auto count = h.at("frames").get<std::size_t>();
    if (lines.size() != count + 1) {
      throw FormatError("manifest declares " + std::to_string(count) + " frames but lists " +
                        std::to_string(lines.size() - 1));
    }
    m.frames.resize(count);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto& l = lines[i];
      const auto k = l.at("index").get<std::size_t>();
      if (k != i - 1) throw FormatError("manifest frames out of order at line " + std::to_string(i + 1));
      m.frames[k].image = l.at("image").get<std::string>();
      if (l.contains("box")) {
        const auto& b = l["box"];
        if (!b.is_array() || b.size() != 4) throw FormatError("box must be [x0, y0, x1, y1]");
        m.frames[k].box = PixelBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      }
    }
    for (const auto& l : detail::json_lines(polygons, "polygons")) {
      const auto k = l.at("index").get<std::size_t>();
      if (k >= count) throw FormatError("polygon for frame " + std::to_string(k) + " beyond frame count");
      Polygon poly = detail::points_from_json(l.at("points"));
      detail::check_polygon(poly, k);
      m.frames[k].polygon = std::move(poly);
      if (l.contains("origin")) m.frames[k].origin = l["origin"].get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

/// Writes manifest, sidecar and frame PNGs under `dir`.
inline void write_sequence(const std::filesystem::path& dir, const Sequence& seq) {
  std::filesystem::create_directories(dir / "frames");
  for (std::size_t k = 0; k < seq.frames.size(); ++k) {
    write_png((dir / seq.manifest.frames.at(k).image).string(), seq.frames[k]);
  }
  write_file((dir / "manifest.jsonl").string(), manifest_text(seq.manifest));
  write_file((dir / "polygons.jsonl").string(), polygons_text(seq.manifest));
}

inline SequenceManifest read_manifest(const std::filesystem::path& manifest_path) {
  const auto dir = manifest_path.parent_path();
  const auto sidecar = dir / "polygons.jsonl";
  const std::string polys = std::filesystem::exists(sidecar) ? read_file(sidecar.string()) : std::string();
  return parse_manifest(read_file(manifest_path.string()), polys);
}

inline Sequence load_sequence(const std::filesystem::path& manifest_path) {
  Sequence seq{read_manifest(manifest_path), {}};
  const auto dir = manifest_path.parent_path();
  for (const FrameRecord& f : seq.manifest.frames) {
    Image img = read_png((dir / f.image).string());
    if (img.width != seq.manifest.width || img.height != seq.manifest.height) {
      throw FormatError(f.image + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        ", manifest says " + std::to_string(seq.manifest.width) + "x" +
                        std::to_string(seq.manifest.height));
    }
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

/// A corpus directory holds `index.jsonl` listing sequence manifests in order.
inline void write_corpus(const std::filesystem::path& root, const std::vector<Sequence>& seqs) {
  std::filesystem::create_directories(root);
  std::string index;
  for (const Sequence& s : seqs) {
    write_sequence(root / s.manifest.id, s);
    index += nlohmann::json{{"manifest", s.manifest.id + "/manifest.jsonl"}, {"category", s.manifest.category}}.dump() + "\n";
  }
  write_file((root / "index.jsonl").string(), index);
}

inline std::vector<std::filesystem::path> corpus_manifests(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> out;
  for (const auto& l : detail::json_lines(read_file((root / "index.jsonl").string()), "index")) {
    out.push_back(root / l.at("manifest").get<std::string>());
  }
  return out;
}

inline std::vector<Sequence> load_corpus(const std::filesystem::path& root) {
  std::vector<Sequence> out;
  for (const auto& p : corpus_manifests(root)) out.push_back(load_sequence(p));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic sequences

enum class ShapeFamily { Ellipse, Star, Blob };

inline const char* to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::Ellipse: return "ellipse";
    case ShapeFamily::Star: return "star";
    case ShapeFamily::Blob: return "blob";
  }
  return "?";
}

inline ShapeFamily shape_family_from_string(const std::string& s) {
  if (s == "ellipse") return ShapeFamily::Ellipse;
  if (s == "star") return ShapeFamily::Star;
  if (s == "blob") return ShapeFamily::Blob;
  throw InvalidConfig("unknown shape family '" + s + "' (expected ellipse|star|blob)");
}

struct MotionConfig {
  double drift = 1.0;            // max linear speed, px/frame
  double wobble = 6.0;           // amplitude of the sinusoidal path deviation, px
  double wobble_period = 14.0;   // mean period of the path deviation, frames
  double rotation = 0.04;        // max angular speed, rad/frame
  double scale_amplitude = 0.12; // relative size oscillation
  double deformation = 0.5;      // relative modulation of shape harmonics over time
  friend bool operator==(const MotionConfig&, const MotionConfig&) = default;
};

struct SynthConfig {
  std::size_t width = 128;
  std::size_t height = 128;
  std::size_t frames = 21;
  std::size_t vertices = 96;
  std::vector<ShapeFamily> families{ShapeFamily::Ellipse, ShapeFamily::Star, ShapeFamily::Blob};
  double radius_min = 16.0;
  double radius_max = 24.0;
  MotionConfig motion;
  double contrast_min = 0.2;   // object/background mean colour distance, [0,1] units
  double contrast_max = 0.6;
  double texture_amplitude = 0.08;
  double noise_sigma = 0.02;
  std::uint64_t seed = 1;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

namespace detail {

struct Wave {
  double kx, ky, phase;
  std::array<double, 3> amp;
};

inline std::vector<Wave> random_waves(std::mt19937_64& rng, double amplitude, std::size_t count) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Wave> waves;
  for (std::size_t i = 0; i < count; ++i) {
    const double period = 8.0 + 16.0 * u(rng);
    const double dir = 2.0 * std::numbers::pi * u(rng);
    const double k = 2.0 * std::numbers::pi / period;
    Wave w{k * std::cos(dir), k * std::sin(dir), 2.0 * std::numbers::pi * u(rng), {}};
    for (double& a : w.amp) a = amplitude * (0.5 + 0.5 * u(rng)) / std::sqrt(static_cast<double>(count));
    waves.push_back(w);
  }
  return waves;
}

inline std::array<double, 3> texture(const std::array<double, 3>& base, const std::vector<Wave>& waves,
                                     double x, double y) {
  std::array<double, 3> c = base;
  for (const Wave& w : waves) {
    const double s = std::sin(w.kx * x + w.ky * y + w.phase);
    for (int ch = 0; ch < 3; ++ch) c[ch] += w.amp[ch] * s;
  }
  return c;
}

// Parameters of one synthetic object trajectory.
struct ShapeTrack {
  ShapeFamily family;
  double radius;
  double aspect;                                   // ellipse
  std::vector<std::pair<int, double>> harmonics;   // (order, amplitude)
  std::vector<double> harmonic_phase;
  std::vector<double> mod_freq, mod_phase;
  double cx, cy, vx, vy;
  double wob_ax, wob_ay, wob_fx, wob_fy, wob_px, wob_py;
  double theta0, omega;
  double scale_freq, scale_phase;
  double deformation, scale_amplitude;

  double center_x(double t) const { return cx + vx * t + wob_ax * std::sin(wob_fx * t + wob_px); }
  double center_y(double t) const { return cy + vy * t + wob_ay * std::sin(wob_fy * t + wob_py); }
  double angle(double t) const { return theta0 + omega * t; }
  double scale(double t) const { return radius * (1.0 + scale_amplitude * std::sin(scale_freq * t + scale_phase)); }

  // Local radius at polar angle phi (object frame), time t; unit mean size.
  double local_radius(double phi, double t) const {
    if (family == ShapeFamily::Ellipse) {
      const double a = aspect * (1.0 + 0.5 * deformation * 0.3 * std::sin(mod_freq[0] * t + mod_phase[0]));
      const double c = std::cos(phi), s = std::sin(phi) / a;
      return 1.0 / std::sqrt(c * c + s * s);
    }
    double r = 1.0;
    for (std::size_t m = 0; m < harmonics.size(); ++m) {
      const double amp = harmonics[m].second * (1.0 + deformation * std::sin(mod_freq[m] * t + mod_phase[m]));
      r += amp * std::cos(harmonics[m].first * phi + harmonic_phase[m]);
    }
    return r;
  }

  Polygon polygon(double t, std::size_t vertices) const {
    Polygon poly(vertices);
    const double a = angle(t), s = scale(t), x = center_x(t), y = center_y(t);
    for (std::size_t j = 0; j < vertices; ++j) {
      const double phi = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(vertices);
      const double r = s * local_radius(phi, t);
      poly[j] = {x + r * std::cos(phi + a), y + r * std::sin(phi + a)};
    }
    return poly;
  }
};

inline ShapeTrack random_track(const SynthConfig& cfg, ShapeFamily family, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const MotionConfig& mc = cfg.motion;
  ShapeTrack t{};
  t.family = family;
  t.radius = range(cfg.radius_min, cfg.radius_max);
  t.aspect = range(0.55, 1.0);
  if (family == ShapeFamily::Star) {
    t.harmonics = {{3 + static_cast<int>(u(rng) * 4), range(0.2, 0.32)}};
  } else if (family == ShapeFamily::Blob) {
    for (int m = 2; m <= 5; ++m) t.harmonics.push_back({m, range(0.0, 0.12)});
  }
  for (std::size_t m = 0; m < std::max<std::size_t>(1, t.harmonics.size()); ++m) {
    t.harmonic_phase.push_back(range(0.0, 2.0 * std::numbers::pi));
    t.mod_freq.push_back(range(0.1, 0.4));
    t.mod_phase.push_back(range(0.0, 2.0 * std::numbers::pi));
  }
  const double speed = mc.drift * u(rng), heading = range(0.0, 2.0 * std::numbers::pi);
  t.vx = speed * std::cos(heading);
  t.vy = speed * std::sin(heading);
  const double span = static_cast<double>(cfg.frames - 1);
  t.cx = range(0.35, 0.65) * static_cast<double>(cfg.width) - 0.5 * t.vx * span;
  t.cy = range(0.35, 0.65) * static_cast<double>(cfg.height) - 0.5 * t.vy * span;
  const double two_pi = 2.0 * std::numbers::pi;
  t.wob_ax = mc.wobble * range(0.5, 1.0);
  t.wob_ay = mc.wobble * range(0.5, 1.0);
  t.wob_fx = two_pi / (mc.wobble_period * range(0.75, 1.25));
  t.wob_fy = two_pi / (mc.wobble_period * range(0.75, 1.25));
  t.wob_px = range(0.0, two_pi);
  t.wob_py = range(0.0, two_pi);
  t.theta0 = range(0.0, two_pi);
  t.omega = mc.rotation * range(-1.0, 1.0);
  t.scale_freq = range(0.15, 0.45);
  t.scale_phase = range(0.0, two_pi);
  t.scale_amplitude = mc.scale_amplitude;
  t.deformation = mc.deformation;
  return t;
}

inline bool inside_image(const Polygon& poly, std::size_t w, std::size_t h) {
  for (Point p : poly) {
    if (p.x < 1.0 || p.y < 1.0 || p.x > static_cast<double>(w) - 1.0 || p.y > static_cast<double>(h) - 1.0) {
      return false;
    }
  }
  return true;
}

}  // namespace detail

/// Renders one synthetic sequence: a textured shape over a static textured
/// background. The object texture is attached to the object frame, so it
/// moves rigidly with the shape; its mean colour differs from the background
/// by a per-sequence contrast drawn from [contrast_min, contrast_max], so
/// low-contrast objects are separable mainly by their motion.
inline Sequence generate_synthetic(const SynthConfig& cfg, ShapeFamily family, std::uint64_t seed,
                                   const std::string& id) {
  if (cfg.frames < 4) throw InvalidConfig("synthetic sequences need at least 4 frames");
  if (cfg.vertices < 64) throw InvalidConfig("synthetic polygons need at least 64 vertices");
  if (cfg.radius_min <= 0 || cfg.radius_max < cfg.radius_min) throw InvalidConfig("invalid radius range");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  detail::ShapeTrack track{};
  std::vector<Polygon> polys;
  bool placed = false;
  for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
    track = detail::random_track(cfg, family, rng);
    polys.clear();
    placed = true;
    for (std::size_t k = 0; k < cfg.frames && placed; ++k) {
      polys.push_back(track.polygon(static_cast<double>(k), cfg.vertices));
      placed = detail::inside_image(polys.back(), cfg.width, cfg.height);
    }
  }
  if (!placed) throw InvalidConfig("synthetic shape would leave the image; reduce radius or motion");

  std::array<double, 3> bg_base, obj_base, dir;
  for (double& c : bg_base) c = 0.3 + 0.4 * u(rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double norm = 0.0;
  for (double& d : dir) d = gauss(rng), norm += d * d;
  norm = std::sqrt(norm);
  const double contrast = cfg.contrast_min + (cfg.contrast_max - cfg.contrast_min) * u(rng);
  for (int c = 0; c < 3; ++c) obj_base[c] = bg_base[c] + contrast * dir[c] / norm;
  const auto bg_waves = detail::random_waves(rng, cfg.texture_amplitude, 4);
  const auto obj_waves = detail::random_waves(rng, cfg.texture_amplitude, 4);

  Sequence seq;
  seq.manifest.id = id;
  seq.manifest.category = to_string(family);
  seq.manifest.width = cfg.width;
  seq.manifest.height = cfg.height;
  for (std::size_t k = 0; k < cfg.frames; ++k) {
    const double t = static_cast<double>(k);
    const Mask mask = rasterize(polys[k], cfg.height, cfg.width);
    const double ox = track.center_x(t), oy = track.center_y(t);
    const double ca = std::cos(-track.angle(t)), sa = std::sin(-track.angle(t));
    const double inv_scale = track.radius / track.scale(t);
    Image img(cfg.width, cfg.height);
    std::mt19937_64 noise_rng(seed ^ (0x9e3779b97f4a7c15ULL * (k + 1)));
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (std::size_t y = 0; y < cfg.height; ++y) {
      for (std::size_t x = 0; x < cfg.width; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        std::array<double, 3> c;
        if (mask.at(y, x)) {
          // object-frame coordinates, in pixels at the reference size
          const double dx = px - ox, dy = py - oy;
          const double lx = (ca * dx - sa * dy) * inv_scale, ly = (sa * dx + ca * dy) * inv_scale;
          c = detail::texture(obj_base, obj_waves, lx, ly);
        } else {
          c = detail::texture(bg_base, bg_waves, px, py);
        }
        for (int ch = 0; ch < 3; ++ch) {
          const double v = std::clamp(c[ch] + (cfg.noise_sigma > 0 ? noise(noise_rng) : 0.0), 0.0, 1.0);
          img.pixel(x, y)[ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
      }
    }
    char name[32];
    std::snprintf(name, sizeof name, "frames/%03zu.png", k);
    FrameRecord rec{name, polys[k], polygon_extent(polys[k]), std::nullopt};
    seq.manifest.frames.push_back(std::move(rec));
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

/// `count` sequences cycling through the configured shape families; sequence
/// i is seeded from (cfg.seed, i) so any prefix of a corpus is reproducible.
inline std::vector<Sequence> generate_corpus(const SynthConfig& cfg, std::size_t count,
                                             const std::string& prefix = "seq") {
  if (cfg.families.empty()) throw InvalidConfig("no shape families configured");
  std::vector<Sequence> out;
  std::seed_seq base{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32)};
  std::mt19937_64 seeder(base);
  for (std::size_t i = 0; i < count; ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%s_%04zu", prefix.c_str(), i);
    out.push_back(generate_synthetic(cfg, cfg.families[i % cfg.families.size()], seeder(), id));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Windows and splits

/// K+3 consecutive frames bounded by keyframes at relative positions 1 and K+1.
struct SubSequence {
  std::size_t sequence = 0;          // index into the corpus
  std::size_t start = 0;             // absolute index of the first keyframe
  std::size_t interval = 0;          // K
  std::vector<std::size_t> frames;   // K+3 absolute indices; pads clamp at sequence ends
  Box key_a, key_b;                  // normalized keyframe boxes
  std::vector<Box> boxes;            // per-frame boxes (interpolated, clipped)
};

/// The window between keyframes `first` < `second` of an n-frame sequence,
/// with boxes interpolated between the two keyframe boxes.
inline SubSequence make_subsequence(std::size_t n, std::size_t sequence_index, std::size_t first,
                                    std::size_t second, const Box& key_a, const Box& key_b) {
  if (second <= first || second >= n) {
    throw InvalidInput("keyframes " + std::to_string(first) + " and " + std::to_string(second) +
                       " do not bound a window of a " + std::to_string(n) + "-frame sequence");
  }
  SubSequence w;
  w.sequence = sequence_index;
  w.start = first;
  w.interval = second - first;
  for (std::size_t r = 0; r < w.interval + 3; ++r) {
    const long abs = static_cast<long>(first) - 1 + static_cast<long>(r);
    w.frames.push_back(static_cast<std::size_t>(std::clamp(abs, 0L, static_cast<long>(n) - 1)));
  }
  w.key_a = key_a;
  w.key_b = key_b;
  w.boxes = interpolate_boxes(key_a, key_b, w.interval);
  return w;
}

/// Windows with keyframes (s, s+K) for s = 0, stride, 2·stride, ... while
/// s+K is a frame of the sequence. Sequences shorter than K+1 frames yield
/// nothing (a warning goes to `log` when given).
inline std::vector<SubSequence> extract_subsequences(const SequenceManifest& m, std::size_t sequence_index,
                                                     std::size_t interval, std::size_t stride = 0,
                                                     std::ostream* log = nullptr) {
  if (interval < 1) throw InvalidConfig("keyframe interval must be >= 1");
  if (stride == 0) stride = interval;
  std::vector<SubSequence> out;
  const std::size_t n = m.frames.size();
  if (n < interval + 1) {
    if (log) *log << "warning: sequence " << m.id << " has " << n << " frames, too short for K=" << interval << "\n";
    return out;
  }
  for (std::size_t s = 0; s + interval <= n - 1; s += stride) {
    const auto a = m.gt_box(s), b = m.gt_box(s + interval);
    if (!a || !b) {
      throw InvalidInput("sequence " + m.id + " lacks a ground-truth box at keyframe " +
                         std::to_string(a ? s + interval : s));
    }
    out.push_back(make_subsequence(n, sequence_index, s, s + interval, *a, *b));
  }
  return out;
}

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Sequence-level partition. Sizes are round(r·n) for train and val, the
/// remainder for test; membership is a seeded shuffle, each part sorted.
inline Split split(std::size_t count, const std::array<double, 3>& ratios, std::uint64_t seed) {
  double total = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw InvalidConfig("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidConfig("split ratios must sum to 1");
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = std::min(count, static_cast<std::size_t>(std::llround(ratios[0] * count)));
  const auto n_val = std::min(count - n_train, static_cast<std::size_t>(std::llround(ratios[1] * count)));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

}  // namespace vgcn
