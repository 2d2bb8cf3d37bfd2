#pragma once

// Per-frame feature extraction: box interpolation, margin crop, Horn–Schunck
// flow, the convolutional encoder with early flow fusion, and per-node feature
// assembly with late flow fusion.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vgcn/autodiff.hpp"
#include "vgcn/errors.hpp"
#include "vgcn/geometry.hpp"
#include "vgcn/image.hpp"
#include "vgcn/tensor.hpp"
#include "vgcn/types.hpp"

namespace vgcn {

inline constexpr std::size_t kCropSize = 112;
inline constexpr std::size_t kGridSize = 28;
inline constexpr double kBoxMargin = 0.15;
// Early-fusion flow channels are crop pixels scaled by this factor.
inline constexpr double kFlowInputScale = 0.25;

// ---------------------------------------------------------------------------
// Boxes and crops

/// Linear interpolation of (cx, cy, w, h) in frame index, keyframes at 1 and
/// K+1; frames 0 and K+2 extrapolate one step. Not clipped.
inline Box interpolate_box(const Box& a, const Box& b, std::size_t interval, std::size_t frame) {
  const double t = (static_cast<double>(frame) - 1.0) / static_cast<double>(interval);
  return {a.cx + t * (b.cx - a.cx), a.cy + t * (b.cy - a.cy), a.w + t * (b.w - a.w),
          a.h + t * (b.h - a.h)};
}

/// Intersects a normalized box with the unit square. Degenerate results keep a
/// minimal extent so downstream crops stay defined.
inline Box clip_box(const Box& b) {
  constexpr double kMinExtent = 1e-3;
  double x0 = std::clamp(b.x0(), 0.0, 1.0), x1 = std::clamp(b.x1(), 0.0, 1.0);
  double y0 = std::clamp(b.y0(), 0.0, 1.0), y1 = std::clamp(b.y1(), 0.0, 1.0);
  if (x1 - x0 < kMinExtent) {
    const double c = std::clamp(0.5 * (x0 + x1), 0.5 * kMinExtent, 1.0 - 0.5 * kMinExtent);
    x0 = c - 0.5 * kMinExtent, x1 = c + 0.5 * kMinExtent;
  }
  if (y1 - y0 < kMinExtent) {
    const double c = std::clamp(0.5 * (y0 + y1), 0.5 * kMinExtent, 1.0 - 0.5 * kMinExtent);
    y0 = c - 0.5 * kMinExtent, y1 = c + 0.5 * kMinExtent;
  }
  return Box::from_corners(x0, y0, x1, y1);
}

inline std::vector<Box> interpolate_boxes(const Box& a, const Box& b, std::size_t interval) {
  if (!a.valid() || !b.valid()) throw InvalidInput("interpolate_boxes: invalid keyframe box");
  if (interval < 1) throw InvalidConfig("keyframe interval must be >= 1");
  std::vector<Box> out;
  for (std::size_t f = 0; f < interval + 3; ++f) out.push_back(clip_box(interpolate_box(a, b, interval, f)));
  return out;
}

/// Affine map between full-image pixel coordinates and [0,1]² crop space.
/// The window [x0,x1]×[y0,y1] is in image pixel units (pixel i spans [i,i+1)).
struct CropWindow {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  Point to_crop(Point p) const { return {(p.x - x0) / (x1 - x0), (p.y - y0) / (y1 - y0)}; }
  Point to_image(Point p) const { return {x0 + p.x * (x1 - x0), y0 + p.y * (y1 - y0)}; }

  Polygon to_crop(std::span<const Point> poly) const {
    Polygon out;
    for (Point p : poly) out.push_back(to_crop(p));
    return out;
  }
  Polygon to_image(std::span<const Point> poly) const {
    Polygon out;
    for (Point p : poly) out.push_back(to_image(p));
    return out;
  }
  /// A box given in normalized full-frame units, expressed in crop units.
  Box box_in_crop(const Box& b, std::size_t image_w, std::size_t image_h) const {
    const Point a = to_crop({b.x0() * image_w, b.y0() * image_h});
    const Point c = to_crop({b.x1() * image_w, b.y1() * image_h});
    return Box::from_corners(a.x, a.y, c.x, c.y);
  }
  friend bool operator==(const CropWindow&, const CropWindow&) = default;
};

/// Window for `box` (normalized full-frame units) grown by `margin` of each
/// side length about its centre and clipped to the image.
inline CropWindow expanded_window(const Box& box, std::size_t image_w, std::size_t image_h,
                                  double margin = kBoxMargin) {
  if (!box.valid()) throw InvalidInput("crop: invalid box");
  const double W = static_cast<double>(image_w), H = static_cast<double>(image_h);
  const double cx = box.cx * W, cy = box.cy * H;
  const double w = box.w * W * (1.0 + margin), h = box.h * H * (1.0 + margin);
  CropWindow win{std::max(0.0, cx - 0.5 * w), std::max(0.0, cy - 0.5 * h),
                 std::min(W, cx + 0.5 * w), std::min(H, cy + 0.5 * h)};
  if (!(win.x1 > win.x0) || !(win.y1 > win.y0)) {
    throw InvalidInput("crop: box lies entirely outside the image");
  }
  return win;
}

/// Crop pixels are [3×S×S] in [0,1]. Crop pixel (u, v) samples the image at
/// crop coordinate (u/(S−1), v/(S−1)).
struct Crop {
  Tensor<float> pixels;
  CropWindow window;
};

inline Crop resample_window(const Image& frame, const CropWindow& win, std::size_t size) {
  if (size < 2) throw InvalidConfig("crop size must be >= 2");
  Crop crop{Tensor<float>({3, size, size}), win};
  const long W = static_cast<long>(frame.width), H = static_cast<long>(frame.height);
  const double inv = 1.0 / static_cast<double>(size - 1);
  for (std::size_t v = 0; v < size; ++v) {
    for (std::size_t u = 0; u < size; ++u) {
      const Point p = win.to_image({static_cast<double>(u) * inv, static_cast<double>(v) * inv});
      // Pixel centres sit at i + 0.5.
      const double fx = std::clamp(p.x - 0.5, 0.0, static_cast<double>(W - 1));
      const double fy = std::clamp(p.y - 0.5, 0.0, static_cast<double>(H - 1));
      const long ix = std::min(static_cast<long>(fx), W - 1), iy = std::min(static_cast<long>(fy), H - 1);
      const long ix1 = std::min(ix + 1, W - 1), iy1 = std::min(iy + 1, H - 1);
      const double ax = fx - static_cast<double>(ix), ay = fy - static_cast<double>(iy);
      for (std::size_t c = 0; c < 3; ++c) {
        auto at = [&](long x, long y) {
          return static_cast<double>(frame.pixel(static_cast<std::size_t>(x), static_cast<std::size_t>(y))[c]);
        };
        const double val = (1 - ay) * ((1 - ax) * at(ix, iy) + ax * at(ix1, iy)) +
                           ay * ((1 - ax) * at(ix, iy1) + ax * at(ix1, iy1));
        crop.pixels[(c * size + v) * size + u] = static_cast<float>(val / 255.0);
      }
    }
  }
  return crop;
}

inline Crop expand_and_crop(const Image& frame, const Box& box, std::size_t size = kCropSize,
                            double margin = kBoxMargin) {
  return resample_window(frame, expanded_window(box, frame.width, frame.height, margin), size);
}

// ---------------------------------------------------------------------------
// Optical flow

struct FlowField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> u;
  std::vector<float> v;
};

struct HornSchunckOptions {
  double alpha = 15.0;
  std::size_t iterations = 100;
};

namespace detail {

// Luminance in 0..255 units of a [C×H×W] crop in [0,1] (C = 1 or 3).
inline std::vector<double> luminance(const Tensor<float>& crop) {
  if (crop.rank() != 3 || (crop.dim(0) != 1 && crop.dim(0) != 3)) {
    throw DimensionError("luminance: expected [1|3 x H x W], got " + shape_string(crop.shape()));
  }
  const std::size_t n = crop.dim(1) * crop.dim(2);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = crop.dim(0) == 1 ? 255.0 * crop[i]
                              : 255.0 * (0.299 * crop[i] + 0.587 * crop[n + i] + 0.114 * crop[2 * n + i]);
  }
  return out;
}

struct HsProblem {
  std::size_t h = 0, w = 0;
  std::vector<double> ix, iy, it;
};

// Horn–Schunck derivative estimates: averages of first differences over the
// 2×2×2 cube, replicating edge pixels.
inline HsProblem hs_derivatives(const std::vector<double>& a, const std::vector<double>& b,
                                std::size_t h, std::size_t w) {
  HsProblem p{h, w, std::vector<double>(h * w), std::vector<double>(h * w),
              std::vector<double>(h * w)};
  auto at = [&](const std::vector<double>& img, std::size_t x, std::size_t y) {
    return img[std::min(y, h - 1) * w + std::min(x, w - 1)];
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      p.iy[i] = 0.25 * (at(a, x, y + 1) - at(a, x, y) + at(a, x + 1, y + 1) - at(a, x + 1, y) +
                        at(b, x, y + 1) - at(b, x, y) + at(b, x + 1, y + 1) - at(b, x + 1, y));
      p.ix[i] = 0.25 * (at(a, x + 1, y) - at(a, x, y) + at(a, x + 1, y + 1) - at(a, x, y + 1) +
                        at(b, x + 1, y) - at(b, x, y) + at(b, x + 1, y + 1) - at(b, x, y + 1));
      p.it[i] = 0.25 * (at(b, x, y) - at(a, x, y) + at(b, x + 1, y) - at(a, x + 1, y) +
                        at(b, x, y + 1) - at(a, x, y + 1) + at(b, x + 1, y + 1) - at(a, x + 1, y + 1));
    }
  }
  return p;
}

// Neighbour weights of the Horn–Schunck local average: 1/6 for the four edge
// neighbours, 1/12 for the diagonals.
inline constexpr std::array<std::array<int, 3>, 8> kHsStencil = {{{-1, 0, 2}, {1, 0, 2}, {0, -1, 2},
                                                                   {0, 1, 2}, {-1, -1, 1}, {1, -1, 1},
                                                                   {-1, 1, 1}, {1, 1, 1}}};

}  // namespace detail

/// Discrete Horn–Schunck energy: Σ (Ix·u + Iy·v + It)² + α² Σ_{pairs} w_ij ‖(u,v)_i − (u,v)_j‖²,
/// over each unordered neighbour pair once, derivatives computed from `prev`
/// and `next` as by horn_schunck_flow.
inline double horn_schunck_energy(const detail::HsProblem& p, const FlowField& f, double alpha) {
  double e = 0.0;
  const long h = static_cast<long>(p.h), w = static_cast<long>(p.w);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y * w + x);
      const double d = p.ix[i] * f.u[i] + p.iy[i] * f.v[i] + p.it[i];
      e += d * d;
      for (const auto& s : detail::kHsStencil) {
        const long xx = x + s[0], yy = y + s[1];
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
        const std::size_t j = static_cast<std::size_t>(yy * w + xx);
        if (j < i) continue;  // count each pair once
        const double wij = s[2] / 12.0;
        const double du = f.u[i] - f.u[j], dv = f.v[i] - f.v[j];
        e += alpha * alpha * wij * (du * du + dv * dv);
      }
    }
  }
  return e;
}

/// Horn–Schunck flow from `prev` to `next` ([C×H×W] crops in [0,1]),
/// zero-initialized. Each sweep visits pixels in raster order and replaces
/// (u, v) by the exact minimizer of the energy with all other pixels fixed
/// (Gauss–Seidel form of the classical update), so the energy never increases.
/// `observer`, when set, receives the field after every sweep.
inline FlowField horn_schunck_flow(const Tensor<float>& prev, const Tensor<float>& next,
                                   const HornSchunckOptions& opts = {},
                                   const std::function<void(const detail::HsProblem&, const FlowField&)>&
                                       observer = nullptr) {
  prev.require_same_shape(next, "horn_schunck_flow");
  const std::size_t h = prev.dim(1), w = prev.dim(2);
  const detail::HsProblem p = detail::hs_derivatives(detail::luminance(prev), detail::luminance(next), h, w);
  FlowField f{h, w, std::vector<float>(h * w, 0.f), std::vector<float>(h * w, 0.f)};
  std::vector<double> u(h * w, 0.0), v(h * w, 0.0);
  const double a2 = opts.alpha * opts.alpha;
  const long H = static_cast<long>(h), W = static_cast<long>(w);
  auto publish = [&] {
    for (std::size_t i = 0; i < h * w; ++i) f.u[i] = static_cast<float>(u[i]), f.v[i] = static_cast<float>(v[i]);
  };
  for (std::size_t it = 0; it < opts.iterations; ++it) {
    for (long y = 0; y < H; ++y) {
      for (long x = 0; x < W; ++x) {
        double wsum = 0.0, ub = 0.0, vb = 0.0;
        for (const auto& s : detail::kHsStencil) {
          const long xx = x + s[0], yy = y + s[1];
          if (xx < 0 || yy < 0 || xx >= W || yy >= H) continue;
          const std::size_t j = static_cast<std::size_t>(yy * W + xx);
          const double wij = s[2] / 12.0;
          wsum += wij;
          ub += wij * u[j];
          vb += wij * v[j];
        }
        ub /= wsum;
        vb /= wsum;
        const std::size_t i = static_cast<std::size_t>(y * W + x);
        const double beta = a2 * wsum;
        const double t = (p.ix[i] * ub + p.iy[i] * vb + p.it[i]) /
                         (beta + p.ix[i] * p.ix[i] + p.iy[i] * p.iy[i]);
        u[i] = ub - p.ix[i] * t;
        v[i] = vb - p.iy[i] * t;
      }
    }
    if (observer) {
      publish();
      observer(p, f);
    }
  }
  publish();
  return f;
}

/// Average-pools a flow field onto a grid×grid lattice and converts pixel
/// displacements to crop units. Output is [2×grid×grid].
template <class T>
Tensor<T> pool_flow(const FlowField& flow, std::size_t grid = kGridSize) {
  if (flow.height % grid || flow.width % grid) {
    throw DimensionError("pool_flow: " + std::to_string(flow.height) + "x" + std::to_string(flow.width) +
                         " is not a multiple of " + std::to_string(grid));
  }
  const std::size_t sy = flow.height / grid, sx = flow.width / grid;
  Tensor<T> out({2, grid, grid});
  const double nx = 1.0 / static_cast<double>(flow.width - 1);
  const double ny = 1.0 / static_cast<double>(flow.height - 1);
  for (std::size_t gy = 0; gy < grid; ++gy)
    for (std::size_t gx = 0; gx < grid; ++gx) {
      double su = 0.0, sv = 0.0;
      for (std::size_t y = gy * sy; y < (gy + 1) * sy; ++y)
        for (std::size_t x = gx * sx; x < (gx + 1) * sx; ++x) {
          su += flow.u[y * flow.width + x];
          sv += flow.v[y * flow.width + x];
        }
      const double area = static_cast<double>(sx * sy);
      out[gy * grid + gx] = static_cast<T>(su / area * nx);
      out[grid * grid + gy * grid + gx] = static_cast<T>(sv / area * ny);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Encoder

struct EncoderConfig {
  std::size_t stage1 = 16;
  std::size_t stage2 = 32;
  std::size_t appearance = 32;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Encoder input channels per frame: RGB then (u, v).
inline constexpr std::size_t kEncoderInputChannels = 5;

template <class T>
struct EncoderVars {
  ad::Var<T> conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b, head_w, head_b;
};

/// Feature maps for a batch of F frames on the shared 28×28 lattice.
template <class T>
struct FeatureVolume {
  ad::Var<T> appearance;       // [F×C_app×28×28]
  ad::Var<T> boundary;         // [F×2×28×28], edge and vertex probability
  ad::Var<T> boundary_logits;  // [F×2×28×28]
  ad::Var<T> flow;             // [F×2×28×28], crop units; constant
  std::size_t frames = 0;
};

/// Packs crops and flows into the [F×5×S×S] encoder input. Without motion the
/// flow channels are zero.
template <class T>
Tensor<T> encoder_input(std::span<const Tensor<float>> crops, std::span<const FlowField> flows,
                        bool use_motion) {
  if (crops.empty()) throw ContractViolation("encoder_input: no frames");
  const std::size_t s = crops[0].dim(1);
  if (use_motion && flows.size() != crops.size()) {
    throw ContractViolation("encoder_input: " + std::to_string(flows.size()) + " flows for " +
                            std::to_string(crops.size()) + " crops");
  }
  Tensor<T> x({crops.size(), kEncoderInputChannels, s, s});
  const std::size_t plane = s * s;
  for (std::size_t f = 0; f < crops.size(); ++f) {
    if (crops[f].shape() != Shape{3, s, s}) {
      throw ContractViolation("encoder_input: crop " + shape_string(crops[f].shape()));
    }
    T* dst = x.data().data() + f * kEncoderInputChannels * plane;
    for (std::size_t i = 0; i < 3 * plane; ++i) dst[i] = static_cast<T>(crops[f][i]) - T(0.5);
    if (use_motion) {
      if (flows[f].height != s || flows[f].width != s) {
        throw ContractViolation("encoder_input: flow and crop are not aligned");
      }
      for (std::size_t i = 0; i < plane; ++i) {
        dst[3 * plane + i] = static_cast<T>(flows[f].u[i] * kFlowInputScale);
        dst[4 * plane + i] = static_cast<T>(flows[f].v[i] * kFlowInputScale);
      }
    }
  }
  return x;
}

/// Runs the encoder: two stride-2 stages (S → S/2 → S/4) then a stride-1
/// refinement emitting appearance channels, plus a sigmoid head for the
/// edge/vertex maps. `pooled_flow` is [F×2×grid×grid].
template <class T>
FeatureVolume<T> encode(ad::Tape<T>& tape, const EncoderVars<T>& p, Tensor<T> input,
                        Tensor<T> pooled_flow) {
  if (input.rank() != 4 || input.dim(1) != kEncoderInputChannels) {
    throw ContractViolation("encode: input must be [F x 5 x S x S], got " + shape_string(input.shape()));
  }
  const std::size_t frames = input.dim(0);
  ad::Var<T> x = tape.constant(std::move(input));
  ad::Var<T> h1 = ad::relu(ad::conv2d(x, p.conv1_w, p.conv1_b, 2, 1));
  ad::Var<T> h2 = ad::relu(ad::conv2d(h1, p.conv2_w, p.conv2_b, 2, 1));
  FeatureVolume<T> vol;
  vol.frames = frames;
  vol.appearance = ad::conv2d(h2, p.conv3_w, p.conv3_b, 1, 1);
  vol.boundary_logits = ad::conv2d(h2, p.head_w, p.head_b, 1, 1);
  vol.boundary = ad::sigmoid(vol.boundary_logits);
  const Shape& grid = vol.appearance.shape();
  if (pooled_flow.shape() != Shape{frames, 2, grid[2], grid[3]}) {
    throw ContractViolation("encode: pooled flow " + shape_string(pooled_flow.shape()) +
                            " does not match feature grid " + shape_string(grid));
  }
  vol.flow = tape.constant(std::move(pooled_flow));
  return vol;
}

/// Per-node feature rows: [appearance | edge, vertex | x, y | u, v]. Flow
/// slots carry sampled flow on iteration 0 and zeros afterwards (or always
/// zeros without motion features), so the width never changes.
template <class T>
ad::Var<T> assemble_node_features(const FeatureVolume<T>& vol, const ad::Var<T>& coords,
                                  const std::vector<std::size_t>& frame_of_row,
                                  std::size_t iteration, bool use_motion) {
  ad::Tape<T>& tape = coords.tape();
  const std::size_t n = coords.value().dim(0);
  ad::Var<T> app = ad::bilinear_sample(vol.appearance, coords, frame_of_row);
  ad::Var<T> bnd = ad::bilinear_sample(vol.boundary, coords, frame_of_row);
  ad::Var<T> flow = (iteration == 0 && use_motion)
                        ? ad::bilinear_sample(vol.flow, coords, frame_of_row)
                        : tape.constant(Tensor<T>({n, 2}));
  const std::array<ad::Var<T>, 4> parts{app, bnd, coords, flow};
  return ad::concat_cols<T>(parts);
}

/// Targets for the edge/vertex heads from a ground-truth polygon in crop
/// units: edge cells lie on the densely sampled boundary, vertex cells hold the
/// `vertices` arc-length samples. Output is [2×grid×grid].
template <class T>
Tensor<T> boundary_targets(std::span<const Point> gt_crop, std::size_t vertices,
                           std::size_t grid = kGridSize) {
  Tensor<T> out({2, grid, grid});
  const double g = static_cast<double>(grid - 1);
  auto mark = [&](Point p, std::size_t channel) {
    const long cx = std::lround(p.x * g), cy = std::lround(p.y * g);
    if (cx < 0 || cy < 0 || cx > static_cast<long>(grid - 1) || cy > static_cast<long>(grid - 1)) return;
    out[(channel * grid + static_cast<std::size_t>(cy)) * grid + static_cast<std::size_t>(cx)] = T(1);
  };
  const double per = perimeter(gt_crop);
  if (!(per > 0.0)) return out;
  const auto count = std::max<std::size_t>(3, static_cast<std::size_t>(std::ceil(per * g * 4.0)));
  for (Point p : resample_arclength(gt_crop, count)) mark(p, 0);
  for (Point p : resample_arclength(gt_crop, std::max<std::size_t>(3, vertices))) mark(p, 1);
  return out;
}

}  // namespace vgcn
