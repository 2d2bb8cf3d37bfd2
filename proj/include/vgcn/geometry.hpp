#pragma once

// Losses and metrics over control points, polygons and masks.
//
// Pixel convention for rasterization: pixel (i, j) covers [i, i+1) x [j, j+1)
// and is inside a polygon iff its centre (i + 0.5, j + 0.5) is.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vgcn/autodiff.hpp"
#include "vgcn/errors.hpp"
#include "vgcn/types.hpp"

namespace vgcn {

struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), data(h * w, 0) {}

  std::uint8_t& at(std::size_t row, std::size_t col) { return data[row * width + col]; }
  std::uint8_t at(std::size_t row, std::size_t col) const { return data[row * width + col]; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
  }
};

inline double polygon_area(std::span<const Point> poly) {
  double a = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Point p = poly[i], q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(a);
}

inline double perimeter(std::span<const Point> poly) {
  double p = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) p += distance(poly[i], poly[(i + 1) % n]);
  return p;
}

namespace detail {

// Index of the nearest point in `set` to `p`; ties resolve to the lowest index.
inline std::size_t nearest(Point p, std::span<const Point> set, double* dist) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < set.size(); ++j) {
    const double dx = p.x - set[j].x, dy = p.y - set[j].y;
    const double d = dx * dx + dy * dy;
    if (d < bd) bd = d, best = j;
  }
  if (dist) *dist = std::sqrt(bd);
  return best;
}

inline double directed_mean(std::span<const Point> from, std::span<const Point> to) {
  double s = 0.0;
  for (Point p : from) {
    double d;
    nearest(p, to, &d);
    s += d;
  }
  return s / static_cast<double>(from.size());
}

}  // namespace detail

/// Normalized bi-directional Chamfer distance: the average of the two directed
/// mean nearest-neighbour distances between `pred` and `gt`.
inline double nbcd(std::span<const Point> pred, std::span<const Point> gt) {
  if (pred.empty() || gt.empty()) throw InvalidInput("nbcd: empty point set");
  return 0.5 * (detail::directed_mean(pred, gt) + detail::directed_mean(gt, pred));
}

/// Differentiable NBCD of predicted points `pred` [n×2] against fixed `gt` [m×2].
template <class T>
ad::Var<T> nbcd_loss(const ad::Var<T>& pred, const Tensor<T>& gt) {
  const Tensor<T>& pv = pred.value();
  if (pv.rank() != 2 || pv.dim(1) != 2 || gt.rank() != 2 || gt.dim(1) != 2) {
    throw DimensionError("nbcd_loss: " + shape_string(pv.shape()) + " vs " +
                         shape_string(gt.shape()));
  }
  const std::size_t n = pv.dim(0), m = gt.dim(0);
  if (n == 0 || m == 0) throw InvalidInput("nbcd: empty point set");

  auto nn_of_pred = std::make_shared<std::vector<std::size_t>>(n);
  auto nn_of_gt = std::make_shared<std::vector<std::size_t>>(m);
  auto nearest = [](T x, T y, const Tensor<T>& set, std::size_t count, T* dist) {
    std::size_t best = 0;
    T bd = std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < count; ++j) {
      const T dx = x - set[2 * j], dy = y - set[2 * j + 1];
      const T d = dx * dx + dy * dy;
      if (d < bd) bd = d, best = j;
    }
    *dist = std::sqrt(bd);
    return best;
  };
  T fwd = T(0), bwd = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    T d;
    (*nn_of_pred)[i] = nearest(pv[2 * i], pv[2 * i + 1], gt, m, &d);
    fwd += d;
  }
  for (std::size_t j = 0; j < m; ++j) {
    T d;
    (*nn_of_gt)[j] = nearest(gt[2 * j], gt[2 * j + 1], pv, n, &d);
    bwd += d;
  }
  const T value = T(0.5) * (fwd / T(n) + bwd / T(m));
  const std::size_t ip = pred.id();
  return pred.tape().record(
      Tensor<T>::scalar(value), pred.requires_grad(),
      [ip, gt, n, m, nn_of_pred, nn_of_gt](ad::Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>* gp = t.grad_target(ip);
        if (!gp) return;
        const Tensor<T>& pv = t.value(ip);
        auto push = [&](std::size_t i, std::size_t j, T w) {
          const T dx = pv[2 * i] - gt[2 * j], dy = pv[2 * i + 1] - gt[2 * j + 1];
          const T d = std::sqrt(dx * dx + dy * dy);
          if (d <= T(0)) return;
          (*gp)[2 * i] += w * dx / d;
          (*gp)[2 * i + 1] += w * dy / d;
        };
        const T wf = g[0] * T(0.5) / T(n), wb = g[0] * T(0.5) / T(m);
        for (std::size_t i = 0; i < n; ++i) push(i, (*nn_of_pred)[i], wf);
        for (std::size_t j = 0; j < m; ++j) push((*nn_of_gt)[j], j, wb);
      });
}

/// M points equally spaced by arc length along the closed boundary, starting
/// at vertex 0 and following vertex order.
inline std::vector<Point> resample_arclength(std::span<const Point> poly, std::size_t count) {
  if (count < 3) throw InvalidInput("resample_arclength: need at least 3 output points");
  if (poly.size() < 2) throw InvalidInput("resample_arclength: polygon has fewer than 2 vertices");
  const double total = perimeter(poly);
  if (!(total > 0.0)) throw InvalidInput("resample_arclength: zero-perimeter polygon");
  const std::size_t nv = poly.size();
  std::vector<Point> out;
  out.reserve(count);
  const double step = total / static_cast<double>(count);
  std::size_t seg = 0;
  double seg_start = 0.0;
  double seg_len = distance(poly[0], poly[1 % nv]);
  for (std::size_t k = 0; k < count; ++k) {
    const double s = step * static_cast<double>(k);
    while (seg + 1 < nv && seg_start + seg_len < s) {
      seg_start += seg_len;
      ++seg;
      seg_len = distance(poly[seg], poly[(seg + 1) % nv]);
    }
    const double t = seg_len > 0.0 ? std::clamp((s - seg_start) / seg_len, 0.0, 1.0) : 0.0;
    const Point a = poly[seg], b = poly[(seg + 1) % nv];
    out.push_back(a + t * (b - a));
  }
  return out;
}

/// Even-odd scanline fill on an H×W grid, sampling at pixel centres.
inline Mask rasterize(std::span<const Point> poly, std::size_t height, std::size_t width) {
  Mask mask(height, width);
  const std::size_t n = poly.size();
  if (n < 3) return mask;
  std::vector<double> xs;
  for (std::size_t row = 0; row < height; ++row) {
    const double y = static_cast<double>(row) + 0.5;
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Point a = poly[i], b = poly[(i + 1) % n];
      if ((a.y <= y && y < b.y) || (b.y <= y && y < a.y)) {
        xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      // Pixel centres c with xs[k] <= c < xs[k+1].
      const double lo = std::ceil(xs[k] - 0.5);
      const double hi = std::ceil(xs[k + 1] - 0.5);
      const long c0 = std::max(0L, static_cast<long>(lo));
      const long c1 = std::min(static_cast<long>(width), static_cast<long>(hi));
      for (long c = c0; c < c1; ++c) mask.at(row, static_cast<std::size_t>(c)) = 1;
    }
  }
  return mask;
}

/// |A ∩ B| / |A ∪ B|; NaN when the union is empty.
inline double iou(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError("iou: mask " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                         " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += a.data[i] & b.data[i];
    uni += a.data[i] | b.data[i];
  }
  if (uni == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Mean IoU over frames, skipping frames whose union is empty. Returns 1 when
/// every frame is skipped (both sides agree that nothing is there).
inline double miou(std::span<const Mask> pred, std::span<const Mask> gt) {
  if (pred.size() != gt.size()) {
    throw ContractViolation("miou: " + std::to_string(pred.size()) + " predicted masks vs " +
                            std::to_string(gt.size()) + " ground-truth masks");
  }
  double s = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double v = iou(pred[i], gt[i]);
    if (std::isnan(v)) continue;
    s += v;
    ++used;
  }
  return used ? s / static_cast<double>(used) : 1.0;
}

/// Dense boundary samples with spacing at most `spacing`.
inline std::vector<Point> densify(std::span<const Point> poly, double spacing) {
  const double p = perimeter(poly);
  const auto count = std::max<std::size_t>(3, static_cast<std::size_t>(std::ceil(p / spacing)));
  return resample_arclength(poly, count);
}

/// Boundary F-measure at a pixel tolerance: precision is the fraction of
/// predicted boundary samples within `threshold_px` of a ground-truth sample,
/// recall the converse; both boundaries are sampled every <= 0.5 px.
inline double boundary_f1(std::span<const Point> pred, std::span<const Point> gt,
                          double threshold_px) {
  if (pred.size() < 3 || gt.size() < 3) throw InvalidInput("boundary_f1: degenerate polygon");
  const std::vector<Point> a = densify(pred, 0.5);
  const std::vector<Point> b = densify(gt, 0.5);
  auto fraction_within = [threshold_px](const std::vector<Point>& from,
                                        const std::vector<Point>& to) {
    const double t2 = threshold_px * threshold_px;
    std::size_t hit = 0;
    for (Point p : from) {
      for (Point q : to) {
        const double dx = p.x - q.x, dy = p.y - q.y;
        if (dx * dx + dy * dy <= t2) {
          ++hit;
          break;
        }
      }
    }
    return static_cast<double>(hit) / static_cast<double>(from.size());
  };
  const double precision = fraction_within(a, b);
  const double recall = fraction_within(b, a);
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

namespace detail {

// Cubic B-spline basis values at `u` for a clamped knot vector.
inline std::vector<double> bspline_basis(double u, const std::vector<double>& knots,
                                         std::size_t count) {
  constexpr int kDegree = 3;
  const std::size_t nk = knots.size();
  std::vector<double> n(nk - 1, 0.0);
  const double last = knots.back();
  for (std::size_t i = 0; i + 1 < nk; ++i) {
    if (u >= last) {
      n[i] = (knots[i] < last && knots[i + 1] >= last) ? 1.0 : 0.0;
    } else {
      n[i] = (knots[i] <= u && u < knots[i + 1]) ? 1.0 : 0.0;
    }
  }
  for (int d = 1; d <= kDegree; ++d) {
    for (std::size_t i = 0; i + d + 1 < nk; ++i) {
      double v = 0.0;
      const double l = knots[i + d] - knots[i];
      const double r = knots[i + d + 1] - knots[i + 1];
      if (l > 0.0) v += (u - knots[i]) / l * n[i];
      if (r > 0.0) v += (knots[i + d + 1] - u) / r * n[i + 1];
      n[i] = v;
    }
  }
  n.resize(count);
  return n;
}

}  // namespace detail

inline std::size_t default_interior_knots(std::size_t frames) {
  return std::max<std::size_t>(1, frames / 4);
}

/// Least-squares cubic B-spline fit of one series over its integer sample
/// positions, evaluated back at every position. Uniform interior knots on a
/// clamped knot vector; series shorter than 4 samples are returned unchanged.
inline std::vector<double> bspline_smooth_series(std::span<const double> series,
                                                 std::size_t interior_knots) {
  const std::size_t f = series.size();
  if (f < 4) return {series.begin(), series.end()};
  const std::size_t m = std::min(interior_knots, f - 4);
  const double end = static_cast<double>(f - 1);
  std::vector<double> knots(4, 0.0);
  for (std::size_t j = 1; j <= m; ++j) knots.push_back(end * static_cast<double>(j) / (m + 1.0));
  knots.insert(knots.end(), 4, end);
  const std::size_t count = m + 4;

  Eigen::MatrixXd a(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(count));
  Eigen::VectorXd y(static_cast<Eigen::Index>(f));
  for (std::size_t r = 0; r < f; ++r) {
    const auto basis = detail::bspline_basis(static_cast<double>(r), knots, count);
    for (std::size_t c = 0; c < count; ++c) a(r, c) = basis[c];
    y(r) = series[r];
  }
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd fit = a * coef;
  return {fit.data(), fit.data() + fit.size()};
}

/// Smooths per-node trajectories: `frames[k][i]` is node i at frame k, and
/// node identity is the point index. Each coordinate of each node is fitted
/// independently.
inline std::vector<Polygon> bspline_smooth(const std::vector<Polygon>& frames,
                                           std::size_t interior_knots) {
  if (frames.size() < 4) return frames;
  const std::size_t n = frames.front().size();
  for (const Polygon& p : frames) {
    if (p.size() != n) throw InvalidInput("bspline_smooth: frames disagree on point count");
  }
  std::vector<Polygon> out(frames.size(), Polygon(n));
  std::vector<double> xs(frames.size()), ys(frames.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < frames.size(); ++k) xs[k] = frames[k][i].x, ys[k] = frames[k][i].y;
    const auto sx = bspline_smooth_series(xs, interior_knots);
    const auto sy = bspline_smooth_series(ys, interior_knots);
    for (std::size_t k = 0; k < frames.size(); ++k) out[k][i] = {sx[k], sy[k]};
  }
  return out;
}

}  // namespace vgcn
