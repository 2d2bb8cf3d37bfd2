#pragma once

// Test-only reference computations, independent of the code paths they check.

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "vgcn/tensor.hpp"
#include "vgcn/types.hpp"

namespace vgcn::oracle {

/// Central finite differences of a scalar function over every element of `x`.
inline Tensor<double> finite_difference(const std::function<double(const Tensor<double>&)>& f,
                                        Tensor<double> x, double eps = 1e-5) {
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double up = f(x);
    x[i] = orig - eps;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

/// ‖a − b‖ / max(‖a‖, ‖b‖, floor).
inline double relative_error(const Tensor<double>& a, const Tensor<double>& b,
                             double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.data()) v = d(rng);
  return t;
}

/// Even-odd point-in-polygon by ray casting.
inline bool inside(Point p, const std::vector<Point>& poly) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

/// Convex polygon: hull-ordered random points on a jittered circle.
inline std::vector<Point> random_convex_polygon(std::mt19937_64& rng, Point centre, double radius,
                                                std::size_t vertices) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> angles;
  for (std::size_t i = 0; i < vertices; ++i) angles.push_back(2.0 * M_PI * u(rng));
  std::sort(angles.begin(), angles.end());
  std::vector<Point> poly;
  for (double a : angles) poly.push_back({centre.x + radius * std::cos(a), centre.y + radius * std::sin(a)});
  return poly;
}

}  // namespace vgcn::oracle
