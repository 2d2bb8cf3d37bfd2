#pragma once

// Volumetric contour graph: one closed ring of N control points per frame,
// K+3 frames, typed edges between them.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "vgcn/errors.hpp"
#include "vgcn/types.hpp"

namespace vgcn {

enum class Topology { Decomposable, FullConnection, SpatialOnly };

enum class EdgeType { SelfLoop = 0, Spatial = 1, TemporalCorresponding = 2, TemporalNeighbor = 3 };

inline constexpr std::array<EdgeType, 4> kEdgeTypes = {
    EdgeType::SelfLoop, EdgeType::Spatial, EdgeType::TemporalCorresponding,
    EdgeType::TemporalNeighbor};

inline const char* to_string(Topology t) {
  switch (t) {
    case Topology::Decomposable: return "decomposable";
    case Topology::FullConnection: return "full";
    case Topology::SpatialOnly: return "spatial";
  }
  return "?";
}

inline Topology topology_from_string(const std::string& s) {
  if (s == "decomposable") return Topology::Decomposable;
  if (s == "full") return Topology::FullConnection;
  if (s == "spatial") return Topology::SpatialOnly;
  throw InvalidConfig("unknown topology '" + s + "' (expected decomposable|full|spatial)");
}

struct NodeId {
  std::size_t frame = 0;
  std::size_t point = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

/// Directed message edge: features of `src` flow into `dst`.
struct Edge {
  std::size_t dst = 0;
  std::size_t src = 0;
  friend bool operator==(Edge, Edge) = default;
};

/// Hop offsets of the four ring neighbours of a control point.
inline constexpr std::array<long, 4> kRingOffsets = {-2, -1, 1, 2};

class ContourGraph {
 public:
  ContourGraph() = default;

  std::size_t points() const noexcept { return points_; }
  std::size_t frames() const noexcept { return frames_; }
  std::size_t interval() const noexcept { return frames_ - 3; }
  std::size_t node_count() const noexcept { return points_ * frames_; }
  Topology topology() const noexcept { return topology_; }

  std::size_t flat(NodeId n) const { return n.frame * points_ + n.point; }
  NodeId node(std::size_t flat) const { return {flat / points_, flat % points_}; }

  const std::vector<Edge>& edges(EdgeType type) const {
    return edges_[static_cast<std::size_t>(type)];
  }

  /// Source nodes feeding `node` through edges of `type`, in edge-list order.
  std::vector<std::size_t> neighbors(std::size_t node, EdgeType type) const {
    std::vector<std::size_t> out;
    for (const Edge& e : edges(type))
      if (e.dst == node) out.push_back(e.src);
    return out;
  }

  std::size_t degree(std::size_t node, EdgeType type) const {
    std::size_t d = 0;
    for (const Edge& e : edges(type)) d += e.dst == node;
    return d;
  }

  const std::vector<Point>& coords() const noexcept { return coords_; }
  void set_coords(std::vector<Point> c) {
    if (c.size() != node_count()) {
      throw DimensionError("coords: expected " + std::to_string(node_count()) + " points, got " +
                           std::to_string(c.size()));
    }
    coords_ = std::move(c);
  }

  std::size_t ring(std::size_t point, long offset) const {
    const long n = static_cast<long>(points_);
    return static_cast<std::size_t>(((static_cast<long>(point) + offset) % n + n) % n);
  }

 private:
  friend ContourGraph build_graph(std::size_t, std::size_t, Topology);

  std::size_t points_ = 0;
  std::size_t frames_ = 0;
  Topology topology_ = Topology::Decomposable;
  std::array<std::vector<Edge>, 4> edges_;
  std::vector<Point> coords_;
};

/// Builds the (K+3)-frame graph with N control points per frame.
inline ContourGraph build_graph(std::size_t points, std::size_t interval, Topology topology) {
  if (points < 5) {
    throw InvalidConfig("graph needs at least 5 points per frame, got " + std::to_string(points));
  }
  if (interval < 1) throw InvalidConfig("keyframe interval must be >= 1");
  ContourGraph g;
  g.points_ = points;
  g.frames_ = interval + 3;
  g.topology_ = topology;
  auto& self = g.edges_[static_cast<std::size_t>(EdgeType::SelfLoop)];
  auto& spatial = g.edges_[static_cast<std::size_t>(EdgeType::Spatial)];
  auto& corr = g.edges_[static_cast<std::size_t>(EdgeType::TemporalCorresponding)];
  auto& neigh = g.edges_[static_cast<std::size_t>(EdgeType::TemporalNeighbor)];

  for (std::size_t k = 0; k < g.frames_; ++k) {
    for (std::size_t i = 0; i < points; ++i) {
      const std::size_t v = g.flat({k, i});
      self.push_back({v, v});
      for (long off : kRingOffsets) spatial.push_back({v, g.flat({k, g.ring(i, off)})});
      if (topology == Topology::SpatialOnly) continue;
      for (long dk : {-1L, 1L}) {
        const long kk = static_cast<long>(k) + dk;
        if (kk < 0 || kk >= static_cast<long>(g.frames_)) continue;
        const std::size_t other = static_cast<std::size_t>(kk);
        corr.push_back({v, g.flat({other, i})});
        if (topology == Topology::FullConnection) {
          for (long off : kRingOffsets) neigh.push_back({v, g.flat({other, g.ring(i, off)})});
        }
      }
    }
  }
  return g;
}

/// N points on the ellipse inscribed in `box`: θ_i = 2πi/N starting at the
/// rightmost point, counter-clockwise on screen (y grows downward).
inline std::vector<Point> inscribed_ellipse(const Box& box, std::size_t n) {
  std::vector<Point> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    pts[i] = {box.cx + 0.5 * box.w * std::cos(theta), box.cy - 0.5 * box.h * std::sin(theta)};
  }
  return pts;
}

/// Initializes every frame's ring on the ellipse inscribed in that frame's
/// box; point i in all frames forms one corresponding track.
inline void init_coords(ContourGraph& graph, std::span<const Box> boxes) {
  if (boxes.size() != graph.frames()) {
    throw InvalidInput("init_coords: expected " + std::to_string(graph.frames()) +
                       " boxes, got " + std::to_string(boxes.size()));
  }
  std::vector<Point> coords(graph.node_count());
  const std::size_t n = graph.points();
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const Box& b = boxes[k];
    if (!b.valid()) throw InvalidInput("init_coords: degenerate box at frame " + std::to_string(k));
    const std::vector<Point> ring = inscribed_ellipse(b, n);
    for (std::size_t i = 0; i < n; ++i) coords[graph.flat({k, i})] = ring[i];
  }
  graph.set_coords(std::move(coords));
}

}  // namespace vgcn
