#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <tuple>

#include "vgcn/graph.hpp"

using namespace vgcn;

namespace {

using EdgeSet = std::set<std::tuple<int, std::size_t, std::size_t>>;

EdgeSet edge_set(const ContourGraph& g) {
  EdgeSet s;
  for (EdgeType t : kEdgeTypes)
    for (const Edge& e : g.edges(t)) s.insert({static_cast<int>(t), e.dst, e.src});
  return s;
}

template <class Relabel>
EdgeSet relabeled(const ContourGraph& g, Relabel f) {
  EdgeSet s;
  for (EdgeType t : kEdgeTypes)
    for (const Edge& e : g.edges(t)) s.insert({static_cast<int>(t), f(e.dst), f(e.src)});
  return s;
}

const Topology kTopologies[] = {Topology::Decomposable, Topology::FullConnection,
                                Topology::SpatialOnly};

}  // namespace

TEST(BuildGraph, NodeCount) {
  const auto g = build_graph(16, 10, Topology::Decomposable);
  std::size_t enumerated = 0;
  for (std::size_t k = 0; k < 13; ++k)
    for (std::size_t i = 0; i < 16; ++i) enumerated += g.flat({k, i}) == k * 16 + i;
  EXPECT_EQ(g.node_count(), enumerated);
  EXPECT_EQ(g.frames(), 13u);
}

TEST(BuildGraph, SpatialNeighborsOnRing) {
  const auto g = build_graph(16, 10, Topology::Decomposable);
  const std::size_t v = g.flat({5, 0});
  std::set<std::size_t> points;
  for (std::size_t src : g.neighbors(v, EdgeType::Spatial)) {
    EXPECT_EQ(g.node(src).frame, 5u);
    points.insert(g.node(src).point);
  }
  std::set<std::size_t> expected;
  for (long d : {-2L, -1L, 1L, 2L}) expected.insert(static_cast<std::size_t>((0 + d + 16) % 16));
  EXPECT_EQ(points, expected);
  EXPECT_EQ(points, (std::set<std::size_t>{1, 2, 14, 15}));
}

TEST(BuildGraph, BoundaryFrameHasOneCorrespondingEdge) {
  const auto g = build_graph(8, 3, Topology::Decomposable);
  const auto first = g.neighbors(g.flat({0, 3}), EdgeType::TemporalCorresponding);
  ASSERT_EQ(first.size(), 1u);
  EXPECT_EQ(g.node(first[0]).frame, 1u);
  EXPECT_EQ(g.node(first[0]).point, 3u);
  EXPECT_EQ(g.degree(g.flat({5, 3}), EdgeType::TemporalCorresponding), 1u);
}

TEST(BuildGraph, RejectsTooFewPoints) {
  EXPECT_THROW(build_graph(4, 10, Topology::Decomposable), InvalidConfig);
  EXPECT_THROW(build_graph(8, 0, Topology::Decomposable), InvalidConfig);
}

TEST(BuildGraph, DegreeRegularityAcrossConfigurations) {
  for (std::size_t n : {5, 8, 16, 40})
    for (std::size_t k : {1, 2, 5, 10, 20})
      for (Topology topo : kTopologies) {
        const auto g = build_graph(n, k, topo);
        const std::size_t last = g.frames() - 1;
        for (std::size_t v = 0; v < g.node_count(); ++v) {
          const std::size_t f = g.node(v).frame;
          const bool edge_frame = f == 0 || f == last;
          EXPECT_EQ(g.degree(v, EdgeType::SelfLoop), 1u);
          EXPECT_EQ(g.degree(v, EdgeType::Spatial), 4u);
          const std::size_t corr = topo == Topology::SpatialOnly ? 0 : (edge_frame ? 1 : 2);
          EXPECT_EQ(g.degree(v, EdgeType::TemporalCorresponding), corr);
          const std::size_t neigh = topo == Topology::FullConnection ? 4 * corr : 0;
          EXPECT_EQ(g.degree(v, EdgeType::TemporalNeighbor), neigh);
        }
      }
}

TEST(BuildGraph, RingShiftIsomorphism) {
  for (Topology topo : kTopologies) {
    const auto g = build_graph(9, 4, topo);
    for (std::size_t shift = 1; shift < 9; ++shift) {
      auto f = [&](std::size_t v) {
        const NodeId id = g.node(v);
        return g.flat({id.frame, (id.point + shift) % 9});
      };
      EXPECT_EQ(relabeled(g, f), edge_set(g));
    }
  }
}

TEST(BuildGraph, TimeReversalIsomorphism) {
  for (Topology topo : kTopologies) {
    const auto g = build_graph(7, 5, topo);
    auto f = [&](std::size_t v) {
      const NodeId id = g.node(v);
      return g.flat({g.frames() - 1 - id.frame, id.point});
    };
    EXPECT_EQ(relabeled(g, f), edge_set(g));
  }
}

TEST(BuildGraph, NoSelfReferencingNonLoopEdges) {
  const auto g = build_graph(8, 4, Topology::FullConnection);
  for (EdgeType t : {EdgeType::Spatial, EdgeType::TemporalCorresponding, EdgeType::TemporalNeighbor})
    for (const Edge& e : g.edges(t)) EXPECT_NE(e.dst, e.src);
}

TEST(InitCoords, UnitBoxFourPoints) {
  const auto pts = inscribed_ellipse(Box{0.5, 0.5, 1.0, 1.0}, 4);
  const Point expected[] = {{1.0, 0.5}, {0.5, 0.0}, {0.0, 0.5}, {0.5, 1.0}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(pts[i].x, expected[i].x, 1e-15);
    EXPECT_NEAR(pts[i].y, expected[i].y, 1e-15);
  }
}

TEST(InitCoords, SharedBoxGivesIdenticalFrames) {
  auto g = build_graph(12, 3, Topology::Decomposable);
  std::vector<Box> boxes(g.frames(), Box{0.4, 0.6, 0.3, 0.2});
  init_coords(g, boxes);
  for (std::size_t k = 1; k < g.frames(); ++k)
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(g.coords()[g.flat({k, i})], g.coords()[g.flat({0, i})]);
}

TEST(InitCoords, PointsInsideBox) {
  auto g = build_graph(40, 2, Topology::Decomposable);
  const std::vector<Box> boxes = {{0.3, 0.3, 0.2, 0.4}, {0.5, 0.5, 0.9, 0.1}, {0.7, 0.2, 0.05, 0.3},
                                  {0.5, 0.5, 1.0, 1.0}, {0.1, 0.9, 0.2, 0.2}};
  init_coords(g, boxes);
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    const Box& b = boxes[g.node(v).frame];
    const Point p = g.coords()[v];
    EXPECT_GE(p.x, b.x0() - 1e-12);
    EXPECT_LE(p.x, b.x1() + 1e-12);
    EXPECT_GE(p.y, b.y0() - 1e-12);
    EXPECT_LE(p.y, b.y1() + 1e-12);
  }
}

TEST(InitCoords, Errors) {
  auto g = build_graph(8, 1, Topology::Decomposable);
  std::vector<Box> boxes(4, Box{0.5, 0.5, 0.2, 0.2});
  EXPECT_THROW(init_coords(g, std::span<const Box>(boxes.data(), 3)), InvalidInput);
  boxes[2].w = 0.0;
  EXPECT_THROW(init_coords(g, boxes), InvalidInput);
}
