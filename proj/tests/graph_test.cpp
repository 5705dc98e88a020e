#include <cmath>
#include <set>
#include <stdexcept>

#include <gtest/gtest.h>

#include "mqa/graph.hpp"
#include "support.hpp"

using namespace mqa;
using namespace mqa::graph;

namespace {

RelationKind brute_relation(double overlap, double l) {
  const bool c1 = overlap >= 0.5;
  const bool c2 = overlap < 0.5 && l < 0.5;
  const bool c3 = overlap < 0.5 && 0.5 <= l && l < 1.0;
  const bool c4 = overlap < 0.5 && l >= 1.0;
  EXPECT_EQ(c1 + c2 + c3 + c4, 1);
  if (c1 || c2) return RelationKind::above_below;
  if (c3) return RelationKind::nearby;
  return RelationKind::none;
}

double brute_iou(const Box& a, const Box& b) {
  long inter = 0, uni = 0;
  for (int y = std::min(a.y_min, b.y_min); y < std::max(a.y_max, b.y_max); ++y)
    for (int x = std::min(a.x_min, b.x_min); x < std::max(a.x_max, b.x_max); ++x) {
      const bool in_a = x >= a.x_min && x < a.x_max && y >= a.y_min && y < a.y_max;
      const bool in_b = x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

SceneGraph graph_with(std::vector<Node> nodes, std::vector<Edge> edges) {
  SceneGraph g;
  g.nodes = std::move(nodes);
  g.edges = std::move(edges);
  return g;
}

Edge nearby(int a, int b) { return {a, b, {RelationKind::nearby, std::nullopt}}; }

}  // namespace

TEST(Iou, Examples) {
  const Box a{0, 0, 4, 4};
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, Box{10, 10, 12, 12}), 0.0);
  EXPECT_DOUBLE_EQ(iou(a, Box{2, 0, 6, 4}), 8.0 / 24.0);
}

TEST(Iou, TouchingEdgesDoNotOverlap) { EXPECT_EQ(iou(Box{0, 0, 4, 4}, Box{4, 0, 8, 4}), 0.0); }

TEST(Iou, RejectsDegenerateBoxes) {
  EXPECT_THROW(iou(Box{0, 0, 0, 4}, Box{0, 0, 4, 4}), std::invalid_argument);
  EXPECT_THROW(iou(Box{0, 0, 4, 4}, Box{3, 3, 3, 9}), std::invalid_argument);
}

TEST(NormDistance, Examples) {
  EXPECT_EQ(norm_distance(Box{0, 0, 4, 4}, Box{1, 1, 3, 3}), 0.0);
  EXPECT_DOUBLE_EQ(norm_distance(BoxF{-1.5, -2, 1.5, 2}, BoxF{1.5, 2, 4.5, 6}), 1.0);
  EXPECT_NEAR(norm_distance(BoxF{-3, -4, 3, 4}, BoxF{1.2, 1.6, 4.8, 6.4}), 0.5, 1e-12);
}

TEST(NormDistance, RejectsDegenerateBoxes) {
  EXPECT_THROW(norm_distance(Box{0, 0, 0, 0}, Box{0, 0, 4, 4}), std::invalid_argument);
}

TEST(GeometryProperty, SymmetryScaleInvarianceAndRasterAgreement) {
  support::Gen g(21);
  for (int i = 0; i < 2000; ++i) {
    const Box a = g.box(40, 100);
    const Box b = g.box(40, 100);
    ASSERT_EQ(iou(a, b), iou(b, a));
    ASSERT_EQ(norm_distance(a, b), norm_distance(b, a));
    ASSERT_GE(iou(a, b), 0.0);
    ASSERT_LE(iou(a, b), 1.0);
    const int k = g.integer(2, 5);
    const Box sa{a.x_min * k, a.y_min * k, a.x_max * k, a.y_max * k};
    const Box sb{b.x_min * k, b.y_min * k, b.x_max * k, b.y_max * k};
    ASSERT_NEAR(iou(sa, sb), iou(a, b), 1e-12);
    ASSERT_NEAR(norm_distance(sa, sb), norm_distance(a, b), 1e-12);
    if (i < 300) {
      ASSERT_NEAR(iou(a, b), brute_iou(a, b), 1e-12);
    }
  }
}

TEST(ClassifyRelation, Examples) {
  EXPECT_EQ(classify_relation(0.5, 2.0), RelationKind::above_below);
  EXPECT_EQ(classify_relation(0.49, 0.49), RelationKind::above_below);
  EXPECT_EQ(classify_relation(0.0, 0.7), RelationKind::nearby);
  EXPECT_EQ(classify_relation(0.0, 1.0), RelationKind::none);
}

TEST(ClassifyRelation, MatchesTruthTableOnGrid) {
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; j <= 40; ++j) {
      const double overlap = i * 0.01;
      const double l = j * 0.05;
      ASSERT_EQ(classify_relation(overlap, l), brute_relation(overlap, l)) << overlap << " " << l;
    }
}

TEST(BuildGraph, EmptyObservation) {
  const auto g = build_graph(world::Observation{});
  EXPECT_TRUE(g.nodes.empty());
  EXPECT_TRUE(g.edges.empty());
}

TEST(BuildGraph, FarApartPairHasNoEdge) {
  world::Observation obs;
  // Diagonals 10 each, centers 15 apart: iou 0, l 1.5.
  obs.detections = {{0, 0, {0, 0, 6, 8}, 1.0, 0}, {3, 1, {9, 12, 15, 20}, 1.0, 1}};
  ASSERT_DOUBLE_EQ(norm_distance(obs.detections[0].box, obs.detections[1].box), 1.5);
  const auto g = build_graph(obs);
  EXPECT_EQ(g.nodes.size(), 2u);
  EXPECT_TRUE(g.edges.empty());
}

TEST(BuildGraph, StackedPairIsAboveBelowWithOccluderOnTop) {
  world::Observation obs;
  obs.detections = {{0, 0, {0, 0, 40, 40}, 0.6, 0}, {3, 1, {0, 0, 40, 30}, 1.0, 1}};
  ASSERT_GE(iou(obs.detections[0].box, obs.detections[1].box), 0.5);
  const auto g = build_graph(obs);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].rel.kind, RelationKind::above_below);
  EXPECT_EQ(g.edges[0].rel.top_node, 3);
}

TEST(BuildGraph, SimulatedStackPointsTopAtOccluder) {
  using support::object;
  const auto s = support::scene_of({object(0, 0, {0, 0, 40, 40}, 0), object(1, 0, {10, 0, 50, 40}, 1)});
  const auto g = build_graph(world::observe(s));
  ASSERT_EQ(g.nodes.size(), 2u);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].rel.kind, RelationKind::above_below);
  EXPECT_EQ(g.edges[0].rel.top_node, 3);
}

TEST(BuildGraph, VisibilityTieFallsBackToDepthRank) {
  world::Observation obs;
  obs.detections = {{0, 0, {0, 0, 40, 40}, 1.0, 5}, {3, 1, {0, 0, 40, 40}, 1.0, 2}};
  EXPECT_EQ(build_graph(obs).edges.at(0).rel.top_node, 0);
}

TEST(BuildGraphProperty, EdgesAgreeWithRecomputedRelation) {
  support::Gen g(22);
  for (int trial = 0; trial < 60; ++trial) {
    const auto obs = world::observe(world::generate_scene(g.raw(), world::Difficulty::hard), trial);
    const auto sg = build_graph(obs);
    const std::size_t n = sg.nodes.size();
    ASSERT_EQ(n, obs.detections.size());
    ASSERT_LE(sg.edges.size(), n * (n - 1) / 2);
    std::set<std::pair<int, int>> pairs;
    for (const auto& e : sg.edges) {
      ASSERT_LT(e.a, e.b);
      ASSERT_TRUE(pairs.insert({e.a, e.b}).second);
      ASSERT_NE(e.rel.kind, RelationKind::none);
      ASSERT_EQ(classify_boxes(sg.find(e.a)->box, sg.find(e.b)->box), e.rel.kind);
      ASSERT_EQ(e.rel.top_node.has_value(), e.rel.kind == RelationKind::above_below);
      if (e.rel.top_node) {
        ASSERT_TRUE(*e.rel.top_node == e.a || *e.rel.top_node == e.b);
      }
    }
    // Every related pair of nodes carries an edge.
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (classify_boxes(sg.nodes[i].box, sg.nodes[j].box) != RelationKind::none) {
          ASSERT_TRUE(pairs.count({sg.nodes[i].id, sg.nodes[j].id}));
        }
    EXPECT_EQ(sg.timestep, trial);
  }
}

TEST(KeyNode, Examples) {
  EXPECT_EQ(key_node(graph_with({{7, 2, {0, 0, 4, 4}}}, {})), 7);
  const auto star = graph_with({{1, 0, {}}, {2, 0, {}}, {3, 0, {}}}, {nearby(1, 2), nearby(1, 3)});
  EXPECT_EQ(key_node(star), 1);
  const auto pair = graph_with({{4, 0, {}}, {9, 0, {}}}, {nearby(4, 9)});
  EXPECT_EQ(key_node(pair), 4);
}

TEST(KeyNode, TieUsesSmallestIdRegardlessOfOrder) {
  const auto g = graph_with({{9, 0, {}}, {4, 0, {}}, {6, 0, {}}}, {nearby(4, 9)});
  EXPECT_EQ(key_node(g), 4);
}

TEST(KeyNode, EmptyGraphThrows) { EXPECT_THROW(key_node(SceneGraph{}), std::invalid_argument); }

TEST(Align, IdenticalGraphsMapToIdentity) {
  const auto g = build_graph(world::observe(world::generate_scene(3, world::Difficulty::easy)));
  const auto a = align(g, g);
  EXPECT_EQ(a.mapping.size(), g.nodes.size());
  for (const auto& [from, to] : a.mapping) EXPECT_EQ(from, to);
  EXPECT_TRUE(a.removed.empty());
  EXPECT_TRUE(a.added.empty());
}

TEST(Align, FollowsOnePushLength) {
  const auto prev = graph_with({{0, 0, {10, 10, 40, 40}}}, {});
  const auto cur = graph_with({{5, 0, {66, 10, 96, 40}}}, {});
  EXPECT_EQ(align(prev, cur).mapping, (std::map<int, int>{{0, 5}}));
}

TEST(Align, ReportsRemovedAndAdded) {
  const auto prev = graph_with({{0, 0, {10, 10, 40, 40}}, {3, 1, {100, 100, 130, 130}}}, {});
  const auto cur = graph_with({{0, 0, {10, 10, 40, 40}}, {6, 2, {100, 100, 130, 130}}}, {});
  const auto a = align(prev, cur);
  EXPECT_EQ(a.mapping, (std::map<int, int>{{0, 0}}));
  EXPECT_EQ(a.removed, std::vector<int>{3});
  EXPECT_EQ(a.added, std::vector<int>{6});
}

TEST(Align, RespectsRadius) {
  const auto prev = graph_with({{0, 0, {0, 0, 20, 20}}}, {});
  const auto cur = graph_with({{1, 0, {65, 0, 85, 20}}}, {});
  EXPECT_TRUE(align(prev, cur).mapping.empty());
}

TEST(Align, GreedyTakesNearestFirst) {
  const auto prev = graph_with({{0, 0, {0, 0, 20, 20}}, {1, 0, {30, 0, 50, 20}}}, {});
  const auto cur = graph_with({{2, 0, {28, 0, 48, 20}}}, {});
  EXPECT_EQ(align(prev, cur).mapping, (std::map<int, int>{{1, 2}}));
}

TEST(AlignProperty, InjectiveAndClassPreserving) {
  support::Gen g(23);
  for (int trial = 0; trial < 200; ++trial) {
    auto random_graph = [&] {
      SceneGraph sg;
      const int n = g.integer(0, 12);
      for (int i = 0; i < n; ++i) sg.nodes.push_back({i * 5 + g.integer(0, 4), g.integer(0, 3), g.box(30)});
      return sg;
    };
    const auto prev = random_graph();
    const auto cur = random_graph();
    const auto a = align(prev, cur);
    std::set<int> image;
    for (const auto& [from, to] : a.mapping) {
      ASSERT_TRUE(image.insert(to).second);
      ASSERT_EQ(prev.find(from)->class_id, cur.find(to)->class_id);
      ASSERT_LE(distance(center(prev.find(from)->box), center(cur.find(to)->box)), kAlignRadius);
    }
    ASSERT_EQ(a.mapping.size() + a.removed.size(), prev.nodes.size());
    ASSERT_EQ(a.mapping.size() + a.added.size(), cur.nodes.size());
  }
}

TEST(DynamicSceneGraph, TracksNodesAcrossFrames) {
  DynamicSceneGraph d;
  EXPECT_THROW(d.final_frame(), std::logic_error);
  d.add_frame(graph_with({{0, 0, {0, 0, 20, 20}}}, {}));
  d.add_frame(graph_with({{0, 0, {40, 0, 60, 20}}}, {}));
  d.add_frame(graph_with({{0, 0, {96, 0, 116, 20}}}, {}));
  EXPECT_EQ(d.frames().size(), 3u);
  EXPECT_EQ(d.alignments().size(), 2u);
  EXPECT_EQ(d.track(0), 0);
  d.add_frame(graph_with({}, {}));
  EXPECT_FALSE(d.track(0));
}
