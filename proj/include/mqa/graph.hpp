#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <tuple>
#include <vector>

#include "mqa/geometry.hpp"
#include "mqa/world.hpp"

namespace mqa::graph {

// Relation thresholds on (IoU, normalised distance).
inline constexpr double kOverlapThreshold = 0.5;
inline constexpr double kCloseThreshold = 0.5;
inline constexpr double kFarThreshold = 1.0;
inline constexpr double kAlignRadius = 64.0;

enum class RelationKind { none, above_below, nearby };

inline std::string_view to_string(RelationKind r) {
  switch (r) {
    case RelationKind::above_below: return "above_below";
    case RelationKind::nearby: return "nearby";
    case RelationKind::none: break;
  }
  return "none";
}

inline RelationKind relation_from_string(std::string_view s) {
  if (s == "above_below") return RelationKind::above_below;
  if (s == "nearby") return RelationKind::nearby;
  if (s == "none") return RelationKind::none;
  throw std::invalid_argument("unknown relation: " + std::string(s));
}

struct Relation {
  RelationKind kind{RelationKind::none};
  std::optional<int> top_node;  // above/below only

  bool operator==(const Relation&) const = default;
};

inline RelationKind classify_relation(double overlap, double norm_dist) {
  if (overlap >= kOverlapThreshold) return RelationKind::above_below;
  if (norm_dist < kCloseThreshold) return RelationKind::above_below;
  if (norm_dist < kFarThreshold) return RelationKind::nearby;
  return RelationKind::none;
}

template <typename T>
RelationKind classify_boxes(const BasicBox<T>& a, const BasicBox<T>& b) {
  return classify_relation(iou(a, b), norm_distance(a, b));
}

struct Node {
  int id{};
  int class_id{};
  Box box;

  bool operator==(const Node&) const = default;
};

/// Undirected edge stored once with a < b.
struct Edge {
  int a{};
  int b{};
  Relation rel;

  bool operator==(const Edge&) const = default;
};

struct SceneGraph {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  int timestep{};

  const Node* find(int id) const {
    for (const auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }

  int degree(int id) const {
    return static_cast<int>(std::count_if(edges.begin(), edges.end(),
                                          [id](const Edge& e) { return e.a == id || e.b == id; }));
  }

  std::vector<int> neighbors(int id) const {
    std::vector<int> out;
    for (const auto& e : edges) {
      if (e.a == id) out.push_back(e.b);
      else if (e.b == id) out.push_back(e.a);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  bool operator==(const SceneGraph&) const = default;
};

/// One node per detection; an edge per pair whose relation is not None. Above/below edges are
/// directed by occlusion evidence: the detection keeping more of itself visible is on top, with
/// the simulator's stacking rank settling exact ties.
inline SceneGraph build_graph(const world::Observation& obs) {
  SceneGraph g;
  g.timestep = obs.timestep;
  std::vector<world::Detection> dets = obs.detections;
  std::sort(dets.begin(), dets.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const auto& d : dets) g.nodes.push_back({d.id, d.class_id, d.box});
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (std::size_t j = i + 1; j < dets.size(); ++j) {
      const auto kind = classify_boxes(dets[i].box, dets[j].box);
      if (kind == RelationKind::none) continue;
      Relation rel{kind, std::nullopt};
      if (kind == RelationKind::above_below) {
        const auto& p = dets[i];
        const auto& q = dets[j];
        const bool p_top = p.visibility != q.visibility ? p.visibility > q.visibility
                                                        : p.depth_rank > q.depth_rank;
        rel.top_node = p_top ? p.id : q.id;
      }
      g.edges.push_back({dets[i].id, dets[j].id, rel});
    }
  }
  return g;
}

/// Node of maximal degree, smallest id on ties.
inline int key_node(const SceneGraph& g) {
  if (g.nodes.empty()) throw std::invalid_argument("key_node: empty graph");
  int best = g.nodes.front().id;
  int best_degree = -1;
  for (const auto& n : g.nodes) {
    const int d = g.degree(n.id);
    if (d > best_degree || (d == best_degree && n.id < best)) {
      best = n.id;
      best_degree = d;
    }
  }
  return best;
}

struct Alignment {
  std::map<int, int> mapping;  // previous node id -> current node id
  std::vector<int> removed;    // previous nodes without a match
  std::vector<int> added;      // current nodes without a match

  bool operator==(const Alignment&) const = default;
};

/// Greedy class-preserving matching by nearest center within `radius`.
inline Alignment align(const SceneGraph& prev, const SceneGraph& cur, double radius = kAlignRadius) {
  struct Candidate {
    double dist;
    int prev_id;
    int cur_id;
  };
  std::vector<Candidate> candidates;
  for (const auto& p : prev.nodes) {
    for (const auto& c : cur.nodes) {
      if (p.class_id != c.class_id) continue;
      const double d = distance(center(p.box), center(c.box));
      if (d <= radius) candidates.push_back({d, p.id, c.id});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.dist, a.prev_id, a.cur_id) < std::tie(b.dist, b.prev_id, b.cur_id);
  });
  Alignment out;
  std::map<int, bool> cur_taken;
  for (const auto& c : candidates) {
    if (out.mapping.count(c.prev_id) || cur_taken[c.cur_id]) continue;
    out.mapping[c.prev_id] = c.cur_id;
    cur_taken[c.cur_id] = true;
  }
  for (const auto& p : prev.nodes)
    if (!out.mapping.count(p.id)) out.removed.push_back(p.id);
  for (const auto& c : cur.nodes)
    if (!cur_taken[c.id]) out.added.push_back(c.id);
  return out;
}

/// Per-timestep scene graphs linked by node alignments.
class DynamicSceneGraph {
 public:
  void add_frame(SceneGraph frame) {
    if (!frames_.empty()) alignments_.push_back(align(frames_.back(), frame));
    frames_.push_back(std::move(frame));
  }

  const std::vector<SceneGraph>& frames() const { return frames_; }
  const std::vector<Alignment>& alignments() const { return alignments_; }
  bool empty() const { return frames_.empty(); }
  const SceneGraph& final_frame() const {
    if (frames_.empty()) throw std::logic_error("dynamic scene graph has no frames");
    return frames_.back();
  }

  /// Follows a node through the alignments from frame `from` to the final frame.
  std::optional<int> track(int node_id, std::size_t from = 0) const {
    int id = node_id;
    for (std::size_t k = from; k < alignments_.size(); ++k) {
      const auto it = alignments_[k].mapping.find(id);
      if (it == alignments_[k].mapping.end()) return std::nullopt;
      id = it->second;
    }
    return id;
  }

 private:
  std::vector<SceneGraph> frames_;
  std::vector<Alignment> alignments_;
};

}  // namespace mqa::graph
