#pragma once

#include <algorithm>
#include <deque>
#include <optional>
#include <regex>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

#include "mqa/graph.hpp"
#include "mqa/world.hpp"

namespace mqa::qa {

inline constexpr int kMaxCount = 3;

enum class QuestionType { existence, counting, spatial };

inline constexpr std::array<QuestionType, 3> kQuestionTypes{
    QuestionType::existence, QuestionType::counting, QuestionType::spatial};

inline std::string_view to_string(QuestionType t) {
  switch (t) {
    case QuestionType::existence: return "EXISTENCE";
    case QuestionType::counting: return "COUNTING";
    case QuestionType::spatial: break;
  }
  return "SPATIAL";
}

inline QuestionType question_type_from_string(std::string_view s) {
  if (s == "EXISTENCE") return QuestionType::existence;
  if (s == "COUNTING") return QuestionType::counting;
  if (s == "SPATIAL") return QuestionType::spatial;
  throw std::invalid_argument("unknown question type: " + std::string(s));
}

/// Typed query. "A below B" is stored as "B above A", so for above/below questions class_a is
/// always the class expected on top.
struct Question {
  QuestionType type{QuestionType::existence};
  int class_a{};
  std::optional<int> class_b;
  std::optional<graph::RelationKind> relation;
  std::string text;

  bool operator==(const Question&) const = default;
};

/// Yes/No (1/0) for EXISTENCE and SPATIAL, a count in [0, 3] for COUNTING.
struct Answer {
  int value{};

  static constexpr Answer yes() { return {1}; }
  static constexpr Answer no() { return {0}; }
  constexpr bool operator==(const Answer&) const = default;
};

inline int answer_classes(QuestionType t) { return t == QuestionType::counting ? kMaxCount + 1 : 2; }

inline std::string answer_to_string(QuestionType t, Answer a) {
  if (t == QuestionType::counting) return std::to_string(a.value);
  return a.value ? "Yes" : "No";
}

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SpatialWord { above, below, near };

namespace detail {

inline std::string article(std::string_view noun) {
  return std::string_view("aeiou").find(noun.front()) != std::string_view::npos ? "an" : "a";
}

inline int resolve_class(const std::string& name) {
  const auto c = world::class_from_name(name);
  if (!c) throw ParseError("unknown object class: " + name);
  return *c;
}

}  // namespace detail

inline Question make_existence(int cls) {
  const auto name = world::class_name(cls);
  return {QuestionType::existence, cls, std::nullopt, std::nullopt,
          "Is there " + detail::article(name) + " " + std::string(name) + " in the bin?"};
}

inline Question make_counting(int cls) {
  const auto plural = world::kClassNames.at(static_cast<std::size_t>(cls)).plural;
  return {QuestionType::counting, cls, std::nullopt, std::nullopt,
          "How many " + std::string(plural) + " are there in the bin?"};
}

inline Question make_spatial(int first, SpatialWord word, int second) {
  static constexpr std::array<std::string_view, 3> words{"above", "below", "near"};
  Question q;
  q.type = QuestionType::spatial;
  q.text = "Is the " + std::string(world::class_name(first)) + " " +
           std::string(words[static_cast<std::size_t>(word)]) + " the " +
           std::string(world::class_name(second)) + "?";
  if (word == SpatialWord::below) {
    q.class_a = second;
    q.class_b = first;
  } else {
    q.class_a = first;
    q.class_b = second;
  }
  q.relation = word == SpatialWord::near ? graph::RelationKind::nearby
                                         : graph::RelationKind::above_below;
  return q;
}

inline Question parse_question(std::string_view raw) {
  static const std::regex existence(R"(^\s*Is there an? ([a-z]+) in the bin\?\s*$)");
  static const std::regex counting(R"(^\s*How many ([a-z]+) are there in the bin\?\s*$)");
  static const std::regex spatial(R"(^\s*Is the ([a-z]+) (above|below|near) the ([a-z]+)\?\s*$)");
  const std::string text(raw);
  std::smatch m;
  Question q;
  if (std::regex_match(text, m, existence)) {
    q = make_existence(detail::resolve_class(m[1]));
  } else if (std::regex_match(text, m, counting)) {
    q = make_counting(detail::resolve_class(m[1]));
  } else if (std::regex_match(text, m, spatial)) {
    const SpatialWord word = m[2] == "above"   ? SpatialWord::above
                             : m[2] == "below" ? SpatialWord::below
                                               : SpatialWord::near;
    q = make_spatial(detail::resolve_class(m[1]), word, detail::resolve_class(m[3]));
  } else {
    throw ParseError("question does not match any template: " + text);
  }
  q.text = text;
  return q;
}

/// Node ids in BFS order from the key node, continuing into the remaining components by id.
inline std::vector<int> bfs_order(const graph::SceneGraph& g) {
  std::vector<int> order;
  if (g.nodes.empty()) return order;
  std::vector<int> starts{graph::key_node(g)};
  for (const auto& n : g.nodes) starts.push_back(n.id);
  std::sort(starts.begin() + 1, starts.end());
  std::set<int> seen;
  for (int s : starts) {
    if (!seen.insert(s).second) continue;
    std::deque<int> frontier{s};
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop_front();
      order.push_back(u);
      for (int v : g.neighbors(u))
        if (seen.insert(v).second) frontier.push_back(v);
    }
  }
  return order;
}

inline bool spatial_edge_matches(const graph::SceneGraph& g, const graph::Edge& e, const Question& q) {
  if (e.rel.kind != *q.relation) return false;
  const auto* na = g.find(e.a);
  const auto* nb = g.find(e.b);
  if (!na || !nb) return false;
  auto oriented = [&](const graph::Node& u, const graph::Node& v) {
    if (u.class_id != q.class_a || v.class_id != *q.class_b) return false;
    if (e.rel.kind != graph::RelationKind::above_below) return true;
    return !e.rel.top_node || *e.rel.top_node == u.id;
  };
  return oriented(*na, *nb) || oriented(*nb, *na);
}

/// Answers from the final scene graph of an episode.
inline Answer answer(const graph::SceneGraph& final_graph, const Question& q) {
  switch (q.type) {
    case QuestionType::existence: {
      for (int id : bfs_order(final_graph))
        if (final_graph.find(id)->class_id == q.class_a) return Answer::yes();
      return Answer::no();
    }
    case QuestionType::counting: {
      const auto n = std::count_if(final_graph.nodes.begin(), final_graph.nodes.end(),
                                   [&](const graph::Node& v) { return v.class_id == q.class_a; });
      return {static_cast<int>(std::min<long>(n, kMaxCount))};
    }
    case QuestionType::spatial: {
      if (!q.class_b || !q.relation) throw std::invalid_argument("spatial question without pair");
      for (const auto& e : final_graph.edges)
        if (spatial_edge_matches(final_graph, e, q)) return Answer::yes();
      return Answer::no();
    }
  }
  return Answer::no();
}

}  // namespace mqa::qa
