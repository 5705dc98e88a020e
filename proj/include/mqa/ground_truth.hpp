#pragma once

#include <algorithm>

#include "mqa/graph.hpp"
#include "mqa/qa.hpp"
#include "mqa/world.hpp"

namespace mqa::bench {

/// Whether objects a and b stand in the queried relation, judged on true boxes. For above/below,
/// a must also be the higher of the two.
inline bool pair_satisfies(const world::ObjectInstance& a, const world::ObjectInstance& b,
                           graph::RelationKind relation) {
  if (a.id == b.id) return false;
  const auto kind = graph::classify_boxes(a.box, b.box);
  if (kind != relation) return false;
  return relation != graph::RelationKind::above_below || a.z > b.z;
}

/// Answer computed from the full-knowledge scene.
inline qa::Answer ground_truth_answer(const world::Scene& scene, const qa::Question& q) {
  const auto count = std::count_if(scene.objects.begin(), scene.objects.end(),
                                   [&](const auto& o) { return o.class_id == q.class_a; });
  switch (q.type) {
    case qa::QuestionType::existence:
      return count > 0 ? qa::Answer::yes() : qa::Answer::no();
    case qa::QuestionType::counting:
      return {static_cast<int>(std::min<long>(count, qa::kMaxCount))};
    case qa::QuestionType::spatial:
      for (const auto& a : scene.objects) {
        if (a.class_id != q.class_a) continue;
        for (const auto& b : scene.objects)
          if (b.class_id == *q.class_b && pair_satisfies(a, b, *q.relation)) return qa::Answer::yes();
      }
      return qa::Answer::no();
  }
  return qa::Answer::no();
}

}  // namespace mqa::bench
