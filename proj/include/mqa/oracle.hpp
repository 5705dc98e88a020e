#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "mqa/actions.hpp"
#include "mqa/ground_truth.hpp"
#include "mqa/graph.hpp"
#include "mqa/qa.hpp"
#include "mqa/world.hpp"

namespace mqa::oracle {

inline constexpr int kDefaultMaxSteps = 5;

struct TrajectoryStep {
  world::Observation observation;
  actions::DiscreteAction action;
};

/// Demonstration: observation before each action, ending with STOP.
struct Trajectory {
  qa::Question question;
  std::uint64_t scene_seed{};
  std::vector<TrajectoryStep> steps;

  std::vector<actions::DiscreteAction> actions() const {
    std::vector<actions::DiscreteAction> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.action);
    return out;
  }
};

/// Extra push recorded for No/0 answers: bin center on the action grid, direction 0.
inline actions::DiscreteAction canonical_action() {
  return actions::discretize(world::kBinSize / 2.0, world::kBinSize / 2.0, 0.0);
}

/// Ids of higher objects whose box intersects the target, highest first.
inline std::vector<int> occluders(const world::Scene& scene, int target_id) {
  const auto& target = scene.objects[scene.index_of(target_id)];
  std::vector<const world::ObjectInstance*> above;
  for (const auto& o : scene.objects)
    if (o.z > target.z && overlaps(o.box, target.box)) above.push_back(&o);
  std::sort(above.begin(), above.end(), [](auto* a, auto* b) { return a->z > b->z; });
  std::vector<int> ids;
  for (auto* o : above) ids.push_back(o->id);
  return ids;
}

/// Direction classes sorted by agreement with the vector from `from` to `to`, best first.
inline std::vector<int> directions_toward(Point from, Point to) {
  const double vx = to.x - from.x;
  const double vy = to.y - from.y;
  std::vector<std::pair<double, int>> scored;
  for (int o = 0; o < actions::kDirections; ++o) {
    const auto d = actions::direction_vector(o);
    scored.emplace_back(-(vx * d.dx + vy * d.dy), o);
  }
  // Coincident centers leave every score at zero; the stable order then starts at direction 0.
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first - 1e-12; });
  std::vector<int> out;
  for (const auto& s : scored) out.push_back(s.second);
  return out;
}

namespace detail {

struct Visibility {
  std::vector<long> pixels;
  std::vector<double> fraction;
};

inline Visibility measure(const world::Scene& scene) {
  const world::Raster raster(scene);
  Visibility v;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    v.pixels.push_back(raster.visible_pixels(i));
    v.fraction.push_back(static_cast<double>(v.pixels.back()) / area(scene.objects[i].box));
  }
  return v;
}

struct Goal {
  std::vector<int> targets;      // instances to uncover, in preference order
  std::vector<int> watched;      // instances whose visible area must grow
  std::vector<int> untouchable;  // never pushed
  std::optional<std::pair<int, int>> pair;  // spatial witness that must keep its relation
};

inline long visible_sum(const world::Scene& scene, const Visibility& v, const std::vector<int>& ids) {
  long s = 0;
  for (int id : ids) s += v.pixels[scene.index_of(id)];
  return s;
}

inline int detected(const world::Scene& scene, const Visibility& v, const std::vector<int>& ids,
                    double threshold) {
  int n = 0;
  for (int id : ids) n += v.fraction[scene.index_of(id)] >= threshold;
  return n;
}

inline bool makes_progress(const world::Scene& before, const Visibility& vb,
                           const world::Scene& after, const Goal& goal, const qa::Question& q,
                           double threshold) {
  const Visibility va = measure(after);
  if (visible_sum(after, va, goal.watched) <= visible_sum(before, vb, goal.watched)) return false;
  if (detected(after, va, goal.watched, threshold) < detected(before, vb, goal.watched, threshold))
    return false;
  if (goal.pair) {
    const auto& a = after.objects[after.index_of(goal.pair->first)];
    const auto& b = after.objects[after.index_of(goal.pair->second)];
    if (!bench::pair_satisfies(a, b, *q.relation)) return false;
  }
  return true;
}

inline std::optional<actions::PushAction> uncover(const world::Scene& scene, const Visibility& vis,
                                                  const Goal& goal, const qa::Question& q,
                                                  double threshold) {
  const world::Raster raster(scene);
  for (int target : goal.targets) {
    const auto& t = scene.objects[scene.index_of(target)];
    for (int occ_id : occluders(scene, target)) {
      if (std::find(goal.untouchable.begin(), goal.untouchable.end(), occ_id) !=
          goal.untouchable.end())
        continue;
      const std::size_t oi = scene.index_of(occ_id);
      const auto& occ = scene.objects[oi];
      std::vector<Point> starts{center(occ.box)};
      const Box vbox = raster.visible_box(oi);
      if (!is_degenerate(vbox)) starts.push_back(center(vbox));
      for (int dir : directions_toward(center(t.box), center(occ.box))) {
        std::vector<actions::PushAction> tried;
        for (Point s : starts) {
          const auto push = actions::snap({s, dir});
          if (std::find(tried.begin(), tried.end(), push) != tried.end()) continue;
          tried.push_back(push);
          const auto next = world::apply_push(scene, push);
          if (next.moved.empty()) continue;
          if (makes_progress(scene, vis, next.scene, goal, q, threshold)) return push;
        }
      }
    }
  }
  return std::nullopt;
}

template <typename Pred>
std::vector<int> ids_where(const world::Scene& scene, Pred pred) {
  std::vector<int> ids;
  for (const auto& o : scene.objects)
    if (pred(o)) ids.push_back(o.id);
  return ids;
}

}  // namespace detail

/// One least-steps move with full scene knowledge; nullopt means STOP.
///
/// Every returned push is checked by simulation to uncover more of the queried instances
/// without hiding one that was already detectable. The rule-preferred push (highest occluder,
/// from its grid-snapped center, direction closest to the target-to-occluder vector) is tried
/// first; other occluders, directions and start points are fallbacks. If no push makes
/// progress the oracle stops.
inline std::optional<actions::PushAction> plan_step(const world::Scene& scene, const qa::Question& q,
                                                    double threshold = world::kVisibilityThreshold) {
  const detail::Visibility vis = detail::measure(scene);
  auto frac = [&](int id) { return vis.fraction[scene.index_of(id)]; };
  auto by_visibility = [&](std::vector<int>& ids, bool most_first) {
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
      return most_first ? frac(a) > frac(b) : frac(a) < frac(b);
    });
  };

  detail::Goal goal;
  switch (q.type) {
    case qa::QuestionType::existence: {
      auto instances = detail::ids_where(scene, [&](const auto& o) { return o.class_id == q.class_a; });
      if (instances.empty()) return std::nullopt;
      if (std::any_of(instances.begin(), instances.end(), [&](int id) { return frac(id) >= threshold; }))
        return std::nullopt;
      by_visibility(instances, true);
      goal.targets = instances;
      goal.watched = instances;
      break;
    }
    case qa::QuestionType::counting: {
      const auto instances =
          detail::ids_where(scene, [&](const auto& o) { return o.class_id == q.class_a; });
      std::vector<int> hidden;
      for (int id : instances)
        if (frac(id) < threshold) hidden.push_back(id);
      if (hidden.empty()) return std::nullopt;
      by_visibility(hidden, false);
      goal.targets = hidden;
      goal.watched = instances;
      break;
    }
    case qa::QuestionType::spatial: {
      // Witness pairs from ground truth; stop once the observed graph already shows one.
      std::vector<std::pair<int, int>> pairs;
      for (const auto& a : scene.objects)
        for (const auto& b : scene.objects)
          if (a.class_id == q.class_a && b.class_id == *q.class_b &&
              bench::pair_satisfies(a, b, *q.relation))
            pairs.emplace_back(a.id, b.id);
      if (pairs.empty()) return std::nullopt;
      const auto g = graph::build_graph(world::observe(scene, 0, threshold));
      if (qa::answer(g, q) == qa::Answer::yes()) return std::nullopt;
      for (const auto& [a, b] : pairs) {
        goal.targets = {a, b};
        by_visibility(goal.targets, false);
        goal.watched = {a, b};
        goal.untouchable = {a, b};
        goal.pair = std::make_pair(a, b);
        if (auto push = detail::uncover(scene, vis, goal, q, threshold)) return push;
      }
      return std::nullopt;
    }
  }
  return detail::uncover(scene, vis, goal, q, threshold);
}

/// Rolls the oracle forward, recording the observation before each action. Questions whose true
/// answer is No or 0 get one canonical push before STOP.
inline Trajectory demonstrate(const world::Scene& scene, const qa::Question& q,
                              int max_steps = kDefaultMaxSteps,
                              double threshold = world::kVisibilityThreshold) {
  if (max_steps < 0) throw std::invalid_argument("demonstrate: max_steps must be >= 0");
  Trajectory traj{q, scene.seed, {}};
  const qa::Answer truth = bench::ground_truth_answer(scene, q);
  const bool negative = truth.value == 0;
  bool extra_done = false;
  world::Scene current = scene;
  int pushes = 0;
  for (int t = 0;; ++t) {
    world::Observation obs = world::observe(current, t, threshold);
    if (pushes >= max_steps) {
      traj.steps.push_back({std::move(obs), actions::DiscreteAction::stop()});
      break;
    }
    std::optional<actions::PushAction> push = plan_step(current, q, threshold);
    if (!push && negative && !extra_done) {
      push = actions::continuize(canonical_action());
      extra_done = true;
    }
    if (!push) {
      traj.steps.push_back({std::move(obs), actions::DiscreteAction::stop()});
      break;
    }
    const auto action = actions::discretize(*push);
    traj.steps.push_back({std::move(obs), action});
    current = world::apply_push(current, *actions::continuize(action)).scene;
    ++pushes;
  }
  return traj;
}

}  // namespace mqa::oracle
