#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mqa/actions.hpp"
#include "mqa/ground_truth.hpp"
#include "mqa/graph.hpp"
#include "mqa/oracle.hpp"
#include "mqa/qa.hpp"
#include "mqa/world.hpp"

namespace mqa::bench {

// ---------------------------------------------------------------------------------------------
// Dataset

struct SplitSizes {
  int train{80};
  int eval{10};
  int test{10};
};

struct DatasetConfig {
  int n_series{100};
  int questions_per_type{10};
  SplitSizes split{};
  double easy_fraction{0.5};  // share of series built on easy scenes
  double present_share{0.9};  // chance a single-class question targets a class in the scene
  double spatial_scene_share{0.7};  // chance a spatial question names a related pair in the scene
  std::uint64_t master_seed{0};

  void validate() const {
    if (n_series <= 0) throw std::invalid_argument("n_series must be positive");
    if (questions_per_type <= 0) throw std::invalid_argument("questions_per_type must be positive");
    if (split.train < 0 || split.eval < 0 || split.test < 0 ||
        split.train + split.eval + split.test != n_series)
      throw std::invalid_argument("split sizes must be non-negative and sum to n_series");
    if (!(easy_fraction >= 0.0 && easy_fraction <= 1.0))
      throw std::invalid_argument("easy_fraction must lie in [0, 1]");
    if (!(present_share >= 0.0 && present_share <= 1.0))
      throw std::invalid_argument("present_share must lie in [0, 1]");
    if (!(spatial_scene_share >= 0.0 && spatial_scene_share <= 1.0))
      throw std::invalid_argument("spatial_scene_share must lie in [0, 1]");
  }
};

struct QuestionRecord {
  std::string ref;  // "s0003/q12"
  int series{};
  int index{};
  qa::Question question;
  qa::Answer answer;

  bool operator==(const QuestionRecord&) const = default;
};

struct Series {
  int index{};
  world::Scene scene;
  std::vector<QuestionRecord> questions;

  bool operator==(const Series&) const = default;
};

struct SplitManifest {
  std::vector<int> train;
  std::vector<int> eval;
  std::vector<int> test;

  const std::vector<int>& get(const std::string& name) const {
    if (name == "train") return train;
    if (name == "eval") return eval;
    if (name == "test") return test;
    throw std::invalid_argument("unknown split: " + name);
  }
  bool operator==(const SplitManifest&) const = default;
};

struct Dataset {
  DatasetConfig config;
  std::vector<Series> series;
  SplitManifest split;

  const Series& at(int index) const {
    for (const auto& s : series)
      if (s.index == index) return s;
    throw std::out_of_range("unknown series " + std::to_string(index));
  }
  std::vector<const QuestionRecord*> questions(const std::vector<int>& series_ids) const {
    std::vector<const QuestionRecord*> out;
    for (int id : series_ids)
      for (const auto& q : at(id).questions) out.push_back(&q);
    return out;
  }
};

inline std::string question_ref(int series, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%04d/q%02d", series, index);
  return buf;
}

namespace detail {

inline std::uint64_t draw(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

inline void shuffle(std::vector<int>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw(rng, i)]);
}

/// Target classes for single-class questions: each slot takes an unused class present in the
/// scene with probability `present_share`, otherwise an unused absent one.
inline std::vector<int> target_classes(const world::Scene& scene, std::mt19937_64& rng, int count,
                                       double present_share) {
  std::vector<int> present;
  std::vector<int> absent;
  for (int c = 0; c < world::kNumClasses; ++c) {
    const bool in_scene = std::any_of(scene.objects.begin(), scene.objects.end(),
                                      [c](const auto& o) { return o.class_id == c; });
    (in_scene ? present : absent).push_back(c);
  }
  shuffle(present, rng);
  shuffle(absent, rng);
  std::vector<int> out;
  std::size_t ip = 0;
  std::size_t ia = 0;
  for (int k = 0; k < count; ++k) {
    if (ip == present.size() && ia == absent.size()) {
      ip = ia = 0;  // more questions than classes: start over
    }
    const bool want_present = static_cast<double>(rng() >> 11) * 0x1.0p-53 < present_share;
    if ((want_present && ip < present.size()) || ia == absent.size()) out.push_back(present[ip++]);
    else out.push_back(absent[ia++]);
  }
  return out;
}

/// Either a related pair present in the scene or two random classes with a random relation word.
inline qa::Question sample_spatial(const world::Scene& scene, std::mt19937_64& rng, bool from_scene) {
  if (from_scene) {
    std::vector<std::pair<const world::ObjectInstance*, const world::ObjectInstance*>> related;
    for (const auto& a : scene.objects)
      for (const auto& b : scene.objects)
        if (a.class_id != b.class_id && a.z > b.z &&
            graph::classify_boxes(a.box, b.box) != graph::RelationKind::none)
          related.emplace_back(&a, &b);
    if (!related.empty()) {
      const auto [top, bottom] = related[draw(rng, related.size())];
      if (graph::classify_boxes(top->box, bottom->box) == graph::RelationKind::nearby) {
        return draw(rng, 2) ? qa::make_spatial(top->class_id, qa::SpatialWord::near, bottom->class_id)
                            : qa::make_spatial(bottom->class_id, qa::SpatialWord::near, top->class_id);
      }
      return draw(rng, 2) ? qa::make_spatial(top->class_id, qa::SpatialWord::above, bottom->class_id)
                          : qa::make_spatial(bottom->class_id, qa::SpatialWord::below, top->class_id);
    }
  }
  const int a = static_cast<int>(draw(rng, world::kNumClasses));
  int b = static_cast<int>(draw(rng, world::kNumClasses - 1));
  if (b >= a) ++b;
  const auto word = static_cast<qa::SpatialWord>(draw(rng, 3));
  return qa::make_spatial(a, word, b);
}

}  // namespace detail

/// Scene series with oracle answers; a pure function of the config.
inline Dataset generate_dataset(const DatasetConfig& config) {
  config.validate();
  Dataset ds;
  ds.config = config;
  std::mt19937_64 rng(world::splitmix64(config.master_seed ^ 0x64617461ULL));
  for (int i = 0; i < config.n_series; ++i) {
    const std::uint64_t scene_seed = rng();
    const bool easy = static_cast<double>(rng() >> 11) * 0x1.0p-53 < config.easy_fraction;
    Series s;
    s.index = i;
    s.scene = world::generate_scene(scene_seed, easy ? world::Difficulty::easy : world::Difficulty::hard);

    std::vector<qa::Question> questions;
    const int n = config.questions_per_type;
    const auto existence_classes = detail::target_classes(s.scene, rng, n, config.present_share);
    const auto counting_classes = detail::target_classes(s.scene, rng, n, config.present_share);
    for (int k = 0; k < n; ++k) {
      const auto c = static_cast<std::size_t>(k);
      questions.push_back(qa::make_existence(existence_classes[c]));
      questions.push_back(qa::make_counting(counting_classes[c]));
      const bool from_scene = static_cast<double>(rng() >> 11) * 0x1.0p-53 < config.spatial_scene_share;
      questions.push_back(detail::sample_spatial(s.scene, rng, from_scene));
    }
    std::stable_sort(questions.begin(), questions.end(),
                     [](const auto& a, const auto& b) { return a.type < b.type; });
    for (std::size_t k = 0; k < questions.size(); ++k) {
      const int idx = static_cast<int>(k);
      s.questions.push_back({question_ref(i, idx), i, idx, questions[k],
                             ground_truth_answer(s.scene, questions[k])});
    }
    ds.series.push_back(std::move(s));
  }
  for (int i = 0; i < config.n_series; ++i) {
    if (i < config.split.train) ds.split.train.push_back(i);
    else if (i < config.split.train + config.split.eval) ds.split.eval.push_back(i);
    else ds.split.test.push_back(i);
  }
  return ds;
}

// ---------------------------------------------------------------------------------------------
// Episodes

struct EpisodeView {
  const world::Scene& scene;  // privileged; only the oracle looks at it
  const qa::Question& question;
  const std::vector<world::Observation>& observations;
  const std::vector<actions::DiscreteAction>& actions;
};

using Policy = std::function<actions::DiscreteAction(const EpisodeView&)>;

class EpisodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpisodeResult {
  qa::Question question;
  qa::Answer predicted;
  qa::Answer truth;
  int T{};                 // number of pushes executed
  bool truncated{};        // max_steps reached without STOP
  std::vector<actions::DiscreteAction> actions;  // executed pushes, then STOP if emitted
  std::vector<world::Observation> observations;  // one per timestep 0..T
  graph::DynamicSceneGraph graphs;

  bool correct() const { return predicted == truth; }
};

inline Policy stop_policy() {
  return [](const EpisodeView&) { return actions::DiscreteAction::stop(); };
}

inline Policy oracle_policy(double threshold = world::kVisibilityThreshold) {
  return [threshold](const EpisodeView& v) {
    const auto push = oracle::plan_step(v.scene, v.question, threshold);
    return push ? actions::discretize(*push) : actions::DiscreteAction::stop();
  };
}

/// Observe, update the dynamic scene graph, act; until STOP or max_steps pushes, then answer
/// from the final graph.
inline EpisodeResult run_episode(const world::Scene& scene, const qa::Question& q, const Policy& policy,
                                 int max_steps = oracle::kDefaultMaxSteps,
                                 double threshold = world::kVisibilityThreshold) {
  if (max_steps < 0) throw std::invalid_argument("run_episode: max_steps must be >= 0");
  EpisodeResult r;
  r.question = q;
  r.truth = ground_truth_answer(scene, q);
  world::Scene current = scene;
  for (int t = 0;; ++t) {
    r.observations.push_back(world::observe(current, t, threshold));
    r.graphs.add_frame(graph::build_graph(r.observations.back()));
    const auto a = policy(EpisodeView{current, q, r.observations, r.actions});
    if (!actions::is_valid(a))
      throw EpisodeError("policy emitted out-of-range action [" + std::to_string(a.x_bin) + "," +
                         std::to_string(a.y_bin) + "," + std::to_string(a.o_class) + "]");
    if (a.is_stop()) {
      r.actions.push_back(a);
      r.T = t;
      break;
    }
    if (t == max_steps) {
      r.truncated = true;
      r.T = t;
      break;
    }
    r.actions.push_back(a);
    current = world::apply_push(current, *actions::continuize(a)).scene;
  }
  r.predicted = qa::answer(r.graphs.final_frame(), q);
  return r;
}

// ---------------------------------------------------------------------------------------------
// Metrics

struct ImitationError {
  double dis_e{};
  double a_e{};
};

/// Midpoint of the push segment.
inline Point push_center(const actions::PushAction& p) {
  const auto d = actions::direction_vector(p.direction_class);
  const double half = actions::kPushDistance / 2.0;
  return {p.start.x + half * d.dx, p.start.y + half * d.dy};
}

inline ImitationError imitation_error(const actions::PushAction& predicted,
                                      const actions::PushAction& imitated) {
  return {distance(push_center(predicted), push_center(imitated)) / actions::kImageSize,
          actions::angle_between(predicted.direction_class, imitated.direction_class) / 180.0};
}

inline ImitationError imitation_error(const actions::DiscreteAction& predicted,
                                      const actions::DiscreteAction& imitated) {
  if (predicted.is_stop() || imitated.is_stop())
    throw std::invalid_argument("imitation_error: STOP has no push geometry");
  return imitation_error(*actions::continuize(predicted), *actions::continuize(imitated));
}

/// Square confusion matrix, rows = truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes)
      : k_(classes), cells_(static_cast<std::size_t>(classes * classes), 0) {}

  void add(int truth, int predicted) { ++cells_.at(static_cast<std::size_t>(truth * k_ + predicted)); }
  long at(int truth, int predicted) const { return cells_[static_cast<std::size_t>(truth * k_ + predicted)]; }
  int classes() const { return k_; }

  long row_sum(int c) const {
    long s = 0;
    for (int j = 0; j < k_; ++j) s += at(c, j);
    return s;
  }
  long col_sum(int c) const {
    long s = 0;
    for (int i = 0; i < k_; ++i) s += at(i, c);
    return s;
  }
  long total() const {
    long s = 0;
    for (long v : cells_) s += v;
    return s;
  }
  double accuracy() const {
    long diag = 0;
    for (int c = 0; c < k_; ++c) diag += at(c, c);
    return total() ? static_cast<double>(diag) / static_cast<double>(total()) : 0.0;
  }

  /// Macro average over classes that occur in truth or prediction. A class never predicted
  /// scores precision 0; a class never true scores recall 0.
  double macro_precision() const {
    return macro([&](int c) { return col_sum(c) ? static_cast<double>(at(c, c)) / static_cast<double>(col_sum(c)) : 0.0; });
  }
  double macro_recall() const {
    return macro([&](int c) { return row_sum(c) ? static_cast<double>(at(c, c)) / static_cast<double>(row_sum(c)) : 0.0; });
  }

 private:
  template <typename F>
  double macro(F per_class) const {
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < k_; ++c) {
      if (!row_sum(c) && !col_sum(c)) continue;
      sum += per_class(c);
      ++n;
    }
    return n ? sum / n : 0.0;
  }

  int k_;
  std::vector<long> cells_;
};

struct Prediction {
  qa::QuestionType type{};
  qa::Answer predicted;
  qa::Answer truth;
};

struct TypeMetrics {
  double precision{};
  double recall{};
  double accuracy{};
  long count{};
};

struct MetricsReport {
  std::map<qa::QuestionType, TypeMetrics> per_type;
  double overall_accuracy{};
  std::optional<ImitationError> imitation;  // mean dis_e and a_e
};

inline MetricsReport qa_metrics(const std::vector<Prediction>& predictions) {
  MetricsReport report;
  long correct = 0;
  for (auto type : qa::kQuestionTypes) {
    ConfusionMatrix cm(qa::answer_classes(type));
    for (const auto& p : predictions)
      if (p.type == type) cm.add(p.truth.value, p.predicted.value);
    report.per_type[type] = {cm.macro_precision(), cm.macro_recall(), cm.accuracy(), cm.total()};
  }
  for (const auto& p : predictions) correct += p.predicted == p.truth;
  report.overall_accuracy =
      predictions.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(predictions.size());
  return report;
}

inline MetricsReport qa_metrics(const std::vector<qa::QuestionType>& types,
                                const std::vector<qa::Answer>& predicted,
                                const std::vector<qa::Answer>& truths) {
  if (types.size() != predicted.size() || predicted.size() != truths.size())
    throw std::invalid_argument("qa_metrics: length mismatch");
  std::vector<Prediction> p;
  for (std::size_t i = 0; i < types.size(); ++i) p.push_back({types[i], predicted[i], truths[i]});
  return qa_metrics(p);
}

/// Runs every question of the given series under one policy.
inline std::vector<EpisodeResult> run_questions(const Dataset& ds, const std::vector<int>& series_ids,
                                                const Policy& policy, int max_steps) {
  std::vector<EpisodeResult> out;
  for (const QuestionRecord* rec : ds.questions(series_ids))
    out.push_back(run_episode(ds.at(rec->series).scene, rec->question, policy, max_steps));
  return out;
}

inline MetricsReport metrics_of(const std::vector<EpisodeResult>& episodes) {
  std::vector<Prediction> p;
  for (const auto& e : episodes) p.push_back({e.question.type, e.predicted, e.truth});
  return qa_metrics(p);
}

struct AblationRow {
  int max_steps{};
  MetricsReport metrics;
};

inline std::vector<AblationRow> ablate_max_steps(const Dataset& ds, const std::vector<int>& series_ids,
                                                 const Policy& policy,
                                                 const std::vector<int>& steps = {0, 1, 5}) {
  std::vector<AblationRow> rows;
  for (int s : steps) rows.push_back({s, metrics_of(run_questions(ds, series_ids, policy, s))});
  return rows;
}

}  // namespace mqa::bench
