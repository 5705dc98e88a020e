#pragma once

// File-level workflows behind the `mqa` command line: gen, demo, train, eval, ablate, render.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mqa/bench.hpp"
#include "mqa/imitation.hpp"
#include "mqa/io.hpp"
#include "mqa/learner.hpp"
#include "mqa/oracle.hpp"

namespace mqa::pipeline {

namespace fs = std::filesystem;

/// Observations seen before each action when `acts` is replayed on `scene`.
inline std::vector<world::Observation> replay(const world::Scene& scene,
                                              const std::vector<actions::DiscreteAction>& acts) {
  std::vector<world::Observation> obs;
  world::Scene current = scene;
  for (std::size_t t = 0; t < acts.size(); ++t) {
    obs.push_back(world::observe(current, static_cast<int>(t)));
    if (acts[t].is_stop()) break;
    current = world::apply_push(current, *actions::continuize(acts[t])).scene;
  }
  return obs;
}

inline const bench::QuestionRecord& find_question(const bench::Dataset& ds, const std::string& ref) {
  for (const auto& s : ds.series)
    for (const auto& q : s.questions)
      if (q.ref == ref) return q;
  throw std::invalid_argument("unknown question ref: " + ref);
}

// ---------------------------------------------------------------------------------------------

inline bench::Dataset run_gen(const bench::DatasetConfig& config, const fs::path& out_dir) {
  auto ds = bench::generate_dataset(config);
  io::write_dataset(ds, out_dir);
  return ds;
}

struct DemoOptions {
  std::string split{"train"};
  int max_steps{oracle::kDefaultMaxSteps};
  int stride{1};   // keep every stride-th question of the split
  int limit{0};    // 0 = no limit
};

/// Oracle demonstrations for a split, written as trajectory lines. Returns the demo count.
inline std::size_t run_demo(const fs::path& data_dir, const DemoOptions& opt, const fs::path& out_file) {
  if (opt.stride <= 0) throw std::invalid_argument("demo: stride must be positive");
  const auto ds = io::read_dataset(data_dir);
  const auto questions = ds.questions(ds.split.get(opt.split));
  std::string out;
  std::size_t count = 0;
  for (std::size_t i = 0; i < questions.size(); i += static_cast<std::size_t>(opt.stride)) {
    if (opt.limit > 0 && count == static_cast<std::size_t>(opt.limit)) break;
    const auto* rec = questions[i];
    const auto traj = oracle::demonstrate(ds.at(rec->series).scene, rec->question, opt.max_steps);
    for (const auto& line : io::trajectory_lines(rec->ref, traj.actions()))
      out += io::to_json(line).dump() + "\n";
    ++count;
  }
  io::write_file(out_file, out);
  return count;
}

/// Rebuilds encoded training sequences from trajectory lines by replaying them on the dataset.
inline std::vector<learner::Sequence> load_sequences(const bench::Dataset& ds, const fs::path& demo_file,
                                                     int grid) {
  std::vector<io::TrajectoryLine> lines;
  for (const auto& row : io::read_jsonl(demo_file)) lines.push_back(io::trajectory_line_from_json(row));
  std::vector<learner::Sequence> out;
  for (const auto& [ref, acts] : io::group_trajectories(lines)) {
    const auto& rec = find_question(ds, ref);
    const auto obs = replay(ds.at(rec.series).scene, acts);
    if (obs.size() != acts.size()) throw io::FormatError("trajectory " + ref + " continues after STOP");
    oracle::Trajectory traj{rec.question, ds.at(rec.series).scene.seed, {}};
    for (std::size_t t = 0; t < acts.size(); ++t) traj.steps.push_back({obs[t], acts[t]});
    out.push_back(imitation::to_sequence(traj, grid));
  }
  return out;
}

struct TrainOptions {
  learner::TrainConfig config{};
  int grid{learner::kDefaultGrid};
};

inline learner::TrainResult run_train(const fs::path& data_dir, const fs::path& demo_file,
                                      const TrainOptions& opt, const fs::path& checkpoint_out,
                                      const fs::path& loss_csv_out) {
  const auto ds = io::read_dataset(data_dir);
  const auto seqs = load_sequences(ds, demo_file, opt.grid);
  auto result = learner::train(seqs, opt.config);
  io::write_file(checkpoint_out, io::to_json(result.params, opt.grid).dump() + "\n");
  io::write_file(loss_csv_out, io::loss_curve_csv(result.curve, opt.config.decoder));
  return result;
}

struct PolicySpec {
  std::string name{"oracle"};   // oracle | learned | stop
  std::optional<fs::path> checkpoint;
};

inline bench::Policy make_policy(const PolicySpec& spec) {
  if (spec.name == "oracle") return bench::oracle_policy();
  if (spec.name == "stop") return bench::stop_policy();
  if (spec.name == "learned") {
    if (!spec.checkpoint) throw std::invalid_argument("learned policy needs a checkpoint");
    auto ck = io::checkpoint_from_json(io::Json::parse(io::read_file(*spec.checkpoint)));
    return imitation::learned_policy(std::move(ck.params), ck.grid);
  }
  throw std::invalid_argument("unknown policy: " + spec.name);
}

struct EvalOptions {
  std::string split{"test"};
  PolicySpec policy{};
  int max_steps{oracle::kDefaultMaxSteps};
};

/// QA metrics of a policy on a split; a learned policy also gets its push error against the
/// oracle demonstrations of the same questions.
inline bench::MetricsReport run_eval(const fs::path& data_dir, const EvalOptions& opt,
                                     const fs::path& csv_out) {
  const auto ds = io::read_dataset(data_dir);
  const auto ids = ds.split.get(opt.split);
  auto report = bench::metrics_of(bench::run_questions(ds, ids, make_policy(opt.policy), opt.max_steps));
  if (opt.policy.name == "learned") {
    const auto ck = io::checkpoint_from_json(io::Json::parse(io::read_file(*opt.policy.checkpoint)));
    std::vector<learner::Sequence> demos;
    for (const auto* rec : ds.questions(ids))
      demos.push_back(imitation::to_sequence(
          oracle::demonstrate(ds.at(rec->series).scene, rec->question, opt.max_steps), ck.grid));
    report.imitation = imitation::imitation_error(ck.params, demos);
  } else if (opt.policy.name == "oracle") {
    report.imitation = bench::ImitationError{};
  }
  io::write_file(csv_out, io::metrics_csv(report));
  return report;
}

inline std::vector<bench::AblationRow> run_ablate(const fs::path& data_dir, const std::string& split,
                                                  const PolicySpec& policy, const std::vector<int>& steps,
                                                  const fs::path& csv_out) {
  const auto ds = io::read_dataset(data_dir);
  const auto rows = bench::ablate_max_steps(ds, ds.split.get(split), make_policy(policy), steps);
  std::string csv = "max_steps,EXISTENCE,COUNTING,SPATIAL,ALL\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.max_steps);
    for (auto t : qa::kQuestionTypes) csv += "," + io::fmt(r.metrics.per_type.at(t).accuracy);
    csv += "," + io::fmt(r.metrics.overall_accuracy) + "\n";
  }
  io::write_file(csv_out, csv);
  return rows;
}

// ---------------------------------------------------------------------------------------------
// Rendering

inline std::string render_svg(const world::Scene& scene, const world::Observation& obs,
                              const std::optional<actions::DiscreteAction>& action, const std::string& title) {
  constexpr int scale = 3;
  constexpr int size = world::kBinSize * scale;
  std::string svg;
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" viewBox=\"0 0 %d %d\">\n"
                "<rect width=\"%d\" height=\"%d\" fill=\"#f4f1ea\" stroke=\"#333\"/>\n",
                size, size + 24, size, size + 24, size, size);
  svg += buf;
  std::vector<const world::ObjectInstance*> order;
  for (const auto& o : scene.objects) order.push_back(&o);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->z < b->z; });
  for (const auto* o : order) {
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"hsl(%d,60%%,65%%)\" "
                  "stroke=\"#222\" stroke-width=\"1\"><title>%s #%d z=%d</title></rect>\n",
                  o->box.x_min * scale, o->box.y_min * scale, o->box.width() * scale,
                  o->box.height() * scale, o->class_id * 18, std::string(world::class_name(o->class_id)).c_str(),
                  o->id, o->z);
    svg += buf;
  }
  for (const auto& d : obs.detections) {
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"none\" stroke=\"#0a0\" "
                  "stroke-dasharray=\"4 3\"/>\n<text x=\"%d\" y=\"%d\" font-size=\"11\" fill=\"#030\">%s</text>\n",
                  d.box.x_min * scale, d.box.y_min * scale, d.box.width() * scale, d.box.height() * scale,
                  d.box.x_min * scale + 2, d.box.y_min * scale + 11,
                  std::string(world::class_name(d.class_id)).c_str());
    svg += buf;
  }
  if (action && !action->is_stop()) {
    const auto push = *actions::continuize(*action);
    const auto off = actions::push_offset(push.direction_class);
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#c00\" stroke-width=\"4\"/>\n"
                  "<circle cx=\"%g\" cy=\"%g\" r=\"6\" fill=\"#c00\"/>\n",
                  push.start.x * scale, push.start.y * scale, (push.start.x + off.dx) * scale,
                  (push.start.y + off.dy) * scale, (push.start.x + off.dx) * scale,
                  (push.start.y + off.dy) * scale);
    svg += buf;
  }
  std::snprintf(buf, sizeof(buf), "<text x=\"4\" y=\"%d\" font-size=\"14\">%s</text>\n</svg>\n", size + 18,
                title.c_str());
  svg += buf;
  return svg;
}

/// Writes frame_XX.svg per timestep plus graphs.jsonl (one scene graph per line).
inline bench::EpisodeResult run_render(const fs::path& data_dir, const std::string& question_ref,
                                       const PolicySpec& policy, int max_steps, const fs::path& out_dir) {
  const auto ds = io::read_dataset(data_dir);
  const auto& rec = find_question(ds, question_ref);
  const auto& scene = ds.at(rec.series).scene;
  auto result = bench::run_episode(scene, rec.question, make_policy(policy), max_steps);
  world::Scene current = scene;
  std::string graphs;
  for (std::size_t t = 0; t < result.observations.size(); ++t) {
    std::optional<actions::DiscreteAction> act;
    if (t < result.actions.size()) act = result.actions[t];
    std::string title = "t=" + std::to_string(t) + "  " + rec.question.text;
    if (t + 1 == result.observations.size())
      title += "  answer: " + qa::answer_to_string(rec.question.type, result.predicted);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%02zu.svg", t);
    io::write_file(out_dir / name, render_svg(current, result.observations[t], act, title));
    graphs += io::to_json(result.graphs.frames()[t]).dump() + "\n";
    if (act && !act->is_stop()) current = world::apply_push(current, *actions::continuize(*act)).scene;
  }
  io::write_file(out_dir / "graphs.jsonl", graphs);
  return result;
}

}  // namespace mqa::pipeline
