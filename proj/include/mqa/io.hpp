#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mqa/actions.hpp"
#include "mqa/bench.hpp"
#include "mqa/graph.hpp"
#include "mqa/learner.hpp"
#include "mqa/qa.hpp"
#include "mqa/world.hpp"

namespace mqa::io {

using Json = nlohmann::ordered_json;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------------------------
// Scenes and graphs

inline Json box_to_json(const Box& b) { return Json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

inline Box box_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw FormatError("box must be an array of 4 integers");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

inline Json to_json(const world::Scene& s) {
  Json objects = Json::array();
  for (const auto& o : s.objects)
    objects.push_back({{"id", o.id}, {"class", o.class_id}, {"instance", o.instance_id},
                       {"box", box_to_json(o.box)}, {"z", o.z}});
  return {{"seed", s.seed}, {"difficulty", world::to_string(s.difficulty)}, {"objects", objects}};
}

inline world::Scene scene_from_json(const Json& j) {
  world::Scene s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.difficulty = world::difficulty_from_string(j.at("difficulty").get<std::string>());
  for (const auto& o : j.at("objects"))
    s.objects.push_back({o.at("id").get<int>(), o.at("class").get<int>(), o.at("instance").get<int>(),
                         box_from_json(o.at("box")), o.at("z").get<int>()});
  return s;
}

inline Json to_json(const graph::SceneGraph& g) {
  Json nodes = Json::array();
  for (const auto& n : g.nodes)
    nodes.push_back({{"id", n.id}, {"class", n.class_id}, {"box", box_to_json(n.box)}});
  Json edges = Json::array();
  for (const auto& e : g.edges) {
    Json je{{"a", e.a}, {"b", e.b}, {"rel", graph::to_string(e.rel.kind)}};
    if (e.rel.top_node) je["top"] = *e.rel.top_node;
    edges.push_back(std::move(je));
  }
  return {{"timestep", g.timestep}, {"nodes", nodes}, {"edges", edges}};
}

inline graph::SceneGraph graph_from_json(const Json& j) {
  graph::SceneGraph g;
  g.timestep = j.at("timestep").get<int>();
  for (const auto& n : j.at("nodes"))
    g.nodes.push_back({n.at("id").get<int>(), n.at("class").get<int>(), box_from_json(n.at("box"))});
  for (const auto& e : j.at("edges")) {
    graph::Relation rel{graph::relation_from_string(e.at("rel").get<std::string>()), std::nullopt};
    if (e.contains("top")) rel.top_node = e.at("top").get<int>();
    g.edges.push_back({e.at("a").get<int>(), e.at("b").get<int>(), rel});
  }
  return g;
}

// ---------------------------------------------------------------------------------------------
// Questions

inline Json answer_to_json(qa::QuestionType t, qa::Answer a) {
  if (t == qa::QuestionType::counting) return a.value;
  return a.value ? "Yes" : "No";
}

inline qa::Answer answer_from_json(const Json& j) {
  if (j.is_number_integer()) return {j.get<int>()};
  const auto s = j.get<std::string>();
  if (s == "Yes") return qa::Answer::yes();
  if (s == "No") return qa::Answer::no();
  throw FormatError("bad answer: " + s);
}

inline Json to_json(const bench::QuestionRecord& r) {
  const auto& q = r.question;
  Json j{{"ref", r.ref}, {"series", r.series}, {"index", r.index}, {"text", q.text},
         {"qtype", qa::to_string(q.type)}, {"class_a", world::class_name(q.class_a)}};
  if (q.class_b) j["class_b"] = world::class_name(*q.class_b);
  if (q.relation) j["relation"] = graph::to_string(*q.relation);
  j["answer"] = answer_to_json(q.type, r.answer);
  return j;
}

inline int class_from_json(const Json& j) {
  const auto name = j.get<std::string>();
  const auto c = world::class_from_name(name);
  if (!c) throw FormatError("unknown class: " + name);
  return *c;
}

inline bench::QuestionRecord question_record_from_json(const Json& j) {
  bench::QuestionRecord r;
  r.ref = j.at("ref").get<std::string>();
  r.series = j.at("series").get<int>();
  r.index = j.at("index").get<int>();
  auto& q = r.question;
  q.text = j.at("text").get<std::string>();
  q.type = qa::question_type_from_string(j.at("qtype").get<std::string>());
  q.class_a = class_from_json(j.at("class_a"));
  if (j.contains("class_b")) q.class_b = class_from_json(j.at("class_b"));
  if (j.contains("relation")) q.relation = graph::relation_from_string(j.at("relation").get<std::string>());
  r.answer = answer_from_json(j.at("answer"));
  return r;
}

// ---------------------------------------------------------------------------------------------
// Files

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

inline std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::string to_jsonl(const std::vector<Json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

inline Json to_json(const bench::DatasetConfig& c) {
  return {{"n_series", c.n_series},
          {"questions_per_type", c.questions_per_type},
          {"split", Json::array({c.split.train, c.split.eval, c.split.test})},
          {"easy_fraction", c.easy_fraction},
          {"present_share", c.present_share},
          {"spatial_scene_share", c.spatial_scene_share},
          {"master_seed", c.master_seed}};
}

inline bench::DatasetConfig dataset_config_from_json(const Json& j) {
  bench::DatasetConfig c;
  c.n_series = j.value("n_series", c.n_series);
  c.questions_per_type = j.value("questions_per_type", c.questions_per_type);
  if (j.contains("split")) {
    const auto& s = j.at("split");
    c.split = {s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>()};
  }
  c.easy_fraction = j.value("easy_fraction", c.easy_fraction);
  c.present_share = j.value("present_share", c.present_share);
  c.spatial_scene_share = j.value("spatial_scene_share", c.spatial_scene_share);
  c.master_seed = j.value("master_seed", c.master_seed);
  return c;
}

/// dir/manifest.json, dir/scenes.jsonl (line k = series k), dir/questions.jsonl.
inline void write_dataset(const bench::Dataset& ds, const std::filesystem::path& dir) {
  std::vector<Json> scenes;
  std::vector<Json> questions;
  for (const auto& s : ds.series) {
    scenes.push_back(to_json(s.scene));
    for (const auto& q : s.questions) questions.push_back(to_json(q));
  }
  Json manifest{{"format", "mqa-dataset"},
                {"version", 1},
                {"config", to_json(ds.config)},
                {"splits", {{"train", ds.split.train}, {"eval", ds.split.eval}, {"test", ds.split.test}}},
                {"scenes", "scenes.jsonl"},
                {"questions", "questions.jsonl"}};
  write_file(dir / "scenes.jsonl", to_jsonl(scenes));
  write_file(dir / "questions.jsonl", to_jsonl(questions));
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline bench::Dataset read_dataset(const std::filesystem::path& dir) {
  const Json manifest = Json::parse(read_file(dir / "manifest.json"));
  if (manifest.value("format", "") != "mqa-dataset") throw FormatError("not a dataset manifest");
  bench::Dataset ds;
  ds.config = dataset_config_from_json(manifest.at("config"));
  const auto& splits = manifest.at("splits");
  ds.split.train = splits.at("train").get<std::vector<int>>();
  ds.split.eval = splits.at("eval").get<std::vector<int>>();
  ds.split.test = splits.at("test").get<std::vector<int>>();
  const auto scenes = read_jsonl(dir / manifest.at("scenes").get<std::string>());
  for (std::size_t i = 0; i < scenes.size(); ++i)
    ds.series.push_back({static_cast<int>(i), scene_from_json(scenes[i]), {}});
  for (const auto& row : read_jsonl(dir / manifest.at("questions").get<std::string>())) {
    auto rec = question_record_from_json(row);
    if (rec.series < 0 || static_cast<std::size_t>(rec.series) >= ds.series.size())
      throw FormatError("question " + rec.ref + " refers to a missing series");
    ds.series[static_cast<std::size_t>(rec.series)].questions.push_back(std::move(rec));
  }
  return ds;
}

// ---------------------------------------------------------------------------------------------
// Trajectories: one line per step {t, observation_ref, question_ref, action: [x, y, o]}

struct TrajectoryLine {
  int t{};
  std::string observation_ref;
  std::string question_ref;
  actions::DiscreteAction action;

  bool operator==(const TrajectoryLine&) const = default;
};

inline Json to_json(const TrajectoryLine& l) {
  return {{"t", l.t},
          {"observation_ref", l.observation_ref},
          {"question_ref", l.question_ref},
          {"action", Json::array({l.action.x_bin, l.action.y_bin, l.action.o_class})}};
}

inline TrajectoryLine trajectory_line_from_json(const Json& j) {
  const auto& a = j.at("action");
  if (!a.is_array() || a.size() != 3) throw FormatError("action must be [x_bin, y_bin, o_class]");
  TrajectoryLine l{j.at("t").get<int>(), j.at("observation_ref").get<std::string>(),
                   j.at("question_ref").get<std::string>(),
                   {a[0].get<int>(), a[1].get<int>(), a[2].get<int>()}};
  if (!actions::is_valid(l.action)) throw FormatError("action out of range in " + l.observation_ref);
  return l;
}

inline std::vector<TrajectoryLine> trajectory_lines(const std::string& question_ref,
                                                    const std::vector<actions::DiscreteAction>& acts) {
  std::vector<TrajectoryLine> out;
  for (std::size_t t = 0; t < acts.size(); ++t)
    out.push_back({static_cast<int>(t), question_ref + "/t" + std::to_string(t), question_ref, acts[t]});
  return out;
}

/// Groups trajectory lines by question in file order; each group must run t = 0, 1, ...
inline std::vector<std::pair<std::string, std::vector<actions::DiscreteAction>>> group_trajectories(
    const std::vector<TrajectoryLine>& lines) {
  std::vector<std::pair<std::string, std::vector<actions::DiscreteAction>>> out;
  for (const auto& l : lines) {
    if (out.empty() || out.back().first != l.question_ref) out.push_back({l.question_ref, {}});
    if (l.t != static_cast<int>(out.back().second.size()))
      throw FormatError("trajectory " + l.question_ref + " has non-consecutive steps");
    out.back().second.push_back(l.action);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Checkpoints

inline Json to_json(const learner::GruParams& p, int grid) {
  const auto names = learner::GruParams::tensor_names(p.decoder);
  Json tensors = Json::array();
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const auto& t = p.tensors[i];
    Json data = Json::array();
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) data.push_back(t(r, c));
    tensors.push_back({{"name", names[i]}, {"rows", t.rows()}, {"cols", t.cols()}, {"data", data}});
  }
  return {{"format", "mqa-gru"},   {"version", 1},
          {"input_dim", p.input_dim}, {"hidden_dim", p.hidden_dim},
          {"grid", grid},          {"decoder", learner::to_string(p.decoder)},
          {"tensors", tensors}};
}

struct Checkpoint {
  learner::GruParams params;
  int grid{learner::kDefaultGrid};
};

inline Checkpoint checkpoint_from_json(const Json& j) {
  if (j.value("format", "") != "mqa-gru" || j.value("version", 0) != 1)
    throw FormatError("unsupported checkpoint format");
  Checkpoint ck;
  ck.grid = j.at("grid").get<int>();
  const auto decoder = learner::decoder_from_string(j.at("decoder").get<std::string>());
  ck.params = learner::GruParams::zeros(j.at("input_dim").get<int>(), j.at("hidden_dim").get<int>(), decoder);
  if (ck.params.input_dim != learner::state_dim(ck.grid))
    throw FormatError("checkpoint input_dim does not match its grid size");
  const auto names = learner::GruParams::tensor_names(decoder);
  const auto& tensors = j.at("tensors");
  if (tensors.size() != names.size()) throw FormatError("checkpoint has wrong tensor count");
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& jt = tensors[i];
    auto& t = ck.params.tensors[i];
    if (jt.at("name").get<std::string>() != names[i] || jt.at("rows").get<Eigen::Index>() != t.rows() ||
        jt.at("cols").get<Eigen::Index>() != t.cols())
      throw FormatError("checkpoint tensor " + names[i] + " has the wrong shape");
    const auto& data = jt.at("data");
    if (static_cast<Eigen::Index>(data.size()) != t.size()) throw FormatError("short tensor payload");
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = data[static_cast<std::size_t>(k++)].get<double>();
  }
  return ck;
}

// ---------------------------------------------------------------------------------------------
// CSV

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string loss_curve_csv(const std::vector<learner::EpochLoss>& curve, learner::DecoderKind kind) {
  std::string out = kind == learner::DecoderKind::decoupled ? "epoch,total,loss_x,loss_y,loss_o\n"
                                                           : "epoch,total,loss_joint\n";
  for (const auto& e : curve) {
    out += std::to_string(e.epoch) + "," + fmt(e.loss.total);
    for (double h : e.loss.heads) out += "," + fmt(h);
    out += "\n";
  }
  return out;
}

inline std::string metrics_csv(const bench::MetricsReport& m) {
  std::string out = "question_type,count,precision,recall,accuracy\n";
  for (const auto& [type, v] : m.per_type)
    out += std::string(qa::to_string(type)) + "," + std::to_string(v.count) + "," + fmt(v.precision) +
           "," + fmt(v.recall) + "," + fmt(v.accuracy) + "\n";
  long total = 0;
  for (const auto& [type, v] : m.per_type) total += v.count;
  out += "ALL," + std::to_string(total) + ",,," + fmt(m.overall_accuracy) + "\n";
  if (m.imitation) out += "imitation_dis_e,,,," + fmt(m.imitation->dis_e) + "\nimitation_a_e,,,," + fmt(m.imitation->a_e) + "\n";
  return out;
}

}  // namespace mqa::io
