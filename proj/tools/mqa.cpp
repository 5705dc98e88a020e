// mqa: dataset generation, oracle demonstrations, GRU training, evaluation and rendering.
//
// Every option can also come from a config file (--config, TOML syntax); subcommand options
// live in a table named after the subcommand. Flags on the command line win.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mqa/pipeline.hpp"

namespace {

using namespace mqa;

void print_report(const bench::MetricsReport& r) {
  for (auto t : qa::kQuestionTypes) {
    const auto& m = r.per_type.at(t);
    std::printf("%-10s n=%-4ld acc=%.4f P=%.4f R=%.4f\n", std::string(qa::to_string(t)).c_str(), static_cast<long>(m.count), m.accuracy,
                m.precision, m.recall);
  }
  std::printf("%-10s acc=%.4f\n", "ALL", r.overall_accuracy);
  if (r.imitation) std::printf("imitation  dis_e=%.4f a_e=%.4f\n", r.imitation->dis_e, r.imitation->a_e);
}

// Checked after dispatch: the config file fills every subcommand's options, not just the one run.
void need(const std::string& path, const char* flag, bool dir) {
  namespace fs = std::filesystem;
  if (dir ? !fs::is_directory(path) : !fs::is_regular_file(path))
    throw CLI::ValidationError(flag, (dir ? "no such directory: " : "no such file: ") + path);
}

void add_policy(CLI::App* cmd, pipeline::PolicySpec& spec, std::string& checkpoint) {
  cmd->add_option("--policy", spec.name, "oracle | learned | stop")
      ->check(CLI::IsMember({"oracle", "learned", "stop"}))
      ->capture_default_str();
  cmd->add_option("--checkpoint", checkpoint, "checkpoint JSON (learned policy)");
}

void resolve_policy(pipeline::PolicySpec& spec, const std::string& checkpoint) {
  if (!checkpoint.empty()) {
    need(checkpoint, "--checkpoint", false);
    spec.checkpoint = checkpoint;
  }
  if (spec.name == "learned" && !spec.checkpoint)
    throw CLI::ValidationError("--checkpoint", "required with --policy learned");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Manipulation question answering: simulator, oracle, learner, benchmark"};
  app.set_config("--config", "", "TOML config file; command-line flags override it");
  app.require_subcommand(1);

  // gen
  bench::DatasetConfig gen_cfg;
  std::string gen_out = "data";
  auto* gen = app.add_subcommand("gen", "generate scenes and questions");
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();
  gen->add_option("--series", gen_cfg.n_series)->capture_default_str();
  gen->add_option("--questions-per-type", gen_cfg.questions_per_type)->capture_default_str();
  gen->add_option("--train", gen_cfg.split.train)->capture_default_str();
  gen->add_option("--eval", gen_cfg.split.eval)->capture_default_str();
  gen->add_option("--test", gen_cfg.split.test)->capture_default_str();
  gen->add_option("--easy-fraction", gen_cfg.easy_fraction)->capture_default_str();
  gen->add_option("--present-share", gen_cfg.present_share)->capture_default_str();
  gen->add_option("--spatial-scene-share", gen_cfg.spatial_scene_share)->capture_default_str();
  gen->add_option("--seed", gen_cfg.master_seed)->capture_default_str();

  // demo
  pipeline::DemoOptions demo_opt;
  std::string demo_data = "data", demo_out = "demos.jsonl";
  auto* demo = app.add_subcommand("demo", "record oracle trajectories for a split");
  demo->add_option("--data", demo_data)->capture_default_str();
  demo->add_option("--split", demo_opt.split)->check(CLI::IsMember({"train", "eval", "test"}))->capture_default_str();
  demo->add_option("--max-steps", demo_opt.max_steps)->check(CLI::NonNegativeNumber)->capture_default_str();
  demo->add_option("--stride", demo_opt.stride)->check(CLI::PositiveNumber)->capture_default_str();
  demo->add_option("--limit", demo_opt.limit, "0 keeps all")->check(CLI::NonNegativeNumber)->capture_default_str();
  demo->add_option("--out", demo_out)->capture_default_str();

  // train
  pipeline::TrainOptions train_opt;
  std::string train_data = "data", train_demos = "demos.jsonl", train_ckpt = "checkpoint.json",
              train_csv = "loss.csv", decoder = "decoupled";
  auto* train = app.add_subcommand("train", "train the GRU policy on demonstrations");
  train->add_option("--data", train_data)->capture_default_str();
  train->add_option("--demos", train_demos)->capture_default_str();
  train->add_option("--epochs", train_opt.config.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--lr", train_opt.config.lr)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--momentum", train_opt.config.momentum)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  train->add_option("--seed", train_opt.config.seed)->capture_default_str();
  train->add_option("--hidden", train_opt.config.hidden)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--grid", train_opt.grid)->check(CLI::Range(1, 28))->capture_default_str();
  train->add_option("--decoder", decoder)->check(CLI::IsMember({"decoupled", "joint"}))->capture_default_str();
  train->add_option("--checkpoint", train_ckpt, "output checkpoint")->capture_default_str();
  train->add_option("--loss-csv", train_csv)->capture_default_str();

  // eval
  pipeline::EvalOptions eval_opt;
  std::string eval_data = "data", eval_ckpt, eval_out = "metrics.csv";
  auto* eval = app.add_subcommand("eval", "answer a split's questions with a policy");
  eval->add_option("--data", eval_data)->capture_default_str();
  eval->add_option("--split", eval_opt.split)->check(CLI::IsMember({"train", "eval", "test"}))->capture_default_str();
  eval->add_option("--max-steps", eval_opt.max_steps)->check(CLI::NonNegativeNumber)->capture_default_str();
  eval->add_option("--out", eval_out)->capture_default_str();
  add_policy(eval, eval_opt.policy, eval_ckpt);

  // ablate
  pipeline::PolicySpec ablate_policy;
  std::string ablate_data = "data", ablate_split = "test", ablate_ckpt, ablate_out = "ablation.csv";
  std::vector<int> ablate_steps{0, 1, 5};
  auto* ablate = app.add_subcommand("ablate", "accuracy as a function of the step budget");
  ablate->add_option("--data", ablate_data)->capture_default_str();
  ablate->add_option("--split", ablate_split)->check(CLI::IsMember({"train", "eval", "test"}))->capture_default_str();
  ablate->add_option("--steps", ablate_steps)->delimiter(',')->check(CLI::NonNegativeNumber)->capture_default_str();
  ablate->add_option("--out", ablate_out)->capture_default_str();
  add_policy(ablate, ablate_policy, ablate_ckpt);

  // render
  pipeline::PolicySpec render_policy;
  std::string render_data = "data", render_ref, render_ckpt, render_out = "render";
  int render_steps = oracle::kDefaultMaxSteps;
  auto* render = app.add_subcommand("render", "SVG frames and scene graphs of one episode");
  render->add_option("--data", render_data)->capture_default_str();
  render->add_option("--question", render_ref, "question ref, e.g. s0000/q00")->required();
  render->add_option("--max-steps", render_steps)->check(CLI::NonNegativeNumber)->capture_default_str();
  render->add_option("--out", render_out)->capture_default_str();
  add_policy(render, render_policy, render_ckpt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      gen_cfg.validate();
      const auto ds = pipeline::run_gen(gen_cfg, gen_out);
      std::size_t n = 0;
      for (const auto& s : ds.series) n += s.questions.size();
      std::printf("wrote %zu series, %zu questions to %s\n", ds.series.size(), n, gen_out.c_str());
    } else if (*demo) {
      need(demo_data, "--data", true);
      const auto n = pipeline::run_demo(demo_data, demo_opt, demo_out);
      std::printf("wrote %zu trajectories to %s\n", n, demo_out.c_str());
    } else if (*train) {
      need(train_data, "--data", true);
      need(train_demos, "--demos", false);
      train_opt.config.decoder = learner::decoder_from_string(decoder);
      const auto r = pipeline::run_train(train_data, train_demos, train_opt, train_ckpt, train_csv);
      std::printf("epoch 1 loss %.6f, epoch %d loss %.6f\n", r.curve.front().loss.total,
                  r.curve.back().epoch, r.curve.back().loss.total);
      std::printf("wrote %s and %s\n", train_ckpt.c_str(), train_csv.c_str());
    } else if (*eval) {
      need(eval_data, "--data", true);
      resolve_policy(eval_opt.policy, eval_ckpt);
      print_report(pipeline::run_eval(eval_data, eval_opt, eval_out));
    } else if (*ablate) {
      need(ablate_data, "--data", true);
      resolve_policy(ablate_policy, ablate_ckpt);
      for (const auto& row : pipeline::run_ablate(ablate_data, ablate_split, ablate_policy, ablate_steps, ablate_out))
        std::printf("max_steps=%d acc=%.4f\n", row.max_steps, row.metrics.overall_accuracy);
    } else if (*render) {
      need(render_data, "--data", true);
      resolve_policy(render_policy, render_ckpt);
      const auto r = pipeline::run_render(render_data, render_ref, render_policy, render_steps, render_out);
      std::printf("%s -> %s (truth %s, %d steps%s)\n", r.question.text.c_str(),
                  qa::answer_to_string(r.question.type, r.predicted).c_str(),
                  qa::answer_to_string(r.question.type, r.truth).c_str(), r.T, r.truncated ? ", truncated" : "");
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
