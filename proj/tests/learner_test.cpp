#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "mqa/bench.hpp"
#include "mqa/imitation.hpp"
#include "mqa/learner.hpp"
#include "support.hpp"

using namespace mqa;
using namespace mqa::learner;
using actions::DiscreteAction;
using Eigen::VectorXd;

namespace {

std::vector<Sequence> small_demo_set(int count, std::uint64_t seed) {
  bench::DatasetConfig cfg;
  cfg.n_series = 10;
  cfg.split = {8, 1, 1};
  cfg.easy_fraction = 1.0;
  cfg.master_seed = seed;
  const auto ds = bench::generate_dataset(cfg);
  const auto qs = ds.questions(ds.split.train);
  std::vector<Sequence> out;
  for (std::size_t k = 0; out.size() < static_cast<std::size_t>(count); ++k) {
    const auto* rec = qs[(k * 7) % qs.size()];
    out.push_back(imitation::to_sequence(oracle::demonstrate(ds.at(rec->series).scene, rec->question)));
  }
  return out;
}

ActionLogits biased_logits(int x, int y, int o) {
  ActionLogits l{{VectorXd::Zero(28), VectorXd::Zero(28), VectorXd::Zero(9)}};
  l.heads[0][x] = 1.0;
  l.heads[1][y] = 1.0;
  l.heads[2][o] = 1.0;
  return l;
}

}  // namespace

TEST(EncodeState, Dimensions) {
  EXPECT_EQ(state_dim(7), 1090);
  EXPECT_EQ(state_dim(4), 4 * 4 * 20 + 45 + 65);
  EXPECT_EQ(kJointClasses, 28 * 28 * 9);
}

TEST(EncodeState, EmptySceneAtStart) {
  const auto q = qa::make_existence(4);
  const auto s = encode_state(world::observe(world::Scene{}), q, std::nullopt);
  ASSERT_EQ(s.size(), 1090);
  EXPECT_EQ(s.head(visual_dim(7)).squaredNorm(), 0.0);
  EXPECT_EQ(s.tail(kActionFeatures).squaredNorm(), 0.0);
  EXPECT_EQ(s, encode_state(world::observe(world::Scene{}), q, std::nullopt));
}

TEST(EncodeState, ObjectFillingOneCoarseCell) {
  {
    const auto scene = support::scene_of({support::object(3, 0, {56, 112, 112, 168}, 0)});
    const auto s = encode_state(world::observe(scene), qa::make_existence(3), std::nullopt, 4);
    const int idx = (2 * 4 + 1) * 20 + 3;
    EXPECT_DOUBLE_EQ(s[idx], 1.0);
    EXPECT_DOUBLE_EQ(s.head(visual_dim(4)).sum(), 1.0);
  }
  {
    const auto scene = support::scene_of({support::object(3, 0, {32, 64, 64, 96}, 0)});
    const auto s = encode_state(world::observe(scene), qa::make_existence(3), std::nullopt, 7);
    const int idx = (2 * 7 + 1) * 20 + 3;
    EXPECT_DOUBLE_EQ(s[idx], 1.0);
    EXPECT_DOUBLE_EQ(s.head(visual_dim(7)).sum(), 1.0);
  }
}

TEST(EncodeState, AreaWeightedDownsampling) {
  // A 16x16 object straddles a 32-px coarse cell boundary: half in each of two cells.
  const auto scene = support::scene_of({support::object(0, 0, {24, 0, 40, 16}, 0)});
  const auto s = encode_state(world::observe(scene), qa::make_existence(0), std::nullopt, 7);
  EXPECT_DOUBLE_EQ(s[0 * 20], 128.0 / 1024.0);
  EXPECT_DOUBLE_EQ(s[1 * 20], 128.0 / 1024.0);
}

TEST(EncodeState, QuestionAndActionBlocks) {
  const auto q = qa::parse_question("Is the pen below the notebook?");
  const DiscreteAction last{5, 9, 6};
  const auto s = encode_state(world::observe(world::Scene{}), q, last);
  const int base = visual_dim(7);
  EXPECT_EQ(s[base + 2], 1.0);             // SPATIAL
  EXPECT_EQ(s[base + 3 + 3], 1.0);         // class_a notebook
  EXPECT_EQ(s[base + 23 + 2], 1.0);        // class_b pen
  EXPECT_EQ(s[base + 43], 1.0);            // above/below
  EXPECT_EQ(s.segment(base, kQuestionFeatures).sum(), 4.0);
  const int act = base + kQuestionFeatures;
  EXPECT_EQ(s[act + 5], 1.0);
  EXPECT_EQ(s[act + 28 + 9], 1.0);
  EXPECT_EQ(s[act + 56 + 6], 1.0);
  EXPECT_EQ(s.tail(kActionFeatures).sum(), 3.0);

  const auto stop = encode_state(world::observe(world::Scene{}), q, DiscreteAction::stop());
  EXPECT_EQ(stop.tail(kActionFeatures).sum(), 1.0);
  EXPECT_EQ(stop[act + 56 + 8], 1.0);
}

TEST(EncodeStateProperty, EntriesInUnitInterval) {
  support::Gen g(51);
  for (int trial = 0; trial < 20; ++trial) {
    const auto obs = world::observe(world::generate_scene(g.raw(), world::Difficulty::hard));
    for (int grid : {1, 3, 7, 9, 28}) {
      const auto s = encode_state(obs, qa::make_counting(g.integer(0, 19)), DiscreteAction{1, 2, 3}, grid);
      ASSERT_GE(s.minCoeff(), 0.0);
      ASSERT_LE(s.maxCoeff(), 1.0 + 1e-12);
    }
  }
  EXPECT_THROW(encode_state(world::Observation{}, qa::make_existence(0), std::nullopt, 0), std::invalid_argument);
}

TEST(GruStep, ZeroParameters) {
  const auto p = GruParams::zeros(5, 3);
  const VectorXd h = (VectorXd(3) << 1.0, -2.0, 0.5).finished();
  const VectorXd x = VectorXd::Ones(5);
  EXPECT_TRUE(gru_step(p, x, h).isApprox(0.5 * h));
  EXPECT_EQ(gru_step(p, x, VectorXd::Zero(3)), VectorXd::Zero(3));
}

TEST(GruStep, ShapeMismatchThrows) {
  const auto p = GruParams::zeros(5, 3);
  EXPECT_THROW(gru_step(p, VectorXd::Zero(4), VectorXd::Zero(3)), std::invalid_argument);
  EXPECT_THROW(gru_step(p, VectorXd::Zero(5), VectorXd::Zero(2)), std::invalid_argument);
}

TEST(GruStep, MatchesHandWrittenEquations) {
  const auto p = GruParams::random(3, 2, 9);
  const VectorXd x = (VectorXd(3) << 0.2, 0.7, 0.1).finished();
  const VectorXd h = (VectorXd(2) << -0.3, 0.4).finished();
  const auto& t = p.tensors;
  auto sig = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
  VectorXd expected(2);
  VectorXd r(2), z(2);
  for (int i = 0; i < 2; ++i) {
    double zi = t[kBz](i, 0), ri = t[kBr](i, 0);
    for (int j = 0; j < 3; ++j) zi += t[kWz](i, j) * x[j], ri += t[kWr](i, j) * x[j];
    for (int j = 0; j < 2; ++j) zi += t[kUz](i, j) * h[j], ri += t[kUr](i, j) * h[j];
    z[i] = sig(zi);
    r[i] = sig(ri);
  }
  for (int i = 0; i < 2; ++i) {
    double c = t[kBh](i, 0);
    for (int j = 0; j < 3; ++j) c += t[kWh](i, j) * x[j];
    for (int j = 0; j < 2; ++j) c += t[kUh](i, j) * r[j] * h[j];
    expected[i] = (1.0 - z[i]) * h[i] + z[i] * std::tanh(c);
  }
  EXPECT_TRUE(gru_step(p, x, h).isApprox(expected, 1e-14));
}

TEST(Forward, ShapesCausalityAndZeroParameters) {
  const auto p = GruParams::random(6, 4, 3);
  std::vector<VectorXd> states{VectorXd::Random(6), VectorXd::Random(6), VectorXd::Random(6)};
  ASSERT_EQ(forward(p, {states[0]}).size(), 1u);
  const auto base = forward(p, states);
  ASSERT_EQ(base.size(), 3u);
  ASSERT_EQ(base[0].heads.size(), 3u);
  EXPECT_EQ(base[0].heads[0].size(), 28);
  EXPECT_EQ(base[0].heads[2].size(), 9);
  for (int k = 0; k < 3; ++k) {
    auto changed = states;
    changed[static_cast<std::size_t>(k)] += VectorXd::Constant(6, 0.5);
    const auto out = forward(p, changed);
    for (int t = 0; t < k; ++t)
      for (std::size_t h = 0; h < 3; ++h) EXPECT_EQ(out[t].heads[h], base[t].heads[h]);
    EXPECT_NE(out[k].heads[2], base[k].heads[2]);
  }
  for (const auto& l : forward(GruParams::zeros(6, 4), states))
    for (const auto& head : l.heads) EXPECT_EQ(head.squaredNorm(), 0.0);
  EXPECT_THROW(forward(p, {}), std::invalid_argument);
}

TEST(Loss, CombineExamples) {
  EXPECT_DOUBLE_EQ(combine({1, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(combine({4, 0, 2}), 2.0);
  EXPECT_THROW(combine({1, 1}), std::invalid_argument);
}

TEST(Loss, UniformLogits) {
  ActionLogits l{{VectorXd::Zero(28), VectorXd::Zero(28), VectorXd::Zero(9)}};
  const auto r = loss({l}, {DiscreteAction{3, 4, 5}});
  EXPECT_NEAR(r.heads[0], std::log(28.0), 1e-15);
  EXPECT_NEAR(r.heads[1], std::log(28.0), 1e-15);
  EXPECT_NEAR(r.heads[2], std::log(9.0), 1e-15);
  EXPECT_NEAR(r.total, 0.5 * std::log(28.0) + 0.5 * std::log(9.0), 1e-14);
}

TEST(Loss, StopTargetMasksPositionHeads) {
  const auto l = biased_logits(3, 5, 1);
  const auto r = loss({l}, {DiscreteAction::stop()});
  EXPECT_EQ(r.heads[0], 0.0);
  EXPECT_EQ(r.heads[1], 0.0);
  EXPECT_GT(r.heads[2], 0.0);
  EXPECT_DOUBLE_EQ(r.total, 0.5 * r.heads[2]);
}

TEST(Loss, AveragesOverTimesteps) {
  ActionLogits zero{{VectorXd::Zero(28), VectorXd::Zero(28), VectorXd::Zero(9)}};
  const auto r = loss({zero, zero}, {DiscreteAction{0, 0, 0}, DiscreteAction::stop()});
  EXPECT_NEAR(r.heads[0], std::log(28.0) / 2.0, 1e-15);
  EXPECT_NEAR(r.heads[2], std::log(9.0), 1e-15);
}

TEST(Loss, Errors) {
  ActionLogits zero{{VectorXd::Zero(28), VectorXd::Zero(28), VectorXd::Zero(9)}};
  EXPECT_THROW(loss({zero}, {}), std::invalid_argument);
  EXPECT_THROW(loss({zero, zero}, {DiscreteAction::stop()}), std::invalid_argument);
  EXPECT_THROW(loss({}, {}), std::invalid_argument);
}

TEST(Loss, JointStopIsMarginalOverPositions) {
  ActionLogits zero{{VectorXd::Zero(kJointClasses)}};
  const auto push = loss({zero}, {DiscreteAction{1, 2, 3}}, DecoderKind::joint);
  EXPECT_NEAR(push.total, std::log(static_cast<double>(kJointClasses)), 1e-12);
  const auto stop = loss({zero}, {DiscreteAction::stop()}, DecoderKind::joint);
  EXPECT_NEAR(stop.total, std::log(9.0), 1e-12);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = support::random_instance(seed, 8, 4, 3);
    EXPECT_LT(support::max_relative_error(g), 1e-4) << "seed " << seed;
  }
}

TEST(Gradient, JointDecoderMatchesFiniteDifferences) {
  const auto g = support::random_instance(77, 4, 3, 3, DecoderKind::joint);
  EXPECT_LT(support::max_relative_error(g), 1e-4);
}

TEST(Predict, ArgmaxPerHead) {
  EXPECT_EQ(decode_action(biased_logits(3, 7, 2), DecoderKind::decoupled), (DiscreteAction{3, 7, 2}));
  auto tie = biased_logits(5, 7, 2);
  tie.heads[0][0] = 1.0;
  EXPECT_EQ(decode_action(tie, DecoderKind::decoupled).x_bin, 0);
  EXPECT_TRUE(decode_action(biased_logits(3, 7, 8), DecoderKind::decoupled).is_stop());
  EXPECT_EQ(decode_push(biased_logits(3, 7, 8), DecoderKind::decoupled).o_class, 0);
}

TEST(Predict, UsesLastTimestep) {
  auto p = GruParams::zeros(2, 2);
  p.tensors[kHeadBase + 1](4, 0) = 1.0;   // x bias
  p.tensors[kHeadBase + 3](6, 0) = 1.0;   // y bias
  p.tensors[kHeadBase + 5](2, 0) = 1.0;   // o bias
  EXPECT_EQ(predict(p, {VectorXd::Zero(2), VectorXd::Zero(2)}), (DiscreteAction{4, 6, 2}));
  p.tensors[kHeadBase + 5](8, 0) = 2.0;
  EXPECT_TRUE(predict(p, {VectorXd::Zero(2)}).is_stop());
}

TEST(Predict, JointDecoding) {
  ActionLogits l{{VectorXd::Zero(kJointClasses)}};
  l.heads[0][(3 * 28 + 7) * 9 + 2] = 1.0;
  EXPECT_EQ(decode_action(l, DecoderKind::joint), (DiscreteAction{3, 7, 2}));
  l.heads[0][(0 * 28 + 1) * 9 + 8] = 2.0;
  EXPECT_TRUE(decode_action(l, DecoderKind::joint).is_stop());
  EXPECT_EQ(decode_push(l, DecoderKind::joint), (DiscreteAction{3, 7, 2}));
}

TEST(Train, Errors) {
  EXPECT_THROW(train({}, TrainConfig{}), std::invalid_argument);
  Sequence bad{{VectorXd::Zero(4)}, {}};
  EXPECT_THROW(train({bad}, TrainConfig{}), std::invalid_argument);
  Sequence nan{{VectorXd::Constant(4, std::nan(""))}, {DiscreteAction::stop()}};
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.hidden = 3;
  try {
    train({nan}, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
  }
}

TEST(Train, DeterministicGivenSeed) {
  const auto demos = small_demo_set(6, 3);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.hidden = 16;
  const auto a = train(demos, cfg);
  const auto b = train(demos, cfg);
  ASSERT_EQ(a.curve.size(), 5u);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].loss.total, b.curve[i].loss.total);
    EXPECT_EQ(a.curve[i].loss.heads, b.curve[i].loss.heads);
  }
  for (std::size_t t = 0; t < a.params.tensors.size(); ++t) EXPECT_EQ(a.params.tensors[t], b.params.tensors[t]);
  cfg.seed = 1;
  EXPECT_NE(train(demos, cfg).curve.back().loss.total, a.curve.back().loss.total);
}

TEST(Train, TenDemosHalveTheLoss) {
  const auto demos = small_demo_set(10, 4);
  const auto r = train(demos, TrainConfig{});
  ASSERT_EQ(r.curve.size(), 200u);
  EXPECT_LT(r.curve.back().loss.total, 0.5 * r.curve.front().loss.total);
  EXPECT_TRUE(r.params.all_finite());
}

TEST(Train, OverfitsASingleDemonstration) {
  std::vector<Sequence> one;
  for (const auto& d : small_demo_set(40, 5))
    if (d.targets.size() >= 3) {
      one.push_back(d);
      break;
    }
  ASSERT_EQ(one.size(), 1u);
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.hidden = 16;
  const auto r = train(one, cfg);
  const auto& d = one.front();
  for (std::size_t t = 1; t <= d.states.size(); ++t) {
    const std::vector<VectorXd> prefix(d.states.begin(), d.states.begin() + static_cast<long>(t));
    const auto want = d.targets[t - 1];
    const auto got = predict(r.params, prefix);
    if (want.is_stop()) {
      EXPECT_TRUE(got.is_stop()) << "step " << t;
    } else {
      EXPECT_EQ(got, want) << "step " << t;
    }
  }
}
