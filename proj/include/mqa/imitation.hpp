#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "mqa/bench.hpp"
#include "mqa/learner.hpp"
#include "mqa/oracle.hpp"

namespace mqa::imitation {

/// Encoded states and targets of a demonstration, with the previous action fed back in.
inline learner::Sequence to_sequence(const oracle::Trajectory& traj, int grid = learner::kDefaultGrid) {
  learner::Sequence seq;
  std::optional<actions::DiscreteAction> last;
  for (const auto& step : traj.steps) {
    seq.states.push_back(learner::encode_state(step.observation, traj.question, last, grid));
    seq.targets.push_back(step.action);
    last = step.action;
  }
  return seq;
}

/// Policy driven by a trained model; sees only observations, the question and its own actions.
inline bench::Policy learned_policy(learner::GruParams params, int grid = learner::kDefaultGrid) {
  return [params = std::move(params), grid](const bench::EpisodeView& v) {
    std::vector<learner::VectorXd> states;
    std::optional<actions::DiscreteAction> last;
    for (std::size_t t = 0; t < v.observations.size(); ++t) {
      states.push_back(learner::encode_state(v.observations[t], v.question, last, grid));
      if (t < v.actions.size()) last = v.actions[t];
    }
    return learner::predict(params, states);
  };
}

/// Mean push-geometry error against demonstrated pushes, teacher-forced on the demo prefix.
/// Steps whose demonstrated action is STOP are skipped.
inline bench::ImitationError imitation_error(const learner::GruParams& params,
                                             const std::vector<learner::Sequence>& demos) {
  bench::ImitationError sum;
  long n = 0;
  for (const auto& d : demos) {
    const auto logits = learner::forward(params, d.states);
    for (std::size_t t = 0; t < d.targets.size(); ++t) {
      if (d.targets[t].is_stop()) continue;
      const auto e = bench::imitation_error(learner::decode_push(logits[t], params.decoder), d.targets[t]);
      sum.dis_e += e.dis_e;
      sum.a_e += e.a_e;
      ++n;
    }
  }
  if (n) {
    sum.dis_e /= static_cast<double>(n);
    sum.a_e /= static_cast<double>(n);
  }
  return sum;
}

/// Same measure for pushes drawn uniformly from the 28x28x8 grid.
inline bench::ImitationError random_baseline_error(const std::vector<learner::Sequence>& demos,
                                                   std::uint64_t seed) {
  std::mt19937_64 rng(world::splitmix64(seed));
  bench::ImitationError sum;
  long n = 0;
  for (const auto& d : demos) {
    for (const auto& target : d.targets) {
      if (target.is_stop()) continue;
      const actions::DiscreteAction guess{static_cast<int>(rng() % actions::kPositionBins),
                                          static_cast<int>(rng() % actions::kPositionBins),
                                          static_cast<int>(rng() % actions::kDirections)};
      const auto e = bench::imitation_error(guess, target);
      sum.dis_e += e.dis_e;
      sum.a_e += e.a_e;
      ++n;
    }
  }
  if (n) {
    sum.dis_e /= static_cast<double>(n);
    sum.a_e /= static_cast<double>(n);
  }
  return sum;
}

}  // namespace mqa::imitation
