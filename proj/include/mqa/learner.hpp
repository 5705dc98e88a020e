#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mqa/actions.hpp"
#include "mqa/qa.hpp"
#include "mqa/world.hpp"

namespace mqa::learner {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr int kDefaultGrid = 7;
inline constexpr int kDefaultHidden = 64;
inline constexpr int kQuestionFeatures = 3 + 2 * world::kNumClasses + 2;
inline constexpr int kActionFeatures = 2 * actions::kPositionBins + actions::kDirectionClasses;
inline constexpr int kJointClasses =
    actions::kPositionBins * actions::kPositionBins * actions::kDirectionClasses;

// ---------------------------------------------------------------------------------------------
// State encoding: [G*G*20 visual occupancy | 45 question one-hots | 65 last-action one-hots]

inline int visual_dim(int grid) { return grid * grid * world::kNumClasses; }
inline int state_dim(int grid) { return visual_dim(grid) + kQuestionFeatures + kActionFeatures; }

namespace detail {

/// overlap[r][i]: pixels shared by coarse cell r (of `grid`) and native cell i.
inline std::vector<std::vector<double>> overlap_weights(int grid) {
  const double coarse = static_cast<double>(world::kBinSize) / grid;
  std::vector<std::vector<double>> w(static_cast<std::size_t>(grid),
                                     std::vector<double>(world::kGridCells, 0.0));
  for (int r = 0; r < grid; ++r) {
    for (int i = 0; i < world::kGridCells; ++i) {
      const double lo = std::max(r * coarse, static_cast<double>(i * world::kGridCellPixels));
      const double hi = std::min((r + 1) * coarse, static_cast<double>((i + 1) * world::kGridCellPixels));
      w[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] = std::max(0.0, hi - lo);
    }
  }
  return w;
}

}  // namespace detail

inline VectorXd encode_state(const world::Observation& obs, const qa::Question& q,
                             const std::optional<actions::DiscreteAction>& last,
                             int grid = kDefaultGrid) {
  if (grid <= 0 || grid > world::kBinSize) throw std::invalid_argument("encode_state: bad grid size");
  VectorXd s = VectorXd::Zero(state_dim(grid));

  const auto w = detail::overlap_weights(grid);
  const double cell_area = std::pow(static_cast<double>(world::kBinSize) / grid, 2);
  for (int r = 0; r < grid; ++r) {
    for (int c = 0; c < grid; ++c) {
      const auto& wr = w[static_cast<std::size_t>(r)];
      const auto& wc = w[static_cast<std::size_t>(c)];
      for (int i = 0; i < world::kGridCells; ++i) {
        if (wr[static_cast<std::size_t>(i)] == 0.0) continue;
        for (int j = 0; j < world::kGridCells; ++j) {
          const double weight = wr[static_cast<std::size_t>(i)] * wc[static_cast<std::size_t>(j)];
          if (weight == 0.0) continue;
          for (int k = 0; k < world::kNumClasses; ++k) {
            const float v = obs.grid(i, j, k);
            if (v != 0.0f) s[(r * grid + c) * world::kNumClasses + k] += weight * v;
          }
        }
      }
    }
  }
  s.head(visual_dim(grid)) /= cell_area;

  int off = visual_dim(grid);
  s[off + static_cast<int>(q.type)] = 1.0;
  off += 3;
  s[off + q.class_a] = 1.0;
  off += world::kNumClasses;
  if (q.class_b) s[off + *q.class_b] = 1.0;
  off += world::kNumClasses;
  if (q.relation == graph::RelationKind::above_below) s[off] = 1.0;
  if (q.relation == graph::RelationKind::nearby) s[off + 1] = 1.0;
  off += 2;
  if (last) {
    if (!last->is_stop()) {
      s[off + last->x_bin] = 1.0;
      s[off + actions::kPositionBins + last->y_bin] = 1.0;
    }
    s[off + 2 * actions::kPositionBins + last->o_class] = 1.0;
  }
  return s;
}

// ---------------------------------------------------------------------------------------------
// Parameters

/// decoupled: heads x[28], y[28], o[9]. joint: one head over all 28*28*9 actions (control model).
enum class DecoderKind { decoupled, joint };

inline std::string to_string(DecoderKind k) { return k == DecoderKind::decoupled ? "decoupled" : "joint"; }

inline DecoderKind decoder_from_string(const std::string& s) {
  if (s == "decoupled") return DecoderKind::decoupled;
  if (s == "joint") return DecoderKind::joint;
  throw std::invalid_argument("unknown decoder kind: " + s);
}

inline std::vector<int> head_sizes(DecoderKind k) {
  if (k == DecoderKind::joint) return {kJointClasses};
  return {actions::kPositionBins, actions::kPositionBins, actions::kDirectionClasses};
}

inline std::vector<double> head_weights(DecoderKind k) {
  if (k == DecoderKind::joint) return {1.0};
  return {0.25, 0.25, 0.5};
}

// Tensor slots. Gates: update (z), reset (r), candidate (h).
enum Slot : std::size_t { kWz, kWr, kWh, kUz, kUr, kUh, kBz, kBr, kBh, kHeadBase };

struct GruParams {
  int input_dim{};
  int hidden_dim{};
  DecoderKind decoder{DecoderKind::decoupled};
  std::vector<MatrixXd> tensors;  // biases are column vectors

  std::size_t head_count() const { return (tensors.size() - kHeadBase) / 2; }
  const MatrixXd& head_weight(std::size_t k) const { return tensors[kHeadBase + 2 * k]; }
  const MatrixXd& head_bias(std::size_t k) const { return tensors[kHeadBase + 2 * k + 1]; }

  static std::vector<std::string> tensor_names(DecoderKind k) {
    std::vector<std::string> names{"w_update", "w_reset", "w_candidate", "u_update", "u_reset",
                                   "u_candidate", "b_update", "b_reset", "b_candidate"};
    const std::vector<std::string> heads =
        k == DecoderKind::joint ? std::vector<std::string>{"joint"}
                                : std::vector<std::string>{"x", "y", "o"};
    for (const auto& h : heads) {
      names.push_back("head_" + h + "_weight");
      names.push_back("head_" + h + "_bias");
    }
    return names;
  }

  static GruParams zeros(int input_dim, int hidden_dim, DecoderKind decoder = DecoderKind::decoupled) {
    if (input_dim <= 0 || hidden_dim <= 0) throw std::invalid_argument("GruParams: bad dimensions");
    GruParams p{input_dim, hidden_dim, decoder, {}};
    for (int i = 0; i < 3; ++i) p.tensors.push_back(MatrixXd::Zero(hidden_dim, input_dim));
    for (int i = 0; i < 3; ++i) p.tensors.push_back(MatrixXd::Zero(hidden_dim, hidden_dim));
    for (int i = 0; i < 3; ++i) p.tensors.push_back(MatrixXd::Zero(hidden_dim, 1));
    for (int n : head_sizes(decoder)) {
      p.tensors.push_back(MatrixXd::Zero(n, hidden_dim));
      p.tensors.push_back(MatrixXd::Zero(n, 1));
    }
    return p;
  }

  /// Uniform(-1/sqrt(H), 1/sqrt(H)) entries, drawn in tensor order from one seeded stream.
  static GruParams random(int input_dim, int hidden_dim, std::uint64_t seed,
                          DecoderKind decoder = DecoderKind::decoupled) {
    GruParams p = zeros(input_dim, hidden_dim, decoder);
    std::mt19937_64 rng(world::splitmix64(seed ^ 0x6772755F696E6974ULL));
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    for (auto& t : p.tensors)
      for (Eigen::Index i = 0; i < t.size(); ++i)
        t.data()[i] = bound * (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0);
    return p;
  }

  bool all_finite() const {
    for (const auto& t : tensors)
      if (!t.allFinite()) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------------------------
// Forward pass

namespace detail {

inline VectorXd sigmoid(const VectorXd& v) {
  return v.unaryExpr([](double a) { return 1.0 / (1.0 + std::exp(-a)); });
}

struct StepCache {
  VectorXd h_prev;
  VectorXd z;
  VectorXd r;
  VectorXd cand;
  VectorXd h;
};

inline void check_input(const GruParams& p, const VectorXd& x, const VectorXd& h) {
  if (x.size() != p.input_dim || h.size() != p.hidden_dim)
    throw std::invalid_argument("gru_step: shape mismatch (x " + std::to_string(x.size()) + "/" +
                                std::to_string(p.input_dim) + ", h " + std::to_string(h.size()) +
                                "/" + std::to_string(p.hidden_dim) + ")");
}

inline StepCache step(const GruParams& p, const VectorXd& x, const VectorXd& h) {
  check_input(p, x, h);
  const auto& t = p.tensors;
  StepCache c;
  c.h_prev = h;
  c.z = sigmoid(t[kWz] * x + t[kUz] * h + t[kBz].col(0));
  c.r = sigmoid(t[kWr] * x + t[kUr] * h + t[kBr].col(0));
  c.cand = (t[kWh] * x + t[kUh] * c.r.cwiseProduct(h) + t[kBh].col(0)).array().tanh().matrix();
  c.h = (1.0 - c.z.array()).matrix().cwiseProduct(h) + c.z.cwiseProduct(c.cand);
  return c;
}

}  // namespace detail

/// h' = (1 - z) * h + z * candidate.
inline VectorXd gru_step(const GruParams& p, const VectorXd& x, const VectorXd& h) {
  return detail::step(p, x, h).h;
}

struct ActionLogits {
  std::vector<VectorXd> heads;  // decoupled: x, y, o
};

inline ActionLogits decode(const GruParams& p, const VectorXd& h) {
  ActionLogits out;
  for (std::size_t k = 0; k < p.head_count(); ++k)
    out.heads.push_back(p.head_weight(k) * h + p.head_bias(k).col(0));
  return out;
}

/// Causal: logits[t] depends on states[0..t] only.
inline std::vector<ActionLogits> forward(const GruParams& p, const std::vector<VectorXd>& states) {
  if (states.empty()) throw std::invalid_argument("forward: empty state sequence");
  std::vector<ActionLogits> out;
  VectorXd h = VectorXd::Zero(p.hidden_dim);
  for (const auto& x : states) {
    h = gru_step(p, x, h);
    out.push_back(decode(p, h));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Loss

struct LossBreakdown {
  double total{};
  std::vector<double> heads;  // decoupled: loss_x, loss_y, loss_o
};

namespace detail {

/// Classes counted as correct for head k at this target; empty means the head is masked.
inline std::vector<int> target_set(DecoderKind kind, std::size_t k, const actions::DiscreteAction& a) {
  using actions::kDirectionClasses;
  using actions::kPositionBins;
  if (kind == DecoderKind::joint) {
    if (!a.is_stop()) return {(a.x_bin * kPositionBins + a.y_bin) * kDirectionClasses + a.o_class};
    std::vector<int> all;
    for (int cell = 0; cell < kPositionBins * kPositionBins; ++cell)
      all.push_back(cell * kDirectionClasses + actions::kStopClass);
    return all;
  }
  if (k == 2) return {a.o_class};
  if (a.is_stop()) return {};
  return {k == 0 ? a.x_bin : a.y_bin};
}

inline double log_sum_exp(const VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

/// -log P(target set) and its gradient with respect to the logits.
inline double cross_entropy(const VectorXd& logits, const std::vector<int>& targets, VectorXd* grad) {
  const double lse = log_sum_exp(logits);
  const VectorXd prob = (logits.array() - lse).exp().matrix();
  double mass = 0.0;
  for (int t : targets) mass += prob[t];
  double tmax = -std::numeric_limits<double>::infinity();
  for (int t : targets) tmax = std::max(tmax, logits[t]);
  double tsum = 0.0;
  for (int t : targets) tsum += std::exp(logits[t] - tmax);
  const double loss = lse - (tmax + std::log(tsum));
  if (grad) {
    *grad = prob;
    for (int t : targets) (*grad)[t] -= prob[t] / mass;
  }
  return loss;
}

inline void check_lengths(std::size_t a, std::size_t b) {
  if (a != b)
    throw std::invalid_argument("loss: " + std::to_string(a) + " logits vs " + std::to_string(b) +
                                " targets");
  if (a == 0) throw std::invalid_argument("loss: empty sequence");
}

}  // namespace detail

/// Per-head cross-entropy averaged over timesteps; x/y terms are zero on STOP targets.
inline LossBreakdown loss(const std::vector<ActionLogits>& logits,
                          const std::vector<actions::DiscreteAction>& targets,
                          DecoderKind kind = DecoderKind::decoupled) {
  detail::check_lengths(logits.size(), targets.size());
  const auto weights = head_weights(kind);
  LossBreakdown out{0.0, std::vector<double>(weights.size(), 0.0)};
  const double steps = static_cast<double>(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      const auto set = detail::target_set(kind, k, targets[t]);
      if (set.empty()) continue;
      out.heads[k] += detail::cross_entropy(logits[t].heads.at(k), set, nullptr) / steps;
    }
  }
  for (std::size_t k = 0; k < weights.size(); ++k) out.total += weights[k] * out.heads[k];
  return out;
}

/// Weighted total from per-head losses.
inline double combine(const std::vector<double>& head_losses, DecoderKind kind = DecoderKind::decoupled) {
  const auto w = head_weights(kind);
  if (head_losses.size() != w.size()) throw std::invalid_argument("combine: wrong head count");
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) total += w[k] * head_losses[k];
  return total;
}

/// Loss plus exact gradient by backpropagation through time; `grad` takes the params' shape.
inline LossBreakdown loss_and_gradient(const GruParams& p, const std::vector<VectorXd>& states,
                                       const std::vector<actions::DiscreteAction>& targets,
                                       GruParams& grad) {
  detail::check_lengths(states.size(), targets.size());
  const auto weights = head_weights(p.decoder);
  const std::size_t T = states.size();
  const double steps = static_cast<double>(T);

  std::vector<detail::StepCache> cache;
  cache.reserve(T);
  VectorXd h = VectorXd::Zero(p.hidden_dim);
  for (const auto& x : states) {
    cache.push_back(detail::step(p, x, h));
    h = cache.back().h;
  }

  grad = GruParams::zeros(p.input_dim, p.hidden_dim, p.decoder);
  auto& g = grad.tensors;
  const auto& w = p.tensors;
  LossBreakdown out{0.0, std::vector<double>(weights.size(), 0.0)};

  VectorXd dh_next = VectorXd::Zero(p.hidden_dim);
  for (std::size_t ti = T; ti-- > 0;) {
    const auto& c = cache[ti];
    const VectorXd& x = states[ti];
    VectorXd dh = dh_next;
    const ActionLogits logits = decode(p, c.h);
    for (std::size_t k = 0; k < weights.size(); ++k) {
      const auto set = detail::target_set(p.decoder, k, targets[ti]);
      if (set.empty()) continue;
      VectorXd dlogit;
      out.heads[k] += detail::cross_entropy(logits.heads[k], set, &dlogit) / steps;
      dlogit *= weights[k] / steps;
      g[kHeadBase + 2 * k].noalias() += dlogit * c.h.transpose();
      g[kHeadBase + 2 * k + 1].col(0) += dlogit;
      dh.noalias() += p.head_weight(k).transpose() * dlogit;
    }

    const VectorXd dz = dh.cwiseProduct(c.cand - c.h_prev);
    const VectorXd dcand = dh.cwiseProduct(c.z);
    VectorXd dh_prev = dh.cwiseProduct((1.0 - c.z.array()).matrix());

    const VectorXd da_h = dcand.cwiseProduct((1.0 - c.cand.array().square()).matrix());
    const VectorXd rh = c.r.cwiseProduct(c.h_prev);
    g[kWh].noalias() += da_h * x.transpose();
    g[kUh].noalias() += da_h * rh.transpose();
    g[kBh].col(0) += da_h;
    const VectorXd drh = w[kUh].transpose() * da_h;
    const VectorXd dr = drh.cwiseProduct(c.h_prev);
    dh_prev += drh.cwiseProduct(c.r);

    const VectorXd da_z = dz.cwiseProduct(c.z.cwiseProduct((1.0 - c.z.array()).matrix()));
    g[kWz].noalias() += da_z * x.transpose();
    g[kUz].noalias() += da_z * c.h_prev.transpose();
    g[kBz].col(0) += da_z;
    dh_prev.noalias() += w[kUz].transpose() * da_z;

    const VectorXd da_r = dr.cwiseProduct(c.r.cwiseProduct((1.0 - c.r.array()).matrix()));
    g[kWr].noalias() += da_r * x.transpose();
    g[kUr].noalias() += da_r * c.h_prev.transpose();
    g[kBr].col(0) += da_r;
    dh_prev.noalias() += w[kUr].transpose() * da_r;

    dh_next = dh_prev;
  }
  for (std::size_t k = 0; k < weights.size(); ++k) out.total += weights[k] * out.heads[k];
  return out;
}

// ---------------------------------------------------------------------------------------------
// Prediction

/// First index of the maximum.
inline int argmax(const VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline actions::DiscreteAction decode_action(const ActionLogits& logits, DecoderKind kind) {
  if (kind == DecoderKind::joint) {
    const int idx = argmax(logits.heads.at(0));
    const int o = idx % actions::kDirectionClasses;
    const int cell = idx / actions::kDirectionClasses;
    if (o == actions::kStopClass) return actions::DiscreteAction::stop();
    return {cell / actions::kPositionBins, cell % actions::kPositionBins, o};
  }
  const int o = argmax(logits.heads.at(2));
  if (o == actions::kStopClass) return actions::DiscreteAction::stop();
  return {argmax(logits.heads.at(0)), argmax(logits.heads.at(1)), o};
}

/// Best push ignoring the STOP class; used to score push geometry.
inline actions::DiscreteAction decode_push(const ActionLogits& logits, DecoderKind kind) {
  if (kind == DecoderKind::joint) {
    VectorXd masked = logits.heads.at(0);
    for (int i = actions::kStopClass; i < masked.size(); i += actions::kDirectionClasses)
      masked[i] = -std::numeric_limits<double>::infinity();
    return decode_action({{masked}}, kind);
  }
  return {argmax(logits.heads.at(0)), argmax(logits.heads.at(1)),
          argmax(logits.heads.at(2).head(actions::kDirections))};
}

/// Per-head argmax on the last timestep; lowest index wins ties.
inline actions::DiscreteAction predict(const GruParams& p, const std::vector<VectorXd>& states) {
  return decode_action(forward(p, states).back(), p.decoder);
}

// ---------------------------------------------------------------------------------------------
// Training

struct Sequence {
  std::vector<VectorXd> states;
  std::vector<actions::DiscreteAction> targets;
};

struct TrainConfig {
  double lr{0.01};
  double momentum{0.9};
  int epochs{200};
  std::uint64_t seed{0};
  int hidden{kDefaultHidden};
  DecoderKind decoder{DecoderKind::decoupled};
};

struct EpochLoss {
  int epoch{};
  LossBreakdown loss;  // mean over the epoch's sequences, each taken before its update
};

struct TrainResult {
  GruParams params;
  std::vector<EpochLoss> curve;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Momentum gradient descent, one update per demonstration sequence, sequence order reshuffled
/// each epoch from the seed. Deterministic given (demos, config).
inline TrainResult train(const std::vector<Sequence>& demos, const TrainConfig& cfg) {
  if (demos.empty()) throw std::invalid_argument("train: no demonstrations");
  if (cfg.epochs <= 0 || cfg.hidden <= 0 || !(cfg.lr > 0.0))
    throw std::invalid_argument("train: bad configuration");
  const int input_dim = static_cast<int>(demos.front().states.at(0).size());
  for (const auto& d : demos)
    if (d.states.empty() || d.states.size() != d.targets.size())
      throw std::invalid_argument("train: malformed demonstration");

  TrainResult result{GruParams::random(input_dim, cfg.hidden, cfg.seed, cfg.decoder), {}};
  GruParams& p = result.params;
  GruParams velocity = GruParams::zeros(input_dim, cfg.hidden, cfg.decoder);
  GruParams grad;
  std::mt19937_64 rng(world::splitmix64(cfg.seed ^ 0x73687566666C65ULL));
  std::vector<std::size_t> order(demos.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    LossBreakdown sum{0.0, std::vector<double>(head_sizes(cfg.decoder).size(), 0.0)};
    for (std::size_t idx : order) {
      const auto l = loss_and_gradient(p, demos[idx].states, demos[idx].targets, grad);
      if (!std::isfinite(l.total)) {
        std::ostringstream msg;
        msg << "train: non-finite loss at epoch " << epoch << ", demonstration " << idx;
        throw TrainingError(msg.str());
      }
      sum.total += l.total;
      for (std::size_t k = 0; k < l.heads.size(); ++k) sum.heads[k] += l.heads[k];
      for (std::size_t t = 0; t < p.tensors.size(); ++t) {
        velocity.tensors[t] = cfg.momentum * velocity.tensors[t] - cfg.lr * grad.tensors[t];
        p.tensors[t] += velocity.tensors[t];
      }
    }
    const double n = static_cast<double>(demos.size());
    sum.total /= n;
    for (auto& v : sum.heads) v /= n;
    result.curve.push_back({epoch, sum});
  }
  return result;
}

}  // namespace mqa::learner
