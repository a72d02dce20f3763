// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hopper/agent/model.hpp"
#include "hopper/environment/environment.hpp"

namespace hopper {

/// Scores of every admissible action of every row at one step. Candidates of
/// row i occupy [offset[i], offset[i+1]) of `actions` and `logp`.
template <typename S>
struct StepScores {
  std::vector<Action> actions;
  std::vector<int> row;
  std::vector<int> offset;
  Var<S> logp;

  std::size_t count(int r) const { return static_cast<std::size_t>(offset[r + 1] - offset[r]); }
};

/// Batched stepper: one LSTM history per row, all rows at the same step t.
///
/// h_0 comes from the dummy start action. After each move the history is fed
/// [r; e] of the move, except at reset points where it is fed the dummy again
/// while the recurrent state carries on.
template <typename S>
class Walker {
 public:
  Walker(const Model<S>& model, Tape<S>& tape, const Context<S>& ctx, const SceneGraph& sg, int rows)
      : model_(&model), tape_(&tape), ctx_(ctx), sg_(&sg), rows_(rows) {
    auto zero = model.zero_state(tape, rows);
    std::tie(h_, c_) = model.lstm(tape, model.dummy(tape, rows), zero, zero);
  }

  int rows() const { return rows_; }
  Var<S> hidden() const { return h_; }

  StepScores<S> score(const std::vector<int>& entities) const {
    if (static_cast<int>(entities.size()) != rows_) throw Error(Errc::invalid_shape, "walker: one entity per row");
    StepScores<S> out;
    std::vector<int> rel, ent;
    out.offset.push_back(0);
    for (int r = 0; r < rows_; ++r) {
      auto acts = sg_->action_space(entities[r]);
      if (acts.empty()) {
        throw Error(Errc::empty_action_set, "no admissible action at " + sg_->display_name(entities[r]));
      }
      for (const auto& a : acts) {
        out.actions.push_back(a);
        out.row.push_back(r);
        rel.push_back(a.relation);
        ent.push_back(a.target);
      }
      out.offset.push_back(static_cast<int>(out.actions.size()));
    }
    auto m = model_->query(*tape_, h_, ctx_.question);
    auto scores = ops::candidate_scores(m, ctx_.relations, ctx_.entities, out.row, std::move(rel), std::move(ent));
    out.logp = ops::segment_log_softmax(scores, out.row, rows_);
    return out;
  }

  /// -sum p log p per row (rows x 1).
  Var<S> entropy(const StepScores<S>& s) const {
    auto plogp = ops::mul(ops::exp(s.logp), s.logp);
    return ops::scale(ops::segment_sum(plogp, s.row, rows_), S(-1));
  }

  /// Feeds the chosen moves into the history. `parents` reorders rows first
  /// (beam search); empty keeps them in place.
  void advance(const std::vector<Action>& moves, bool reset_point, const std::vector<int>& parents = {}) {
    if (!parents.empty()) {
      h_ = ops::gather_rows(h_, parents);
      c_ = ops::gather_rows(c_, parents);
      rows_ = static_cast<int>(parents.size());
    }
    if (static_cast<int>(moves.size()) != rows_) throw Error(Errc::invalid_shape, "walker: one move per row");
    Var<S> input;
    if (reset_point) {
      input = model_->dummy(*tape_, rows_);
    } else {
      std::vector<int> rel, ent;
      for (const auto& a : moves) {
        rel.push_back(a.relation);
        ent.push_back(a.target);
      }
      input = ops::concat_cols<S>({ops::gather_rows(ctx_.relations, rel), ops::gather_rows(ctx_.entities, ent)});
    }
    std::tie(h_, c_) = model_->lstm(*tape_, input, h_, c_);
  }

 private:
  const Model<S>* model_;
  Tape<S>* tape_;
  Context<S> ctx_;
  const SceneGraph* sg_;
  int rows_;
  Var<S> h_, c_;
};

template <typename S>
struct TrajectoryStep {
  AgentState state;
  Action action;
  S logp = 0;
  S entropy = 0;
};

template <typename S>
struct Trajectory {
  std::vector<TrajectoryStep<S>> steps;
  int final_entity = 0;
  int reward = 0;

  S logp() const {
    S acc = 0;
    for (const auto& s : steps) acc += s.logp;
    return acc;
  }
};

/// Rollouts of one question recorded on a tape: per step, the log-probability
/// of the chosen action and the policy entropy, each rows x 1.
template <typename S>
struct RolloutBatch {
  std::vector<Trajectory<S>> trajectories;
  std::vector<Var<S>> chosen_logp;
  std::vector<Var<S>> entropy;
};

/// Picks a candidate index in [0, probs.size()) for `row` at step `t`.
template <typename S>
using ActionChooser = std::function<std::size_t(int row, int t, const std::vector<S>& probs, const std::vector<Action>& acts)>;

/// Runs `rows` episodes in lockstep. Rewards are left at 0.
template <typename S>
RolloutBatch<S> run_episodes(const Model<S>& model, Tape<S>& tape, const Context<S>& ctx, const SceneGraph& sg,
                             const EpisodeSchedule& schedule, int rows, const ActionChooser<S>& choose) {
  if (rows < 1) throw Error(Errc::config, "need at least one rollout");
  Environment env(sg, schedule);
  Walker<S> walker(model, tape, ctx, sg, rows);
  RolloutBatch<S> out;
  out.trajectories.resize(static_cast<std::size_t>(rows));
  std::vector<AgentState> states(static_cast<std::size_t>(rows), env.reset());
  for (int t = 0; t < schedule.steps; ++t) {
    std::vector<int> entities;
    for (const auto& s : states) entities.push_back(s.entity);
    auto sc = walker.score(entities);
    auto ent = walker.entropy(sc);
    std::vector<int> picked;
    std::vector<Action> moves;
    for (int r = 0; r < rows; ++r) {
      const int lo = sc.offset[r], hi = sc.offset[r + 1];
      std::vector<S> probs;
      std::vector<Action> acts(sc.actions.begin() + lo, sc.actions.begin() + hi);
      for (int k = lo; k < hi; ++k) probs.push_back(std::exp(sc.logp.value()(k, 0)));
      const std::size_t j = choose(r, t, probs, acts);
      if (j >= probs.size()) throw Error(Errc::contract_violation, "chosen action index out of range");
      picked.push_back(lo + static_cast<int>(j));
      moves.push_back(acts[j]);
      out.trajectories[r].steps.push_back(
          TrajectoryStep<S>{states[r], acts[j], sc.logp.value()(lo + static_cast<int>(j), 0), ent.value()(r, 0)});
      states[r] = env.step(states[r], acts[j]);
    }
    out.chosen_logp.push_back(ops::gather_rows(sc.logp, picked));
    out.entropy.push_back(ent);
    if (t + 1 < schedule.steps) walker.advance(moves, schedule.is_reset_point(t + 1));
  }
  for (int r = 0; r < rows; ++r) out.trajectories[r].final_entity = states[r].entity;
  return out;
}

/// Inverse-CDF draw from `probs` using one uniform from `rng`.
template <typename S>
std::size_t sample_index(const std::vector<S>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += static_cast<double>(probs[i]);
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

template <typename S>
ActionChooser<S> sampling_chooser(Rng& rng) {
  return [&rng](int, int, const std::vector<S>& probs, const std::vector<Action>&) { return sample_index(probs, rng); };
}

/// Follows fixed action sequences, one per row.
template <typename S>
ActionChooser<S> replay_chooser(const std::vector<std::vector<Action>>& paths) {
  return [&paths](int r, int t, const std::vector<S>&, const std::vector<Action>& acts) {
    const Action want = paths.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(t));
    for (std::size_t i = 0; i < acts.size(); ++i) {
      if (acts[i] == want) return i;
    }
    throw Error(Errc::contract_violation, "replayed action is not admissible");
  };
}

/// Fills in terminal rewards against the gold answer.
template <typename S>
void assign_rewards(std::vector<Trajectory<S>>& trajs, const SceneGraph& sg, const std::string& gold, QuestionType type) {
  for (auto& tr : trajs) tr.reward = terminal_reward(sg, tr.final_entity, gold, type);
}

/// Samples `n` rollouts without recording gradients (dropout off).
template <typename S>
std::vector<Trajectory<S>> sample_rollouts(const Model<S>& model, const SceneGraph& sg,
                                           const std::vector<std::string>& tokens, const EpisodeSchedule& schedule,
                                           int n, Rng& rng) {
  Tape<S> tape(false);
  auto ctx = model.encode(tape, sg, tokens, false, nullptr);
  return run_episodes(model, tape, ctx, sg, schedule, n, sampling_chooser<S>(rng)).trajectories;
}

/// Probability of every admissible action after following `prefix` from the
/// hub. Probabilities are those of the full softmax over the action space.
template <typename S>
std::vector<std::pair<Action, S>> action_distribution(const Model<S>& model, const SceneGraph& sg,
                                                      const std::vector<std::string>& tokens,
                                                      const EpisodeSchedule& schedule,
                                                      const std::vector<Action>& prefix = {}) {
  Tape<S> tape(false);
  auto ctx = model.encode(tape, sg, tokens, false, nullptr);
  Environment env(sg, schedule);
  Walker<S> walker(model, tape, ctx, sg, 1);
  auto state = env.reset();
  for (const auto& a : prefix) {
    state = env.step(state, a);
    walker.advance({a}, schedule.is_reset_point(state.t));
  }
  if (env.done(state)) throw Error(Errc::episode_over, "prefix already fills the episode");
  auto sc = walker.score({state.entity});
  std::vector<std::pair<Action, S>> out;
  for (std::size_t k = 0; k < sc.actions.size(); ++k) {
    out.emplace_back(sc.actions[k], std::exp(sc.logp.value()(static_cast<Eigen::Index>(k), 0)));
  }
  return out;
}

}  // namespace hopper
