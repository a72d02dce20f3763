// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "hopper/agent/policy.hpp"

namespace hopper {

struct ReinforceConfig {
  double gamma = 1.0;
  double entropy_weight = 0.2;
  double baseline_decay = 0.95;
  double advantage_epsilon = 1e-8;
};

/// beta_k = beta_0 * decay^k.
struct EntropySchedule {
  double initial = 0.2;
  double decay = 0.99;

  double at(std::uint64_t step) const { return initial * std::pow(decay, static_cast<double>(step)); }
};

/// Discounted return minus baseline for every (question, rollout, step), then
/// normalised to zero mean and unit variance over the whole batch:
///
///   A = (G - b - mean) / (std + eps),   G_t = gamma^(T-1-t) R
///
/// Result[q] is rollouts x steps for question q.
template <typename S>
std::vector<Matrix<S>> normalized_advantages(const std::vector<std::vector<Trajectory<S>>>& batch, double gamma,
                                             double baseline, double eps = 1e-8) {
  std::vector<Matrix<S>> out;
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const auto& trajs : batch) {
    const auto steps = trajs.empty() ? 0 : static_cast<Eigen::Index>(trajs.front().steps.size());
    Matrix<S> a(static_cast<Eigen::Index>(trajs.size()), steps);
    for (std::size_t r = 0; r < trajs.size(); ++r) {
      if (static_cast<Eigen::Index>(trajs[r].steps.size()) != steps) {
        throw Error(Errc::invalid_shape, "rollouts of one question differ in length");
      }
      for (Eigen::Index t = 0; t < steps; ++t) {
        const double g = std::pow(gamma, static_cast<double>(steps - 1 - t)) * trajs[r].reward - baseline;
        a(static_cast<Eigen::Index>(r), t) = static_cast<S>(g);
        sum += g;
        ++n;
      }
    }
    out.push_back(std::move(a));
  }
  if (n == 0) return out;
  const double mean = sum / static_cast<double>(n);
  for (const auto& a : out) {
    for (Eigen::Index i = 0; i < a.size(); ++i) sq += (a.data()[i] - mean) * (a.data()[i] - mean);
  }
  const double sd = std::sqrt(sq / static_cast<double>(n));
  for (auto& a : out) a = ((a.array() - static_cast<S>(mean)) / static_cast<S>(sd + eps)).matrix();
  return out;
}

/// Surrogate loss of one question whose gradient is that question's share of
///
///   -( 1/N_r sum_{q,r,t} A log pi(a_t | s_t)  +  beta/N_s sum_{q,r,t} H_t )
///
/// where N_r counts rollouts and N_s rollout-steps over the whole batch.
template <typename S>
Var<S> reinforce_surrogate(const RolloutBatch<S>& rollouts, const Matrix<S>& advantages, double entropy_weight,
                           std::size_t batch_rollouts, std::size_t batch_steps) {
  if (rollouts.chosen_logp.empty()) throw Error(Errc::invalid_shape, "surrogate over an empty rollout batch");
  auto logp = ops::concat_cols(rollouts.chosen_logp);
  auto ent = ops::concat_cols(rollouts.entropy);
  if (logp.rows() != advantages.rows() || logp.cols() != advantages.cols()) {
    throw Error(Errc::invalid_shape, "advantages " + ops::detail::shape_str(advantages.rows(), advantages.cols()) +
                                         " vs rollouts " + ops::detail::shape_str(logp.rows(), logp.cols()));
  }
  auto pg = ops::weighted_sum(logp, Matrix<S>(advantages * static_cast<S>(-1.0 / static_cast<double>(batch_rollouts))));
  Matrix<S> w = Matrix<S>::Constant(ent.rows(), ent.cols(),
                                    static_cast<S>(-entropy_weight / static_cast<double>(batch_steps)));
  return ops::add(pg, ops::weighted_sum(ent, std::move(w)));
}

/// b <- lambda b + (1 - lambda) mean reward.
template <typename S>
double update_baseline(double baseline, const std::vector<std::vector<Trajectory<S>>>& batch, double decay) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& trajs : batch) {
    for (const auto& tr : trajs) {
      sum += tr.reward;
      ++n;
    }
  }
  if (n == 0) return baseline;
  return decay * baseline + (1.0 - decay) * sum / static_cast<double>(n);
}

/// One question's rollouts on its own tape, kept alive until backward.
template <typename S>
struct RecordedQuestion {
  std::unique_ptr<Tape<S>> tape;
  RolloutBatch<S> rollouts;
  Var<S> extra_loss;
  bool has_extra = false;
};

/// Accumulates the batch gradient of the surrogate (plus any per-question
/// extra loss) into Parameter::grad. Returns the summed surrogate value.
template <typename S>
double reinforce_gradients(std::vector<RecordedQuestion<S>>& batch, double gamma, double baseline,
                           double entropy_weight, double eps = 1e-8) {
  std::vector<std::vector<Trajectory<S>>> trajs;
  std::size_t rollouts = 0, steps = 0;
  for (const auto& q : batch) {
    trajs.push_back(q.rollouts.trajectories);
    rollouts += q.rollouts.trajectories.size();
    steps += q.rollouts.trajectories.size() * q.rollouts.chosen_logp.size();
  }
  auto adv = normalized_advantages(trajs, gamma, baseline, eps);
  double total = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto& q = batch[i];
    auto loss = reinforce_surrogate(q.rollouts, adv[i], entropy_weight, rollouts, steps);
    if (q.has_extra) loss = ops::add(loss, q.extra_loss);
    total += static_cast<double>(loss.value()(0, 0));
    q.tape->backward(loss);
  }
  return total;
}

}  // namespace hopper
