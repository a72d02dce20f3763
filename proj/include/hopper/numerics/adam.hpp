// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hopper/numerics/tensor.hpp"

namespace hopper {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment buffers, one pair per parameter in registration order.
template <typename S>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Matrix<S>> first;
  std::vector<Matrix<S>> second;
};

/// Bias-corrected Adam step over `params`, using the gradients currently held
/// in `Parameter::grad`. Moment buffers are matched to `params` by position.
/// Gradients are validated before anything is touched, so a divergent step
/// leaves parameters and state unchanged.
template <typename S>
void adam_update(const std::vector<Parameter<S>*>& params, AdamState<S>& state) {
  for (const auto* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      throw Error(Errc::invalid_shape, "adam: gradient shape mismatch for " + p->name);
    }
    if (!p->grad.allFinite()) {
      throw Error(Errc::training_divergence, "adam: non-finite gradient in " + p->name);
    }
  }
  if (state.first.size() != params.size()) {
    state.first.resize(params.size());
    state.second.resize(params.size());
  }
  state.step += 1;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const S step_size = static_cast<S>(c.learning_rate / bc1);
  const S root_bc2 = static_cast<S>(std::sqrt(bc2));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = state.first[k];
    auto& v = state.second[k];
    if (m.size() == 0) {
      m.setZero(p.value.rows(), p.value.cols());
      v.setZero(p.value.rows(), p.value.cols());
    }
    m = S(c.beta1) * m + S(1.0 - c.beta1) * p.grad;
    v = S(c.beta2) * v + S(1.0 - c.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= step_size * m.array() / (v.array().sqrt() / root_bc2 + S(c.epsilon));
  }
}

/// Adam over every trainable parameter of the set.
template <typename S>
void adam_update(ParameterSet<S>& params, AdamState<S>& state) {
  adam_update(params.trainable(), state);
}

}  // namespace hopper
