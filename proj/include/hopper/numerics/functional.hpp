// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "hopper/numerics/ops.hpp"

namespace hopper {

/// Softmax restricted to entries where `mask` is true; masked entries are
/// exactly zero. The maximum unmasked logit is subtracted first, so extreme
/// logits stay finite.
template <typename S>
std::vector<S> masked_softmax(std::span<const S> logits, const std::vector<bool>& mask) {
  if (logits.size() != mask.size()) {
    throw Error(Errc::invalid_shape, "masked_softmax: " + std::to_string(logits.size()) + " logits vs " +
                                         std::to_string(mask.size()) + " mask entries");
  }
  S mx = -std::numeric_limits<S>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) mx = std::max(mx, logits[i]);
  }
  if (mx == -std::numeric_limits<S>::infinity()) {
    throw Error(Errc::empty_action_set, "masked_softmax: every entry is masked out");
  }
  std::vector<S> out(logits.size(), S(0));
  S total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) {
      out[i] = std::exp(logits[i] - mx);
      total += out[i];
    }
  }
  for (auto& v : out) v /= total;
  return out;
}

template <typename S>
std::vector<S> masked_softmax(const std::vector<S>& logits, const std::vector<bool>& mask) {
  return masked_softmax<S>(std::span<const S>(logits), mask);
}

template <typename S>
struct LstmWeights {
  Matrix<S> w_ih;  // input x 4h
  Matrix<S> w_hh;  // h x 4h
  Matrix<S> bias;  // 1 x 4h
};

/// One LSTM recurrence on plain tensors: returns (hidden', cell').
template <typename S>
std::pair<Matrix<S>, Matrix<S>> lstm_step(const Matrix<S>& input, const Matrix<S>& hidden, const Matrix<S>& cell,
                                          const LstmWeights<S>& w) {
  Tape<S> tape(false);
  auto out = ops::lstm_cell(tape.constant(input), tape.constant(hidden), tape.constant(cell), tape.constant(w.w_ih),
                            tape.constant(w.w_hh), tape.constant(w.bias));
  const auto hid = hidden.cols();
  return {out.value().leftCols(hid), out.value().rightCols(hid)};
}

}  // namespace hopper
