// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hopper/numerics/tensor.hpp"

namespace hopper {

template <typename S>
class Tape;

/// Handle to a value recorded on a tape.
template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  std::uint32_t id = 0;

  const Matrix<S>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool needs_grad() const { return tape->needs_grad(id); }
};

/// Reverse-mode tape over matrix-valued primitives.
///
/// Each recorded node keeps its forward value and a closure that pushes the
/// node's output gradient onto its inputs. `backward` walks the nodes in exact
/// reverse order of recording; gradients for inputs used more than once are
/// summed. Parameter leaves reference the parameter's storage rather than
/// copying it, and their gradients are added into `Parameter::grad`.
///
/// A tape built with `record = false` still computes values but stores no
/// closures, which is what inference and sampling-only passes use.
template <typename S>
class Tape {
 public:
  using Mat = Matrix<S>;
  using Backward = std::function<void(Tape&, const Mat& out_grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var<S> constant(Mat v) {
    nodes_.push_back(Node{std::move(v), nullptr, nullptr, false, {}});
    return make_var();
  }

  /// Leaf bound to a parameter. Repeated calls for the same parameter return
  /// the same node so its gradient accumulates in one place.
  Var<S> param(Parameter<S>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var<S>{this, it->second};
    nodes_.push_back(Node{Mat(), &p.value, &p, record_ && p.trainable, {}});
    auto v = make_var();
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  /// Records an op output. `inputs` decide whether the node needs a gradient;
  /// `fn` is dropped when none do.
  Var<S> push(Mat value, std::initializer_list<Var<S>> inputs, Backward fn) {
    bool ng = false;
    if (record_) {
      for (const auto& in : inputs) ng = ng || nodes_[in.id].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), nullptr, nullptr, ng, ng ? std::move(fn) : Backward{}});
    return make_var();
  }

  Var<S> push(Mat value, const std::vector<Var<S>>& inputs, Backward fn) {
    bool ng = false;
    if (record_) {
      for (const auto& in : inputs) ng = ng || nodes_[in.id].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), nullptr, nullptr, ng, ng ? std::move(fn) : Backward{}});
    return make_var();
  }

  const Mat& value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.external != nullptr ? *n.external : n.value;
  }

  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }

  /// Adds `g` into the gradient slot of `v` (no-op for constants).
  template <typename Derived>
  void accumulate(Var<S> v, const Eigen::MatrixBase<Derived>& g) {
    if (!nodes_[v.id].needs_grad) return;
    Mat& slot = grads_[v.id];
    if (slot.size() == 0) {
      slot = g;
    } else {
      slot += g;
    }
  }

  /// Mutable gradient slot, zero-initialised on first touch. Used by ops that
  /// scatter into rows.
  Mat& grad_slot(Var<S> v) {
    Mat& slot = grads_[v.id];
    if (slot.size() == 0) slot.setZero(value(v.id).rows(), value(v.id).cols());
    return slot;
  }

  /// Back-propagates from a 1x1 node. Parameter gradients are accumulated,
  /// never overwritten, so several tapes can contribute to one update.
  void backward(Var<S> loss, S seed = S(1)) {
    if (loss.value().size() != 1) {
      throw Error(Errc::invalid_shape, "backward needs a scalar loss");
    }
    if (!record_) throw Error(Errc::contract_violation, "backward on a non-recording tape");
    grads_.assign(nodes_.size(), Mat());
    grads_[loss.id] = Mat::Constant(1, 1, seed);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || grads_[i].size() == 0) continue;
      if (n.param != nullptr) {
        if (n.param->grad.size() == 0) n.param->zero_grad();
        n.param->grad += grads_[i];
      } else if (n.backward) {
        Mat g = std::move(grads_[i]);
        n.backward(*this, g);
      }
      grads_[i] = Mat();
    }
    grads_.clear();
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    const Mat* external;
    Parameter<S>* param;
    bool needs_grad;
    Backward backward;
  };

  Var<S> make_var() { return Var<S>{this, static_cast<std::uint32_t>(nodes_.size() - 1)}; }

  bool record_;
  std::vector<Node> nodes_;
  std::vector<Mat> grads_;
  std::unordered_map<const Parameter<S>*, std::uint32_t> param_nodes_;
};

}  // namespace hopper
