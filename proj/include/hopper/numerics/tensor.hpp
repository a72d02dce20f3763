// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "hopper/error.hpp"
#include "hopper/numerics/rng.hpp"

namespace hopper {

/// Dense row-major matrix; vectors are 1 x n. Every tensor in the library is
/// two dimensional, which is all the models here need.
template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
bool all_finite(const Matrix<S>& m) {
  return m.allFinite();
}

/// Glorot/Xavier uniform draw from [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
template <typename S>
Matrix<S> glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0) {
    throw Error(Errc::invalid_shape, "glorot init needs non-zero dimensions, got " +
                                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
  return m;
}

template <typename S>
Matrix<S> glorot_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  return glorot_uniform<S>(rows, cols, rng);
}

/// A named trainable (or frozen) tensor with its gradient buffer.
template <typename S>
struct Parameter {
  std::string module;
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;
  bool trainable = true;

  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Owns every parameter of a model in registration order. Addresses are stable
/// for the lifetime of the set, so modules keep raw pointers into it.
template <typename S>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter<S>& add(std::string module, std::string name, Matrix<S> init, bool trainable = true) {
    if (find(name) != nullptr) throw Error(Errc::config, "duplicate parameter name " + name);
    auto p = std::make_unique<Parameter<S>>();
    p->module = std::move(module);
    p->name = std::move(name);
    p->value = std::move(init);
    p->trainable = trainable;
    p->zero_grad();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<S>* find(std::string_view name) const {
    for (const auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  Parameter<S>& at(std::string_view name) const {
    auto* p = find(name);
    if (p == nullptr) throw Error(Errc::lookup, "no parameter named " + std::string(name));
    return *p;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t size() const { return params_.size(); }
  Parameter<S>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<S>& operator[](std::size_t i) const { return *params_[i]; }

  std::vector<Parameter<S>*> trainable() const {
    std::vector<Parameter<S>*> out;
    for (const auto& p : params_) {
      if (p->trainable) out.push_back(p.get());
    }
    return out;
  }

  std::size_t count(bool trainable_only = true) const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      if (!trainable_only || p->trainable) n += p->size();
    }
    return n;
  }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<std::unique_ptr<Parameter<S>>> params_;
};

}  // namespace hopper
