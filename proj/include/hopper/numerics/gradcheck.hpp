// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hopper/numerics/tape.hpp"

namespace hopper {

struct GradCheckOptions {
  double epsilon = 1e-4;
  /// 0 checks every coordinate; otherwise at most this many per tensor,
  /// drawn uniformly without replacement.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Fourth-order central stencil instead of the plain two-point one.
  bool five_point = true;
};

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  GradCheckEntry worst;
  std::map<std::string, double> per_tensor;
  std::size_t coordinates = 0;
  /// Coordinates that sit on a non-differentiable point; excluded from
  /// `max_rel_error`.
  std::vector<GradCheckEntry> kinks;
  std::vector<std::string> warnings;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

template <typename S>
using LossBuilder = std::function<Var<S>(Tape<S>&)>;

/// Compares reverse-mode gradients of the scalar produced by `build` against
/// central differences, coordinate by coordinate:
///
///   err = |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
///
/// `build` must be deterministic; it is evaluated twice at the unperturbed
/// point and a mismatch raises Errc::check_invalid.
template <typename S>
GradCheckReport finite_diff_check(const LossBuilder<S>& build, const std::vector<Parameter<S>*>& params,
                                  GradCheckOptions opts = {}) {
  if (!(opts.epsilon > 0)) throw Error(Errc::config, "gradcheck epsilon must be positive");
  auto eval = [&]() -> double {
    Tape<S> tape(false);
    auto loss = build(tape);
    if (loss.value().size() != 1) throw Error(Errc::invalid_shape, "gradcheck loss is not a scalar");
    return static_cast<double>(loss.value()(0, 0));
  };

  const double f0 = eval();
  if (eval() != f0) throw Error(Errc::check_invalid, "loss differs between identical evaluations");
  if (!std::isfinite(f0)) throw Error(Errc::check_invalid, "loss is not finite");

  for (auto* p : params) p->zero_grad();
  {
    Tape<S> tape(true);
    tape.backward(build(tape));
  }

  GradCheckReport report;
  Rng rng(opts.seed);
  const double h = opts.epsilon;
  for (auto* p : params) {
    const std::size_t n = p->size();
    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (opts.max_coords_per_tensor != 0 && n > opts.max_coords_per_tensor) {
      for (std::size_t i = 0; i < opts.max_coords_per_tensor; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(opts.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    double tensor_max = 0;
    for (std::size_t idx : coords) {
      S& x = p->value.data()[idx];
      const S orig = x;
      auto at = [&](double offset) {
        x = static_cast<S>(static_cast<double>(orig) + offset);
        const double v = eval();
        x = orig;
        return v;
      };
      const double fp1 = at(h);
      const double fm1 = at(-h);
      double numeric = (fp1 - fm1) / (2 * h);
      const double fp2 = at(2 * h);
      const double fm2 = at(-2 * h);
      if (opts.five_point) numeric = (8 * (fp1 - fm1) - (fp2 - fm2)) / (12 * h);

      const double analytic = static_cast<double>(p->grad.data()[idx]);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      GradCheckEntry e{p->name, idx, analytic, numeric, std::abs(analytic - numeric) / denom};

      // A slope discontinuity makes the second difference scale like 1/h, so
      // the two step sizes disagree by about a factor of two; a smooth
      // function gives matching curvature estimates.
      const double d1 = (fp1 - 2 * f0 + fm1) / (h * h);
      const double d2 = (fp2 - 2 * f0 + fm2) / (4 * h * h);
      const double dmax = std::max(std::abs(d1), std::abs(d2));
      const bool kink = std::abs(d1 - d2) > 0.25 * dmax && h * dmax > 1e-6 * (1.0 + std::abs(f0));
      if (kink) {
        report.kinks.push_back(e);
        report.warnings.push_back("non-differentiable point at " + p->name + "[" + std::to_string(idx) + "]");
        continue;
      }
      ++report.coordinates;
      tensor_max = std::max(tensor_max, e.rel_error);
      if (e.rel_error >= report.max_rel_error) {
        report.max_rel_error = e.rel_error;
        report.worst = e;
      }
    }
    report.per_tensor[p->name] = tensor_max;
  }
  return report;
}

}  // namespace hopper
