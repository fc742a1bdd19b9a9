// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "eyedent/autograd.hpp"

namespace eyedent::autograd {

struct GradCheckResult {
  double max_rel_error = 0.0;
  /// Smallest |pre-activation| seen at any ReLU input during the base
  /// forward pass; callers redraw inputs when this is close to the finite
  /// difference step, since a kink inside the stencil invalidates the check.
  double min_relu_gap = std::numeric_limits<double>::infinity();
  long coords_checked = 0;
};

/// Compare reverse-mode gradients against central finite differences,
/// coordinate by coordinate, for a scalar-valued builder
///   build(Graph<double>&, const std::vector<int>& input_ids) -> scalar node.
/// Inputs are differentiated in 64-bit precision with step h. Never throws on
/// a mismatch; the caller inspects the reported maximum relative error.
template <class Builder>
GradCheckResult grad_check(Builder&& build, const std::vector<Tensor<double>>& inputs, double h = 1e-5) {
  GradCheckResult res;

  auto run = [&](const std::vector<Tensor<double>>& point, Graph<double>& g, bool with_grad) {
    std::vector<int> ids;
    ids.reserve(point.size());
    for (const auto& t : point) ids.push_back(g.variable(t, with_grad));
    int out = build(g, ids);
    return std::pair<int, std::vector<int>>(out, std::move(ids));
  };

  // Analytic pass.
  Graph<double> g;
  auto [out, ids] = run(inputs, g, true);
  g.backward(out);
  for (int rid : g.relu_input_ids())
    res.min_relu_gap = std::min(res.min_relu_gap, g.value(rid).data.abs().minCoeff());

  std::vector<Tensor<double>> point = inputs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double>& analytic = g.grad(ids[i]);
    for (Index j = 0; j < point[i].size(); ++j) {
      const double orig = point[i].data[j];
      point[i].data[j] = orig + h;
      Graph<double> gp;
      const double fp = gp.value(run(point, gp, false).first).data[0];
      point[i].data[j] = orig - h;
      Graph<double> gm;
      const double fm = gm.value(run(point, gm, false).first).data[0];
      point[i].data[j] = orig;

      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic.data[j];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      res.max_rel_error = std::max(res.max_rel_error, rel);
      res.coords_checked += 1;
    }
  }
  return res;
}

}  // namespace eyedent::autograd
