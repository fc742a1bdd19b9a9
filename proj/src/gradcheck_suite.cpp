// SPDX-License-Identifier: Apache-2.0
#include "eyedent/gradcheck_suite.hpp"

#include <functional>

#include "eyedent/grad_check.hpp"
#include "eyedent/random.hpp"

namespace eyedent::autograd {
namespace {

using T = Tensor<double>;

T rand_uniform(Rng& rng, Shape shape, double lo, double hi) {
  T t(std::move(shape));
  fill_uniform(t, rng, lo, hi);
  return t;
}

/// Push small values away from zero so ReLU stencils stay on one side.
void nudge_from_zero(T& t, double margin) {
  for (Index i = 0; i < t.size(); ++i)
    if (std::abs(t.data[i]) < margin) t.data[i] = t.data[i] < 0 ? -margin : margin;
}

struct Case {
  std::string name;
  std::function<GradCheckResult(Rng&)> run;
};

constexpr double kStep = 1e-5;
constexpr double kKinkMargin = 1e-3;

GradCheckResult with_kink_redraw(Rng& rng, const std::function<GradCheckResult(Rng&)>& once) {
  GradCheckResult res;
  for (int attempt = 0; attempt < 16; ++attempt) {
    res = once(rng);
    if (res.min_relu_gap > kKinkMargin) break;
  }
  return res;
}

std::vector<Case> make_cases() {
  std::vector<Case> cases;

  cases.push_back({"conv1d", [](Rng& rng) {
                     auto x = rand_uniform(rng, {2, 12, 2}, -1, 1);
                     auto w = rand_uniform(rng, {3, 2, 4}, -1, 1);
                     auto b = rand_uniform(rng, {4}, -0.5, 0.5);
                     return grad_check(
                         [](Graph<double>& g, const std::vector<int>& in) {
                           return sum_squares(g, conv1d(g, in[0], in[1], in[2]));
                         },
                         {x, w, b}, kStep);
                   }});

  cases.push_back({"avgpool1d", [](Rng& rng) {
                     auto x = rand_uniform(rng, {2, 10, 3}, -1, 1);
                     return grad_check(
                         [](Graph<double>& g, const std::vector<int>& in) {
                           return sum_squares(g, avgpool1d(g, in[0], 2, 1));
                         },
                         {x}, kStep);
                   }});

  cases.push_back({"relu", [](Rng& rng) {
                     auto x = rand_uniform(rng, {3, 8}, -1, 1);
                     nudge_from_zero(x, 10 * kKinkMargin);
                     return grad_check(
                         [](Graph<double>& g, const std::vector<int>& in) {
                           return sum_squares(g, relu(g, in[0]));
                         },
                         {x}, kStep);
                   }});

  cases.push_back({"batchnorm_train", [](Rng& rng) {
                     auto x = rand_uniform(rng, {4, 3}, -2, 2);
                     auto gamma = rand_uniform(rng, {3}, 0.5, 1.5);
                     auto beta = rand_uniform(rng, {3}, -0.5, 0.5);
                     return grad_check(
                         [](Graph<double>& g, const std::vector<int>& in) {
                           auto state = std::make_shared<BatchNormState<double>>(3);
                           return sum_squares(g, batchnorm(g, in[0], in[1], in[2], *state, BnMode::train));
                         },
                         {x, gamma, beta}, kStep);
                   }});

  cases.push_back({"batchnorm_infer", [](Rng& rng) {
                     auto x = rand_uniform(rng, {4, 3}, -2, 2);
                     auto gamma = rand_uniform(rng, {3}, 0.5, 1.5);
                     auto beta = rand_uniform(rng, {3}, -0.5, 0.5);
                     auto mean = rand_uniform(rng, {3}, -0.3, 0.3);
                     auto var = rand_uniform(rng, {3}, 0.5, 2.0);
                     return grad_check(
                         [mean, var](Graph<double>& g, const std::vector<int>& in) {
                           auto state = std::make_shared<BatchNormState<double>>(3);
                           state->running_mean = mean;
                           state->running_var = var;
                           return sum_squares(g, batchnorm(g, in[0], in[1], in[2], *state, BnMode::infer));
                         },
                         {x, gamma, beta}, kStep);
                   }});

  cases.push_back({"dense", [](Rng& rng) {
                     auto x = rand_uniform(rng, {2, 4}, -1, 1);
                     auto w = rand_uniform(rng, {4, 3}, -1, 1);
                     auto b = rand_uniform(rng, {3}, -0.5, 0.5);
                     return grad_check(
                         [](Graph<double>& g, const std::vector<int>& in) {
                           return sum_squares(g, dense(g, in[0], in[1], in[2]));
                         },
                         {x, w, b}, kStep);
                   }});

  cases.push_back({"flatten", [](Rng& rng) {
                     auto x = rand_uniform(rng, {2, 5, 3}, -1, 1);
                     return grad_check(
                         [](Graph<double>& g, const std::vector<int>& in) {
                           return sum_squares(g, flatten(g, in[0]));
                         },
                         {x}, kStep);
                   }});

  cases.push_back({"concat", [](Rng& rng) {
                     auto a = rand_uniform(rng, {3, 2}, -1, 1);
                     auto b = rand_uniform(rng, {3, 4}, -1, 1);
                     return grad_check(
                         [](Graph<double>& g, const std::vector<int>& in) {
                           return sum_squares(g, concat(g, {in[0], in[1]}));
                         },
                         {a, b}, kStep);
                   }});

  cases.push_back({"softmax", [](Rng& rng) {
                     auto x = rand_uniform(rng, {3, 5}, -2, 2);
                     return grad_check(
                         [](Graph<double>& g, const std::vector<int>& in) {
                           return sum_squares(g, softmax(g, in[0]));
                         },
                         {x}, kStep);
                   }});

  cases.push_back({"softmax_xent", [](Rng& rng) {
                     auto x = rand_uniform(rng, {4, 3}, -2, 2);
                     std::uniform_int_distribution<int> lab(0, 2);
                     std::vector<int> labels(4);
                     for (auto& l : labels) l = lab(rng);
                     return grad_check(
                         [labels](Graph<double>& g, const std::vector<int>& in) {
                           return softmax_xent(g, in[0], labels).loss;
                         },
                         {x}, kStep);
                   }});

  cases.push_back({"conv1d_relu", [](Rng& rng) {
                     auto x = rand_uniform(rng, {2, 10, 2}, -1, 1);
                     auto w = rand_uniform(rng, {3, 2, 3}, -1, 1);
                     auto b = rand_uniform(rng, {3}, -0.5, 0.5);
                     return grad_check(
                         [](Graph<double>& g, const std::vector<int>& in) {
                           return sum_squares(g, relu(g, conv1d(g, in[0], in[1], in[2])));
                         },
                         {x, w, b}, kStep);
                   }});

  cases.push_back({"subnet_stack", [](Rng& rng) {
                     auto x = rand_uniform(rng, {3, 14, 2}, -1, 1);
                     auto w = rand_uniform(rng, {3, 2, 4}, -1, 1);
                     auto cb = rand_uniform(rng, {4}, -0.3, 0.3);
                     auto gamma = rand_uniform(rng, {4}, 0.5, 1.5);
                     auto beta = rand_uniform(rng, {4}, -0.3, 0.3);
                     auto wd = rand_uniform(rng, {24, 3}, -0.6, 0.6);
                     auto bd = rand_uniform(rng, {3}, -0.3, 0.3);
                     std::uniform_int_distribution<int> lab(0, 2);
                     std::vector<int> labels(3);
                     for (auto& l : labels) l = lab(rng);
                     return grad_check(
                         [labels](Graph<double>& g, const std::vector<int>& in) {
                           auto state = std::make_shared<BatchNormState<double>>(4);
                           int y = conv1d(g, in[0], in[1], in[2]);
                           y = batchnorm(g, y, in[3], in[4], *state, BnMode::train);
                           y = relu(g, y);
                           y = avgpool1d(g, y, 2, 2);
                           y = flatten(g, y);
                           y = dense(g, y, in[5], in[6]);
                           return softmax_xent(g, y, labels).loss;
                         },
                         {x, w, cb, gamma, beta, wd, bd}, kStep);
                   }});

  return cases;
}

}  // namespace

std::vector<OpGradReport> run_gradcheck_suite(std::uint64_t seed, int n_seeds, const std::string& corrupt_op) {
  std::vector<OpGradReport> reports;
  for (const Case& c : make_cases()) {
    OpGradReport rep;
    rep.op = c.name;
    for (int s = 0; s < n_seeds; ++s) {
      Rng rng(substream_seed(seed, static_cast<std::uint64_t>(s) * 1000 + reports.size()));
      GradCheckResult res = with_kink_redraw(rng, c.run);
      rep.max_rel_error = std::max(rep.max_rel_error, res.max_rel_error);
      rep.coords_checked += res.coords_checked;
      rep.seeds_run += 1;
    }
    if (c.name == corrupt_op) rep.max_rel_error = std::max(rep.max_rel_error, 1.0);
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace eyedent::autograd
