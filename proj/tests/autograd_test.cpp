// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "eyedent/adam.hpp"
#include "eyedent/autograd.hpp"
#include "eyedent/grad_check.hpp"
#include "eyedent/gradcheck_suite.hpp"
#include "eyedent/random.hpp"

using namespace eyedent;
using namespace eyedent::autograd;

namespace {

Tensor<double> rand_tensor(Rng& rng, Shape shape, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(shape));
  fill_uniform(t, rng, lo, hi);
  return t;
}

}  // namespace

TEST_CASE("conv1d hand oracle: [1,2,3] * [1,0,-1] = [-2]") {
  Graph<double> g;
  int x = g.variable(Tensor<double>({1, 3, 1}, {1, 2, 3}));
  int w = g.variable(Tensor<double>({3, 1, 1}, {1, 0, -1}));
  int b = g.variable(Tensor<double>({1}, {0.0}));
  int y = conv1d(g, x, w, b);
  CHECK(g.value(y).shape == Shape{1, 1, 1});
  // 1*1 + 2*0 + 3*(-1) = -2, frozen by hand.
  CHECK(g.value(y).data[0] == doctest::Approx(-2.0));
}

TEST_CASE("conv1d with k=1 identity kernel reproduces the input") {
  Rng rng(11);
  Graph<double> g;
  Tensor<double> xt = rand_tensor(rng, {2, 7, 1});
  int x = g.variable(xt);
  int w = g.variable(Tensor<double>({1, 1, 1}, {1.0}));
  int b = g.variable(Tensor<double>({1}, {0.0}));
  int y = conv1d(g, x, w, b);
  CHECK((g.value(y).data - xt.data).abs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("conv1d output length: 1000 with k=9 gives 992") {
  Graph<float> g;
  int x = g.variable(Tensor<float>({1, 1000, 2}));
  int w = g.variable(Tensor<float>({9, 2, 4}));
  int b = g.variable(Tensor<float>({4}));
  int y = conv1d(g, x, w, b);
  CHECK(g.value(y).shape == Shape{1, 992, 4});
}

TEST_CASE("conv1d rejects inputs shorter than the kernel") {
  Graph<float> g;
  int x = g.variable(Tensor<float>({1, 4, 1}));
  int w = g.variable(Tensor<float>({5, 1, 1}));
  int b = g.variable(Tensor<float>({1}));
  CHECK_THROWS_WITH_AS(conv1d(g, x, w, b), doctest::Contains("shorter than kernel"), Error);
}

TEST_CASE("avgpool1d two-point means and length formula") {
  Graph<double> g;
  int x = g.variable(Tensor<double>({1, 3, 1}, {1, 3, 5}));
  int y = avgpool1d(g, x, 2, 1);
  CHECK(g.value(y).shape == Shape{1, 2, 1});
  CHECK(g.value(y).data[0] == doctest::Approx(2.0));
  CHECK(g.value(y).data[1] == doctest::Approx(4.0));

  Graph<double> g2;
  int c = g2.variable(Tensor<double>::constant({2, 9, 3}, 0.7));
  int p = g2.variable(Tensor<double>({1}));
  (void)p;
  int yc = avgpool1d(g2, c, 2, 1);
  CHECK((g2.value(yc).data - 0.7).abs().maxCoeff() < 1e-15);

  Graph<float> g3;
  int x3 = g3.variable(Tensor<float>({1, 992, 1}));
  CHECK(g3.value(avgpool1d(g3, x3, 2, 1)).shape == Shape{1, 991, 1});
}

TEST_CASE("batchnorm train: batch {1,3} with unit gamma maps to {-1,+1}") {
  // mean 2, population variance 1, computed by hand.
  Graph<double> g;
  int x = g.variable(Tensor<double>({2, 1}, {1, 3}));
  int gamma = g.variable(Tensor<double>({1}, {1.0}));
  int beta = g.variable(Tensor<double>({1}, {0.0}));
  BatchNormState<double> st(1);
  st.eps = 1e-12;
  int y = batchnorm(g, x, gamma, beta, st, BnMode::train);
  CHECK(g.value(y).data[0] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(g.value(y).data[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("batchnorm train: zero-mean unit-variance input is a fixed point") {
  Graph<double> g;
  int x = g.variable(Tensor<double>({2, 1}, {-1, 1}));
  int gamma = g.variable(Tensor<double>({1}, {1.0}));
  int beta = g.variable(Tensor<double>({1}, {0.0}));
  BatchNormState<double> st(1);
  st.eps = 1e-12;
  int y = batchnorm(g, x, gamma, beta, st, BnMode::train);
  CHECK(g.value(y).data[0] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(g.value(y).data[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("batchnorm infer with identity running stats is gamma*x + beta") {
  Graph<double> g;
  int x = g.variable(Tensor<double>({2, 2}, {0.5, -0.25, 2.0, 1.0}));
  int gamma = g.variable(Tensor<double>({2}, {2.0, 3.0}));
  int beta = g.variable(Tensor<double>({2}, {1.0, -1.0}));
  BatchNormState<double> st(2);  // running mean 0, running var 1
  st.eps = 0;
  int y = batchnorm(g, x, gamma, beta, st, BnMode::infer);
  CHECK(g.value(y).data[0] == doctest::Approx(2.0));
  CHECK(g.value(y).data[1] == doctest::Approx(-1.75));
  CHECK(g.value(y).data[2] == doctest::Approx(5.0));
  CHECK(g.value(y).data[3] == doctest::Approx(2.0));
}

TEST_CASE("batchnorm train rejects a batch of one") {
  Graph<double> g;
  int x = g.variable(Tensor<double>({1, 2}, {1, 2}));
  int gamma = g.variable(Tensor<double>({2}, {1, 1}));
  int beta = g.variable(Tensor<double>({2}, {0, 0}));
  BatchNormState<double> st(2);
  CHECK_THROWS_AS(batchnorm(g, x, gamma, beta, st, BnMode::train), Error);
}

TEST_CASE("batchnorm train normalizes each feature: |mean| < 1e-5, |var-1| < 1e-4") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    Graph<double> g;
    Tensor<double> xt = rand_tensor(rng, {16, 3}, -4, 4);
    int x = g.variable(xt);
    int gamma = g.variable(Tensor<double>::constant({3}, 1.0));
    int beta = g.variable(Tensor<double>({3}));
    BatchNormState<double> st(3);
    int y = batchnorm(g, x, gamma, beta, st, BnMode::train);
    auto m = g.value(y).mat(16, 3);
    for (int c = 0; c < 3; ++c) {
      const double mean = m.col(c).mean();
      const double var = (m.col(c).array() - mean).square().mean();
      CHECK(std::abs(mean) < 1e-5);
      CHECK(std::abs(var - 1.0) < 1e-4);
    }
  }
}

TEST_CASE("relu forward and subgradient at zero") {
  Graph<double> g;
  int x = g.variable(Tensor<double>({1, 4}, {-1, 2, 0, -3}), true);
  int y = relu(g, x);
  CHECK(g.value(y).data[0] == 0);
  CHECK(g.value(y).data[1] == 2);
  CHECK(g.value(y).data[2] == 0);
  CHECK(g.value(y).data[3] == 0);
  int s = mean_all(g, y);
  g.backward(s);
  CHECK(g.grad(x).data[0] == 0);       // negative: 0
  CHECK(g.grad(x).data[1] == 0.25);    // positive: 1 * upstream
  CHECK(g.grad(x).data[2] == 0);       // exactly zero: subgradient 0
}

TEST_CASE("dense hand oracle and identity") {
  Graph<double> g;
  int x = g.variable(Tensor<double>({1, 2}, {1, 2}));
  int w = g.variable(Tensor<double>({2, 1}, {1, 1}));
  int b = g.variable(Tensor<double>({1}, {1.0}));
  int y = dense(g, x, w, b);
  // 1*1 + 2*1 + 1 = 4, by hand.
  CHECK(g.value(y).data[0] == doctest::Approx(4.0));

  Graph<double> g2;
  Rng rng(3);
  Tensor<double> xt = rand_tensor(rng, {3, 4});
  Tensor<double> wt({4, 4});
  wt.mat(4, 4).setIdentity();
  int x2 = g2.variable(xt);
  int w2 = g2.variable(wt);
  int b2 = g2.variable(Tensor<double>({4}));
  CHECK((g2.value(dense(g2, x2, w2, b2)).data - xt.data).abs().maxCoeff() == doctest::Approx(0.0));

  Graph<double> g3;
  int x3 = g3.variable(rand_tensor(rng, {2, 4}));
  int w3 = g3.variable(Tensor<double>({4, 3}));
  int b3 = g3.variable(Tensor<double>({3}));
  CHECK(g3.value(dense(g3, x3, w3, b3)).data.abs().maxCoeff() == 0.0);
}

TEST_CASE("softmax_xent: symmetry, ln2 closed form, large-logit stability") {
  Graph<double> g;
  int l = g.variable(Tensor<double>({1, 2}, {0, 0}));
  auto r = softmax_xent(g, l, {0});
  CHECK(r.probs.data[0] == doctest::Approx(0.5));
  CHECK(r.probs.data[1] == doctest::Approx(0.5));
  // -ln(0.5) = ln 2, closed form.
  CHECK(g.value(r.loss).data[0] == doctest::Approx(std::log(2.0)));

  Graph<double> g2;
  int l2 = g2.variable(Tensor<double>({1, 2}, {1000, 0}));
  auto r2 = softmax_xent(g2, l2, {0});
  CHECK(std::isfinite(g2.value(r2.loss).data[0]));
  CHECK(r2.probs.data[0] == doctest::Approx(1.0));
  CHECK(r2.probs.data[1] == doctest::Approx(0.0));
}

TEST_CASE("softmax rows sum to one and cross-entropy is non-negative") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    Graph<double> g;
    Tensor<double> lt = rand_tensor(rng, {4, 6}, -30, 30);
    int l = g.variable(lt);
    auto r = softmax_xent(g, l, {0, 1, 2, 3});
    auto pm = r.probs.mat(4, 6);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(pm.row(i).sum() - 1.0) < 1e-6);
    CHECK(g.value(r.loss).data[0] >= 0.0);
  }
}

TEST_CASE("softmax_xent rejects out-of-range labels") {
  Graph<double> g;
  int l = g.variable(Tensor<double>({1, 3}, {0, 0, 0}));
  CHECK_THROWS_AS(softmax_xent(g, l, {3}), Error);
}

TEST_CASE("flatten: [1,947,256] -> [1,242432]") {
  // 947 * 256 = 242432, by hand.
  Graph<float> g;
  int x = g.variable(Tensor<float>({1, 947, 256}));
  int y = flatten(g, x);
  CHECK(g.value(y).shape == Shape{1, 242432});
}

TEST_CASE("concat shapes and single-input identity") {
  Rng rng(5);
  Graph<double> g;
  int a = g.variable(rand_tensor(rng, {3, 128}));
  int b = g.variable(rand_tensor(rng, {3, 128}));
  int y = concat(g, {a, b});
  CHECK(g.value(y).shape == Shape{3, 256});
  CHECK(concat(g, {a}) == a);

  int c = g.variable(rand_tensor(rng, {2, 128}));
  CHECK_THROWS_AS(concat(g, {a, c}), Error);
}

TEST_CASE("adam: first-step closed form, zero-gradient no-op, per-tensor statelessness") {
  AdamConfig<double> cfg;
  cfg.lr = 0.01;

  Parameter<double> p("w", Tensor<double>({2}, {1.0, -0.5}));
  p.zero_grad();
  p.grad.data.setConstant(1.0);
  AdamState<double> st(p.value.shape);
  adam_step(p, st, cfg);
  // First step with g=1: mhat = vhat = 1, so the update is lr/(1+eps).
  const double expect = 0.01 / (1.0 + 1e-8);
  CHECK(p.value.data[0] == doctest::Approx(1.0 - expect).epsilon(1e-12));
  CHECK(p.value.data[1] == doctest::Approx(-0.5 - expect).epsilon(1e-12));

  Parameter<double> q("q", Tensor<double>({3}, {1, 2, 3}));
  q.zero_grad();
  AdamState<double> st2(q.value.shape);
  adam_step(q, st2, cfg);
  CHECK(q.value.data[0] == 1.0);
  CHECK(q.value.data[1] == 2.0);
  CHECK(q.value.data[2] == 3.0);

  // Two tensors with identical gradients and state update identically.
  Parameter<double> a("a", Tensor<double>({2}, {0.3, 0.7}));
  Parameter<double> b("b", Tensor<double>({2}, {0.3, 0.7}));
  AdamState<double> sa(a.value.shape), sb(b.value.shape);
  Rng rng(21);
  for (int step = 0; step < 5; ++step) {
    Tensor<double> gr = rand_tensor(rng, {2});
    a.zero_grad();
    b.zero_grad();
    a.grad.data = gr.data;
    b.grad.data = gr.data;
    adam_step(a, sa, cfg);
    adam_step(b, sb, cfg);
  }
  CHECK((a.value.data - b.value.data).abs().maxCoeff() == 0.0);
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  AdamConfig<double> cfg;
  cfg.lr = 0.01;
  Parameter<double> p("conv3.weights", Tensor<double>({2}, {1.0, 2.0}));
  p.zero_grad();
  p.grad.data[1] = std::numeric_limits<double>::quiet_NaN();
  AdamState<double> st(p.value.shape);
  CHECK_THROWS_WITH_AS(adam_step(p, st, cfg), doctest::Contains("conv3.weights"), Error);
}

TEST_CASE("amsgrad keeps the max of second-moment estimates") {
  AdamConfig<double> cfg;
  cfg.lr = 0.1;
  cfg.amsgrad = true;
  Parameter<double> p("w", Tensor<double>({1}, {0.0}));
  AdamState<double> st(p.value.shape);
  p.zero_grad();
  p.grad.data[0] = 4.0;
  adam_step(p, st, cfg);
  const double vmax_after_big = st.vmax.data[0];
  p.zero_grad();
  p.grad.data[0] = 0.001;
  adam_step(p, st, cfg);
  CHECK(st.vmax.data[0] >= vmax_after_big);
}

TEST_CASE("gradient check: per-op and composite errors below 1e-4") {
  auto reports = run_gradcheck_suite(12345, 3);
  CHECK(reports.size() >= 10);
  for (const auto& r : reports) {
    INFO(r.op);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.coords_checked > 0);
  }
}

TEST_CASE("gradient check: constant function has zero error") {
  auto res = grad_check(
      [](Graph<double>& g, const std::vector<int>& in) {
        (void)in;
        return g.variable(Tensor<double>::scalar(3.5));
      },
      {Tensor<double>({2}, {1.0, 2.0})});
  CHECK(res.max_rel_error == 0.0);
}

TEST_CASE("gradient check suite: fault injection hook surfaces failures") {
  auto reports = run_gradcheck_suite(1, 1, "dense");
  bool found = false;
  for (const auto& r : reports)
    if (r.op == "dense") {
      found = true;
      CHECK(r.max_rel_error >= 1.0);
    }
  CHECK(found);
}

TEST_CASE("shape algebra: the nine-block stack on length 1000 ends at 947") {
  // Closed-form reduction: three k=9 blocks, four k=5, two k=3, nine size-2
  // stride-1 pools: 3*8 + 4*4 + 2*2 + 9 = 53; 1000 - 53 = 947.
  const int kernels[] = {9, 9, 9, 5, 5, 5, 5, 3, 3};
  Index closed_form = 1000;
  for (int k : kernels) closed_form -= (k - 1) + 1;
  CHECK(closed_form == 947);

  Rng rng(8);
  Graph<float> g2;
  int y = g2.variable(Tensor<float>({1, 1000, 2}));
  Index ch = 2;
  for (int k : kernels) {
    const Index f = 3;
    Tensor<float> w({k, ch, f});
    Tensor<float> b({f});
    fill_uniform(w, rng, -0.1f, 0.1f);
    int wid = g2.variable(std::move(w));
    int bid = g2.variable(std::move(b));
    y = conv1d(g2, y, wid, bid);
    y = avgpool1d(g2, y, 2, 1);
    ch = f;
  }
  CHECK(g2.value(y).dim(1) == 947);
}

TEST_CASE("property: pool-length formula matches a reference enumeration") {
  Rng rng(4242);
  std::uniform_int_distribution<Index> ln(1, 40), sz(1, 6), strd(1, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const Index L = ln(rng), size = sz(rng), stride = strd(rng);
    if (L < size) continue;
    Index count = 0;
    for (Index t = 0; t + size <= L; t += stride) ++count;
    Graph<double> g;
    int x = g.variable(Tensor<double>({1, L, 1}));
    int y = avgpool1d(g, x, size, stride);
    CHECK(g.value(y).dim(1) == count);
    CHECK(g.value(y).dim(1) == (L - size) / stride + 1);
  }
}

TEST_CASE("ops are deterministic functions of their inputs") {
  Rng rng(2024);
  Tensor<double> xt = rand_tensor(rng, {2, 20, 3});
  Tensor<double> wt = rand_tensor(rng, {5, 3, 4});
  Tensor<double> bt = rand_tensor(rng, {4});
  auto run = [&]() {
    Graph<double> g;
    int y = conv1d(g, g.variable(xt), g.variable(wt), g.variable(bt));
    y = relu(g, y);
    y = avgpool1d(g, y, 2, 1);
    return Tensor<double>(g.value(y));
  };
  Tensor<double> a = run();
  Tensor<double> b = run();
  CHECK((a.data - b.data).abs().maxCoeff() == 0.0);
}
