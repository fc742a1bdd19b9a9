// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "eyedent/autograd.hpp"

namespace eyedent::autograd {

template <class Scalar>
struct AdamConfig {
  Scalar lr;
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
  bool amsgrad = false;
};

/// Per-parameter optimizer state. `t` counts completed steps.
template <class Scalar>
struct AdamState {
  Tensor<Scalar> m;
  Tensor<Scalar> v;
  Tensor<Scalar> vmax;  // used only with amsgrad
  long t = 0;

  explicit AdamState(const Shape& shape) : m(shape), v(shape), vmax(shape) {}
};

/// One Adam update with bias correction, reading `p.grad` in place.
template <class Scalar>
void adam_step(Parameter<Scalar>& p, AdamState<Scalar>& st, const AdamConfig<Scalar>& cfg) {
  if (p.grad.size() != p.value.size())
    throw Error(ErrorCode::shape, "adam_step: parameter '" + p.name + "' has no gradient");
  if (!p.grad.data.allFinite())
    throw Error(ErrorCode::divergence, "adam_step: non-finite gradient for parameter '" + p.name + "'");
  st.t += 1;
  const auto& g = p.grad.data;
  st.m.data = cfg.beta1 * st.m.data + (Scalar(1) - cfg.beta1) * g;
  st.v.data = cfg.beta2 * st.v.data + (Scalar(1) - cfg.beta2) * g.square();
  const Scalar c1 = Scalar(1) - std::pow(cfg.beta1, static_cast<Scalar>(st.t));
  const Scalar c2 = Scalar(1) - std::pow(cfg.beta2, static_cast<Scalar>(st.t));
  ArrayX<Scalar> mhat = st.m.data / c1;
  ArrayX<Scalar> vhat = st.v.data / c2;
  if (cfg.amsgrad) {
    st.vmax.data = st.vmax.data.max(vhat);
    p.value.data -= cfg.lr * mhat / (st.vmax.data.sqrt() + cfg.eps);
  } else {
    p.value.data -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
  }
}

}  // namespace eyedent::autograd
