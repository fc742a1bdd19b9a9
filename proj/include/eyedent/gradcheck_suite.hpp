// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace eyedent::autograd {

struct OpGradReport {
  std::string op;
  double max_rel_error = 0.0;
  long coords_checked = 0;
  int seeds_run = 0;
};

/// Finite-difference verification of every differentiable operator plus two
/// composites, each over `n_seeds` randomized small inputs at 64-bit
/// precision. Inputs that land a ReLU pre-activation inside the difference
/// stencil are redrawn from the next substream. `corrupt_op`, when non-empty,
/// injects a fault into that op's report; it exists so callers can test their
/// failure paths.
std::vector<OpGradReport> run_gradcheck_suite(std::uint64_t seed, int n_seeds = 20,
                                              const std::string& corrupt_op = {});

}  // namespace eyedent::autograd
