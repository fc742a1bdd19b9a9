// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include "eyedent/tensor.hpp"

namespace eyedent {

/// SplitMix64 step, used to derive independent substream seeds from a master
/// seed without correlated low bits.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for substream `index` of stream `seed` (e.g. one per recording).
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = seed ^ (0xa0761d6478bd642full + index * 0xe7037ed1a0b428dbull);
  return splitmix64(s);
}

using Rng = std::mt19937_64;

namespace autograd {

template <class Scalar>
void fill_uniform(Tensor<Scalar>& t, Rng& rng, Scalar lo, Scalar hi) {
  std::uniform_real_distribution<Scalar> dist(lo, hi);
  for (Index i = 0; i < t.size(); ++i) t.data[i] = dist(rng);
}

template <class Scalar>
void fill_normal(Tensor<Scalar>& t, Rng& rng, Scalar mean, Scalar sd) {
  std::normal_distribution<Scalar> dist(mean, sd);
  for (Index i = 0; i < t.size(); ++i) t.data[i] = dist(rng);
}

}  // namespace autograd
}  // namespace eyedent
