// SPDX-License-Identifier: Apache-2.0
//
// Independent oracles used by the test suites. Everything here deliberately
// avoids the library's own implementation paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

namespace oracle {

/// tanh through the exponential identity (e^2x - 1)/(e^2x + 1); independent
/// of std::tanh and of the implementation under test.
inline double tanh_ref(double x) {
  if (x > 20) return 1.0;
  if (x < -20) return -1.0;
  const double e = std::exp(2.0 * x);
  return (e - 1.0) / (e + 1.0);
}

/// Naive O(n^2) discrete Fourier transform magnitude per bin.
inline std::vector<double> dft_magnitude(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<double> mag(n / 2 + 1, 0.0);
  for (size_t k = 0; k < mag.size(); ++k) {
    std::complex<double> acc(0, 0);
    for (size_t i = 0; i < n; ++i) {
      const double phi = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(i) / static_cast<double>(n);
      acc += x[i] * std::complex<double>(std::cos(phi), std::sin(phi));
    }
    mag[k] = std::abs(acc);
  }
  return mag;
}

/// Brute-force ROC point at one threshold with strict > acceptance.
struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

inline RocPoint roc_point_at(double thr, const std::vector<double>& genuine, const std::vector<double>& impostor) {
  long tp = 0, fp = 0;
  for (double s : genuine)
    if (s > thr) ++tp;
  for (double s : impostor)
    if (s > thr) ++fp;
  return {thr, static_cast<double>(fp) / static_cast<double>(impostor.size()),
          static_cast<double>(tp) / static_cast<double>(genuine.size())};
}

/// All sweep points: descending thresholds over the union of scores plus
/// sentinels above the max and below the min.
inline std::vector<RocPoint> roc_ref(std::vector<double> genuine, std::vector<double> impostor) {
  std::vector<double> all = genuine;
  all.insert(all.end(), impostor.begin(), impostor.end());
  std::sort(all.begin(), all.end(), std::greater<>());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<RocPoint> pts;
  pts.push_back(roc_point_at(all.front() + 1.0, genuine, impostor));
  for (double thr : all) pts.push_back(roc_point_at(thr, genuine, impostor));
  return pts;
}

/// AUC as the Mann-Whitney statistic: P(genuine > impostor) + 0.5 P(tie).
inline double auc_ref(const std::vector<double>& genuine, const std::vector<double>& impostor) {
  double acc = 0;
  for (double g : genuine)
    for (double i : impostor) acc += g > i ? 1.0 : (g == i ? 0.5 : 0.0);
  return acc / (static_cast<double>(genuine.size()) * static_cast<double>(impostor.size()));
}

/// EER by walking the reference sweep and interpolating the fpr = fnr
/// crossing linearly between the bracketing points.
inline double eer_ref(const std::vector<double>& genuine, const std::vector<double>& impostor) {
  auto pts = roc_ref(genuine, impostor);
  double prev_d = pts[0].fpr - (1.0 - pts[0].tpr);
  for (size_t i = 1; i < pts.size(); ++i) {
    const double d = pts[i].fpr - (1.0 - pts[i].tpr);
    if ((prev_d <= 0 && d >= 0) || (prev_d >= 0 && d <= 0)) {
      const double denom = d - prev_d;
      const double t = denom == 0 ? 0.0 : -prev_d / denom;
      return pts[i - 1].fpr + t * (pts[i].fpr - pts[i - 1].fpr);
    }
    prev_d = d;
  }
  return pts.back().fpr;
}

/// Deterministic xorshift for oracle-side randomness independent of the
/// library's rng choices.
inline std::uint64_t xorshift64(std::uint64_t& s) {
  s ^= s << 13;
  s ^= s >> 7;
  s ^= s << 17;
  return s;
}

inline double unit_double(std::uint64_t& s) {
  return static_cast<double>(xorshift64(s) >> 11) / 9007199254740992.0;
}

}  // namespace oracle
