// SPDX-License-Identifier: Apache-2.0
//
// Raw gaze handling: CSV ingestion with gap repair, angle-to-velocity
// conversion, the two input scalings of the dual-subnet architecture, and
// sliding-window extraction. All numeric routines are free functions
// templated on the scalar type; the pipeline instantiates float, exactness
// tests instantiate double.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eyedent/errors.hpp"

namespace eyedent::signal {

using Index = Eigen::Index;

enum class Eye { left, right, unspecified };

inline const char* to_string(Eye e) {
  switch (e) {
    case Eye::left: return "L";
    case Eye::right: return "R";
    case Eye::unspecified: return "";
  }
  return "";
}

struct GazeSample {
  double t_ms;
  double x_deg;  // yaw
  double y_deg;  // pitch
};

/// One eye, one session (or one contiguous segment of a session after gap
/// splitting). Angles in degrees, timestamps strictly increasing with nominal
/// spacing 1000/rate ms.
struct GazeRecording {
  std::vector<GazeSample> samples;
  double rate_hz = 1000.0;
  Eye eye = Eye::unspecified;
  std::string subject_id;
  std::string session_id;

  void validate() const {
    if (rate_hz <= 0) throw Error(ErrorCode::validation, "recording: rate must be positive");
    for (size_t i = 0; i < samples.size(); ++i) {
      const GazeSample& s = samples[i];
      if (!std::isfinite(s.x_deg) || !std::isfinite(s.y_deg))
        throw Error(ErrorCode::validation, "recording: non-finite angle at sample " + std::to_string(i));
      if (i > 0 && !(s.t_ms > samples[i - 1].t_ms))
        throw Error(ErrorCode::validation, "recording: timestamps not strictly increasing at sample " +
                                               std::to_string(i));
    }
  }
};

/// Angular velocity pairs in deg/s; length is one less than the recording.
template <class Scalar>
struct VelocitySequence {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 2> pairs;  // column 0: dx, column 1: dy
  double rate_hz = 1000.0;
  std::string subject_id;
  std::string session_id;
  std::string sequence_id;  // subject/session/eye/segment tag carried into window origins

  Index size() const { return pairs.rows(); }
};

/// The two tuned input-scaling knobs. Domains follow the validated search
/// space; values outside it are rejected unless the caller opted out.
struct TransformConfig {
  double c = 0.02;       // slow-branch tanh scale
  double v_min = 40.0;   // deg/s; fast-branch truncation threshold

  void validate() const {
    static constexpr double c_domain[] = {0.01, 0.02, 0.04, 0.06};
    static constexpr double v_domain[] = {10, 20, 30, 40, 60};
    auto in = [](double v, const auto& dom) {
      for (double d : dom)
        if (std::abs(v - d) < 1e-12) return true;
      return false;
    };
    if (!in(c, c_domain))
      throw Error(ErrorCode::validation, "transform: c = " + std::to_string(c) +
                                             " outside validated domain {0.01, 0.02, 0.04, 0.06}");
    if (!in(v_min, v_domain))
      throw Error(ErrorCode::validation, "transform: v_min = " + std::to_string(v_min) +
                                             " outside validated domain {10, 20, 30, 40, 60}");
  }
};

/// Per-channel normalization parameters of the fast branch.
template <class Scalar>
struct ZScoreStats {
  Scalar mean_x = 0, mean_y = 0;
  Scalar sd_x = 1, sd_y = 1;

  void validate() const {
    if (!(sd_x > 0) || !(sd_y > 0))
      throw Error(ErrorCode::statistics_undefined, "z-score statistics: standard deviation must be positive");
  }
};

template <class Scalar>
using ChannelPair = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

/// A fixed-length pair of transformed views over the same velocity samples.
template <class Scalar>
struct InputWindow {
  ChannelPair<Scalar> slow;
  ChannelPair<Scalar> fast;
  std::optional<std::string> label;  // subject id when known
  std::string sequence_id;
  Index start = 0;  // velocity-sample index of the first row
};

// ---------------------------------------------------------------------------
// Parsing

struct ParseOptions {
  double rate_hz = 1000.0;
  double max_interp_gap_ms = 50.0;  // longer non-finite runs split the recording
};

/// Parse the gaze CSV contract (header `t_ms,x_deg,y_deg[,eye]`). Non-finite
/// runs no longer than max_interp_gap_ms are linearly interpolated; longer
/// runs split the recording, so one file can yield several segments. Leading
/// and trailing non-finite runs are trimmed, and segments with fewer than two
/// samples are dropped.
std::vector<GazeRecording> parse_recording(std::istream& in, const ParseOptions& opts = {});

// ---------------------------------------------------------------------------
// Velocity conversion and transforms

/// delta_i = rate * (angle_{i+1} - angle_i), per channel, in deg/s.
template <class Scalar>
VelocitySequence<Scalar> to_velocities(const GazeRecording& rec) {
  if (rec.samples.size() < 2)
    throw Error(ErrorCode::validation, "to_velocities: recording needs at least 2 samples, has " +
                                           std::to_string(rec.samples.size()));
  VelocitySequence<Scalar> v;
  v.rate_hz = rec.rate_hz;
  v.subject_id = rec.subject_id;
  v.session_id = rec.session_id;
  const Index n = static_cast<Index>(rec.samples.size()) - 1;
  v.pairs.resize(n, 2);
  const double r = rec.rate_hz;
  for (Index i = 0; i < n; ++i) {
    const auto& a = rec.samples[static_cast<size_t>(i)];
    const auto& b = rec.samples[static_cast<size_t>(i) + 1];
    v.pairs(i, 0) = static_cast<Scalar>(r * (b.x_deg - a.x_deg));
    v.pairs(i, 1) = static_cast<Scalar>(r * (b.y_deg - a.y_deg));
  }
  return v;
}

/// Slow-branch scaling: elementwise tanh(c * delta). Odd, monotone, and
/// strictly inside (-1, 1); tremor- and drift-scale velocities stay on the
/// near-linear part while saccades saturate. tanh rounds to exactly 1 once
/// c*delta exceeds the precision's saturation point, so outputs are clamped
/// to the largest representable value below 1 to keep the open bound.
template <class Scalar>
ChannelPair<Scalar> transform_slow(const VelocitySequence<Scalar>& v, const TransformConfig& cfg) {
  cfg.validate();
  const Scalar c = static_cast<Scalar>(cfg.c);
  const Scalar bound = std::nextafter(Scalar(1), Scalar(0));
  return (v.pairs.array() * c).tanh().min(bound).max(-bound).matrix();
}

/// Fit the fast-branch z-score statistics over all training samples whose
/// speed sqrt(dx^2 + dy^2) reaches v_min. Sub-threshold samples are excluded:
/// they are all mapped to z(0) downstream and would otherwise dominate the
/// statistics. Population (biased) standard deviation.
template <class Scalar>
ZScoreStats<Scalar> fit_zscore(std::span<const VelocitySequence<Scalar>> train, const TransformConfig& cfg) {
  cfg.validate();
  double sx = 0, sy = 0, sxx = 0, syy = 0;
  long n = 0;
  for (const auto& seq : train)
    for (Index i = 0; i < seq.size(); ++i) {
      const double dx = seq.pairs(i, 0), dy = seq.pairs(i, 1);
      if (std::sqrt(dx * dx + dy * dy) < cfg.v_min) continue;
      sx += dx;
      sy += dy;
      sxx += dx * dx;
      syy += dy * dy;
      n += 1;
    }
  if (n < 2)
    throw Error(ErrorCode::statistics_undefined,
                "fit_zscore: fewer than 2 supra-threshold samples (" + std::to_string(n) + ")");
  const double mx = sx / n, my = sy / n;
  const double vx = sxx / n - mx * mx, vy = syy / n - my * my;
  if (!(vx > 0) || !(vy > 0))
    throw Error(ErrorCode::statistics_undefined, "fit_zscore: degenerate supra-threshold distribution (sd = 0)");
  ZScoreStats<Scalar> st;
  st.mean_x = static_cast<Scalar>(mx);
  st.mean_y = static_cast<Scalar>(my);
  st.sd_x = static_cast<Scalar>(std::sqrt(vx));
  st.sd_y = static_cast<Scalar>(std::sqrt(vy));
  return st;
}

/// Fast-branch scaling: samples with speed strictly below v_min are truncated
/// to (z(0), z(0)) with the respective channel statistics; the rest are
/// z-scored per channel.
template <class Scalar>
ChannelPair<Scalar> transform_fast(const VelocitySequence<Scalar>& v, const TransformConfig& cfg,
                                   const ZScoreStats<Scalar>& stats) {
  cfg.validate();
  stats.validate();
  const Scalar v_min = static_cast<Scalar>(cfg.v_min);
  const Scalar z0x = (Scalar(0) - stats.mean_x) / stats.sd_x;
  const Scalar z0y = (Scalar(0) - stats.mean_y) / stats.sd_y;
  ChannelPair<Scalar> out(v.size(), 2);
  for (Index i = 0; i < v.size(); ++i) {
    const Scalar dx = v.pairs(i, 0), dy = v.pairs(i, 1);
    if (std::sqrt(dx * dx + dy * dy) < v_min) {
      out(i, 0) = z0x;
      out(i, 1) = z0y;
    } else {
      out(i, 0) = (dx - stats.mean_x) / stats.sd_x;
      out(i, 1) = (dy - stats.mean_y) / stats.sd_y;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Windows

/// Cut aligned sliding windows from the two transformed views of one
/// sequence. Yields floor((n - length)/stride) + 1 windows when n >= length,
/// otherwise none.
template <class Scalar>
std::vector<InputWindow<Scalar>> windows(const ChannelPair<Scalar>& slow_ch, const ChannelPair<Scalar>& fast_ch,
                                         Index length, Index stride, const std::string& sequence_id = {},
                                         const std::optional<std::string>& label = std::nullopt) {
  if (length < 1 || stride < 1)
    throw Error(ErrorCode::validation, "windows: length and stride must be >= 1");
  if (slow_ch.rows() != fast_ch.rows())
    throw Error(ErrorCode::validation, "windows: slow and fast views must cover the same velocity samples");
  std::vector<InputWindow<Scalar>> out;
  const Index n = slow_ch.rows();
  if (n < length) return out;
  const Index count = (n - length) / stride + 1;
  out.reserve(static_cast<size_t>(count));
  for (Index w = 0; w < count; ++w) {
    InputWindow<Scalar> win;
    win.start = w * stride;
    win.slow = slow_ch.middleRows(win.start, length);
    win.fast = fast_ch.middleRows(win.start, length);
    win.sequence_id = sequence_id;
    win.label = label;
    out.push_back(std::move(win));
  }
  return out;
}

}  // namespace eyedent::signal
