// SPDX-License-Identifier: Apache-2.0
//
// Synthetic gaze generator: labeled recordings with per-identity oculomotor
// parameters so the full pipeline is testable end to end. Velocity profiles
// are raised cosines (smooth, analytically integrable); fixations superpose
// drift, tremor and injected microsaccades; the emitted finite-difference
// speeds respect the movement-taxonomy bounds so threshold truncation
// separates the regimes on this data.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

#include "eyedent/gaze_signal.hpp"
#include "eyedent/random.hpp"

namespace eyedent::oculosim {

using Index = Eigen::Index;
using signal::Eye;
using signal::GazeRecording;

/// One identity's oculomotor fingerprint. Domains follow the movement
/// taxonomy: microsaccades 6-30 ms at 15-120 deg/s, saccades 30-80 ms capped
/// at 500 deg/s, drift 0.1-0.4 deg/s, tremor 40-100 Hz at up to 0.3 deg/s.
struct IdentityParams {
  double fixation_duration_mean_ms = 250;
  double fixation_duration_sd_ms = 30;
  double saccade_duration_intercept_ms = 21;  // duration = intercept + slope * amplitude
  double saccade_duration_slope_ms_per_deg = 2.2;
  double saccade_peak_velocity = 450;         // deg/s cap
  double microsaccade_rate_hz = 1.5;
  double microsaccade_peak_velocity = 60;     // deg/s
  double microsaccade_duration_ms = 12;
  double drift_speed = 0.25;                  // deg/s
  double tremor_frequency_hz = 70;
  double tremor_velocity_amplitude = 0.15;    // deg/s
  double noise_sd_deg = 0.001;

  void validate() const;
};

struct ParamRange {
  double lo = 0;
  double hi = 0;
};

/// Sampling ranges for identity parameters plus the separation knob, which
/// scales the inter-identity spread around each range midpoint (1 = full
/// range, smaller values make identities more alike).
struct PopulationSpec {
  ParamRange fixation_duration_mean_ms{200, 300};
  ParamRange fixation_duration_sd_ms{15, 50};
  ParamRange saccade_duration_intercept_ms{18, 26};
  ParamRange saccade_duration_slope_ms_per_deg{1.8, 2.6};
  ParamRange saccade_peak_velocity{350, 500};
  ParamRange microsaccade_rate_hz{0.8, 2.0};
  ParamRange microsaccade_peak_velocity{20, 110};
  ParamRange microsaccade_duration_ms{8, 25};
  ParamRange drift_speed{0.1, 0.4};
  ParamRange tremor_frequency_hz{40, 100};
  ParamRange tremor_velocity_amplitude{0.05, 0.3};
  ParamRange noise_sd_deg{0.0005, 0.002};
  /// Per-saccade amplitude range shared by all identities, in degrees.
  ParamRange saccade_amplitude_deg{2, 10};
  double separation = 1.0;

  void validate() const;
};

struct SimConfig {
  double rate_hz = 1000;
  double duration_s = 10;
  int identity_count = 1;
  int sessions_per_identity = 1;
  std::uint64_t seed = 0;
  bool binocular = false;

  void validate() const;
};

/// Sample intervals of the generated signal, for bookkeeping and tests.
struct SegmentInfo {
  enum class Kind { fixation, saccade, microsaccade };
  Kind kind;
  Index start;
  Index length;
};
using ScanpathTrace = std::vector<SegmentInfo>;

using Positions = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Draw one identity, independently per parameter, within the population
/// ranges scaled by the separation knob. Same rng state, same identity.
IdentityParams sample_identity(Rng& rng, const PopulationSpec& spec);

/// Fixation segment starting at `start_pos`: drift random walk + sinusoidal
/// tremor + injected microsaccades with raised-cosine velocity profiles +
/// white measurement noise of sd p.noise_sd_deg. Microsaccade intervals are
/// appended to `trace` (offset by `trace_offset`) when given.
Positions synth_fixation_segment(const IdentityParams& p, double duration_ms, double rate_hz,
                                 Eigen::Vector2d start_pos, Rng& rng, ScanpathTrace* trace = nullptr,
                                 Index trace_offset = 0);

/// Saccade segment: raised-cosine velocity profile toward `direction`
/// (drawn uniformly when not given); duration from the identity's
/// amplitude-to-duration mapping clipped to [30, 80] ms and stretched when the
/// profile would exceed the identity's peak-velocity cap. Net displacement
/// equals the requested amplitude.
Positions synth_saccade_segment(const IdentityParams& p, double amplitude_deg, double rate_hz,
                                Eigen::Vector2d start_pos, Rng& rng,
                                const Eigen::Vector2d* direction = nullptr);

/// Alternate fixations and saccades until cfg.duration_s is covered, then add
/// white measurement noise. Pure function of (params, config, rng state).
GazeRecording simulate_scanpath(const IdentityParams& p, const SimConfig& cfg, Rng& rng,
                                ScanpathTrace* trace = nullptr);

/// As simulate_scanpath but without the measurement-noise pass; used to emit
/// synchronized binocular recordings that differ only by per-eye noise.
Positions simulate_clean_scanpath(const IdentityParams& p, double duration_s, double rate_hz, Rng& rng,
                                  ScanpathTrace* trace = nullptr);

struct RecordingMeta {
  std::string file;
  std::string subject_id;
  std::string session_id;
  Eye eye = Eye::unspecified;
  std::uint64_t seed = 0;
};

struct Dataset {
  SimConfig config;
  PopulationSpec population;
  std::vector<IdentityParams> identities;   // index-aligned with subject ids
  std::vector<GazeRecording> recordings;
  std::vector<RecordingMeta> meta;          // index-aligned with recordings
};

/// identity_count x sessions_per_identity labeled recordings (two per session
/// when binocular), each generated from an independent rng substream of
/// cfg.seed.
Dataset generate_dataset(const SimConfig& cfg, const PopulationSpec& spec);

/// Write one recording in the gaze CSV format.
void write_gaze_csv(std::ostream& out, const GazeRecording& rec);

/// Generate and write a dataset directory: one CSV per recording plus a JSON
/// manifest listing subjects, sessions, seeds and parameter vectors.
Dataset make_dataset(const SimConfig& cfg, const PopulationSpec& spec, const std::filesystem::path& dir);

}  // namespace eyedent::oculosim
