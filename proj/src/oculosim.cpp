// SPDX-License-Identifier: Apache-2.0
#include "eyedent/oculosim.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace eyedent::oculosim {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(ErrorCode::validation, msg);
}

double draw_in_range(Rng& rng, const ParamRange& r, double separation) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double mid = 0.5 * (r.lo + r.hi);
  const double v = mid + (u(rng) - 0.5) * (r.hi - r.lo) * separation;
  return std::clamp(v, r.lo, r.hi);
}

void check_range(const ParamRange& r, double dom_lo, double dom_hi, const char* name) {
  require(r.lo <= r.hi, std::string("population spec: ") + name + " range is inverted");
  require(r.lo >= dom_lo && r.hi <= dom_hi,
          std::string("population spec: ") + name + " range escapes its domain");
}

/// Smooth displacement fraction of a raised-cosine velocity profile:
/// s(0) = 0, s(1) = 1, s'(u) = 1 - cos(2*pi*u).
double raised_cosine_s(double u) { return u - std::sin(kTwoPi * u) / kTwoPi; }

}  // namespace

void IdentityParams::validate() const {
  require(fixation_duration_mean_ms >= 150 && fixation_duration_mean_ms <= 400,
          "identity: fixation duration mean outside [150,400] ms");
  require(fixation_duration_sd_ms >= 0, "identity: fixation duration sd negative");
  require(saccade_duration_intercept_ms >= 10 && saccade_duration_intercept_ms <= 30,
          "identity: saccade duration intercept outside [10,30] ms");
  require(saccade_duration_slope_ms_per_deg >= 1 && saccade_duration_slope_ms_per_deg <= 3,
          "identity: saccade duration slope outside [1,3] ms/deg");
  require(saccade_peak_velocity > 0 && saccade_peak_velocity <= 500,
          "identity: saccade peak velocity outside (0,500] deg/s");
  require(microsaccade_rate_hz >= 0 && microsaccade_rate_hz <= 3, "identity: microsaccade rate outside [0,3] Hz");
  require(microsaccade_peak_velocity >= 15 && microsaccade_peak_velocity <= 120,
          "identity: microsaccade peak velocity outside [15,120] deg/s");
  require(microsaccade_duration_ms >= 6 && microsaccade_duration_ms <= 30,
          "identity: microsaccade duration outside [6,30] ms");
  require(drift_speed >= 0.1 && drift_speed <= 0.4, "identity: drift speed outside [0.1,0.4] deg/s");
  require(tremor_frequency_hz >= 40 && tremor_frequency_hz <= 100,
          "identity: tremor frequency outside [40,100] Hz");
  require(tremor_velocity_amplitude >= 0 && tremor_velocity_amplitude <= 0.3,
          "identity: tremor velocity amplitude outside [0,0.3] deg/s");
  require(noise_sd_deg >= 0 && noise_sd_deg <= 0.005, "identity: noise sd outside [0,0.005] deg");
}

void PopulationSpec::validate() const {
  check_range(fixation_duration_mean_ms, 150, 400, "fixation_duration_mean_ms");
  check_range(fixation_duration_sd_ms, 0, 100, "fixation_duration_sd_ms");
  check_range(saccade_duration_intercept_ms, 10, 30, "saccade_duration_intercept_ms");
  check_range(saccade_duration_slope_ms_per_deg, 1, 3, "saccade_duration_slope_ms_per_deg");
  check_range(saccade_peak_velocity, 40, 500, "saccade_peak_velocity");
  check_range(microsaccade_rate_hz, 0, 3, "microsaccade_rate_hz");
  check_range(microsaccade_peak_velocity, 15, 120, "microsaccade_peak_velocity");
  check_range(microsaccade_duration_ms, 6, 30, "microsaccade_duration_ms");
  check_range(drift_speed, 0.1, 0.4, "drift_speed");
  check_range(tremor_frequency_hz, 40, 100, "tremor_frequency_hz");
  check_range(tremor_velocity_amplitude, 0, 0.3, "tremor_velocity_amplitude");
  check_range(noise_sd_deg, 0, 0.005, "noise_sd_deg");
  require(separation > 0 && separation <= 1, "population spec: separation must lie in (0,1]");
  // Keep saccades fast enough to clear the truncation threshold and slow
  // enough that an 80 ms profile stays under every identity's velocity cap.
  require(saccade_amplitude_deg.lo >= 1.6, "population spec: saccade amplitudes below 1.6 deg fall under 40 deg/s");
  require(saccade_amplitude_deg.hi <= 0.04 * saccade_peak_velocity.lo,
          "population spec: max saccade amplitude infeasible for the slowest peak-velocity cap");
}

void SimConfig::validate() const {
  require(rate_hz > 0, "sim config: rate must be positive");
  require(duration_s > 1, "sim config: duration must exceed 1 s");
  require(identity_count >= 1 && sessions_per_identity >= 1, "sim config: counts must be >= 1");
}

IdentityParams sample_identity(Rng& rng, const PopulationSpec& spec) {
  spec.validate();
  IdentityParams p;
  p.fixation_duration_mean_ms = draw_in_range(rng, spec.fixation_duration_mean_ms, spec.separation);
  p.fixation_duration_sd_ms = draw_in_range(rng, spec.fixation_duration_sd_ms, spec.separation);
  p.saccade_duration_intercept_ms = draw_in_range(rng, spec.saccade_duration_intercept_ms, spec.separation);
  p.saccade_duration_slope_ms_per_deg = draw_in_range(rng, spec.saccade_duration_slope_ms_per_deg, spec.separation);
  p.saccade_peak_velocity = draw_in_range(rng, spec.saccade_peak_velocity, spec.separation);
  p.microsaccade_rate_hz = draw_in_range(rng, spec.microsaccade_rate_hz, spec.separation);
  p.microsaccade_peak_velocity = draw_in_range(rng, spec.microsaccade_peak_velocity, spec.separation);
  p.microsaccade_duration_ms = draw_in_range(rng, spec.microsaccade_duration_ms, spec.separation);
  p.drift_speed = draw_in_range(rng, spec.drift_speed, spec.separation);
  p.tremor_frequency_hz = draw_in_range(rng, spec.tremor_frequency_hz, spec.separation);
  p.tremor_velocity_amplitude = draw_in_range(rng, spec.tremor_velocity_amplitude, spec.separation);
  p.noise_sd_deg = draw_in_range(rng, spec.noise_sd_deg, spec.separation);
  p.validate();
  return p;
}

Positions synth_fixation_segment(const IdentityParams& p, double duration_ms, double rate_hz,
                                 Eigen::Vector2d start_pos, Rng& rng, ScanpathTrace* trace,
                                 Index trace_offset) {
  require(duration_ms > 0, "fixation segment: duration must be positive");
  require(rate_hz > 0, "fixation segment: rate must be positive");
  const double dt_s = 1.0 / rate_hz;
  const Index n = std::max<Index>(1, static_cast<Index>(std::llround(duration_ms * rate_hz / 1000.0)));
  Positions pos(n, 2);

  std::uniform_real_distribution<double> uangle(0.0, kTwoPi);
  std::normal_distribution<double> heading_step(0.0, 0.1);

  // Drift: constant-speed random walk with slowly wandering heading.
  double heading = uangle(rng);
  Eigen::Vector2d cur = start_pos;
  for (Index i = 0; i < n; ++i) {
    heading += heading_step(rng);
    cur.x() += p.drift_speed * dt_s * std::cos(heading);
    cur.y() += p.drift_speed * dt_s * std::sin(heading);
    pos(i, 0) = cur.x();
    pos(i, 1) = cur.y();
  }

  // Tremor: one sinusoid per channel at the identity's frequency; the
  // position amplitude is chosen so the velocity amplitude matches.
  if (p.tremor_velocity_amplitude > 0 && p.tremor_frequency_hz > 0) {
    const double amp = p.tremor_velocity_amplitude / (kTwoPi * p.tremor_frequency_hz);
    const double phase_x = uangle(rng);
    const double phase_y = uangle(rng);
    for (Index i = 0; i < n; ++i) {
      const double t = static_cast<double>(i + 1) * dt_s;
      pos(i, 0) += amp * std::sin(kTwoPi * p.tremor_frequency_hz * t + phase_x);
      pos(i, 1) += amp * std::sin(kTwoPi * p.tremor_frequency_hz * t + phase_y);
    }
  }

  // Microsaccades: Poisson arrivals, raised-cosine profile, biased back
  // toward the fixation start once gaze has wandered off.
  if (p.microsaccade_rate_hz > 0) {
    std::exponential_distribution<double> gap_s(p.microsaccade_rate_hz);
    std::uniform_real_distribution<double> jitter(-0.15, 0.15);
    std::normal_distribution<double> dir_noise(0.0, 0.3);
    double t_event = gap_s(rng);
    while (true) {
      Index start = static_cast<Index>(std::llround(t_event * rate_hz));
      const double dur_ms = std::clamp(p.microsaccade_duration_ms * (1.0 + jitter(rng)), 6.0, 30.0);
      const Index ne = std::max<Index>(2, static_cast<Index>(std::llround(dur_ms * rate_hz / 1000.0)));
      if (start + ne + 2 >= n) break;
      const double peak = std::clamp(p.microsaccade_peak_velocity * (1.0 + jitter(rng)), 15.0, 118.0);
      const double amplitude = peak * (static_cast<double>(ne) * dt_s) / 2.0;

      Eigen::Vector2d here(pos(start, 0), pos(start, 1));
      Eigen::Vector2d off = here - start_pos;
      double theta;
      if (off.norm() > 0.5) theta = std::atan2(-off.y(), -off.x()) + dir_noise(rng);
      else theta = uangle(rng);
      const Eigen::Vector2d step = amplitude * Eigen::Vector2d(std::cos(theta), std::sin(theta));

      for (Index i = start; i < n; ++i) {
        const double u = std::min(1.0, static_cast<double>(i - start + 1) / static_cast<double>(ne));
        pos(i, 0) += step.x() * raised_cosine_s(u);
        pos(i, 1) += step.y() * raised_cosine_s(u);
      }
      if (trace) trace->push_back({SegmentInfo::Kind::microsaccade, trace_offset + start, ne});
      t_event += static_cast<double>(ne) * dt_s + gap_s(rng);
    }
  }

  if (p.noise_sd_deg > 0) {
    std::normal_distribution<double> noise(0.0, p.noise_sd_deg);
    for (Index i = 0; i < n; ++i) {
      pos(i, 0) += noise(rng);
      pos(i, 1) += noise(rng);
    }
  }
  return pos;
}

Positions synth_saccade_segment(const IdentityParams& p, double amplitude_deg, double rate_hz,
                                Eigen::Vector2d start_pos, Rng& rng, const Eigen::Vector2d* direction) {
  require(amplitude_deg >= 0, "saccade segment: amplitude must be non-negative");
  require(rate_hz > 0, "saccade segment: rate must be positive");
  if (amplitude_deg == 0) return Positions(0, 2);

  Eigen::Vector2d dir;
  if (direction) dir = direction->normalized();
  else {
    std::uniform_real_distribution<double> uangle(0.0, kTwoPi);
    const double theta = uangle(rng);
    dir = Eigen::Vector2d(std::cos(theta), std::sin(theta));
  }

  double dur_ms = p.saccade_duration_intercept_ms + p.saccade_duration_slope_ms_per_deg * amplitude_deg;
  dur_ms = std::clamp(dur_ms, 30.0, 80.0);
  // Stretch within the 80 ms bound when the profile would exceed the cap.
  dur_ms = std::min(80.0, std::max(dur_ms, 2000.0 * amplitude_deg / p.saccade_peak_velocity));

  const Index n = std::max<Index>(1, static_cast<Index>(std::llround(dur_ms * rate_hz / 1000.0)));
  Positions pos(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double u = static_cast<double>(i + 1) / static_cast<double>(n);
    const Eigen::Vector2d v = start_pos + dir * amplitude_deg * raised_cosine_s(u);
    pos(i, 0) = v.x();
    pos(i, 1) = v.y();
  }
  return pos;
}

Positions simulate_clean_scanpath(const IdentityParams& p, double duration_s, double rate_hz, Rng& rng,
                                  ScanpathTrace* trace) {
  const Index total = static_cast<Index>(std::llround(duration_s * rate_hz));
  Positions pos(total, 2);
  Index filled = 0;
  Eigen::Vector2d cur(0, 0);

  IdentityParams clean = p;
  clean.noise_sd_deg = 0;  // measurement noise is applied by the caller

  std::normal_distribution<double> fix_dur(p.fixation_duration_mean_ms, p.fixation_duration_sd_ms);
  std::uniform_real_distribution<double> target(-12.0, 12.0);

  bool in_fixation = true;
  while (filled < total) {
    Positions seg;
    SegmentInfo::Kind kind;
    if (in_fixation) {
      const double dur = std::clamp(fix_dur(rng), 80.0, 600.0);
      seg = synth_fixation_segment(clean, dur, rate_hz, cur, rng, trace, filled);
      kind = SegmentInfo::Kind::fixation;
    } else {
      const Eigen::Vector2d tgt(target(rng), target(rng));
      Eigen::Vector2d to = tgt - cur;
      if (to.norm() < 1e-9) to = Eigen::Vector2d(1, 0);
      const double amplitude = std::clamp(to.norm(), 2.0, 10.0);
      const Eigen::Vector2d dir = to.normalized();
      seg = synth_saccade_segment(clean, amplitude, rate_hz, cur, rng, &dir);
      kind = SegmentInfo::Kind::saccade;
    }
    const Index take = std::min<Index>(seg.rows(), total - filled);
    if (take > 0) {
      pos.middleRows(filled, take) = seg.topRows(take);
      if (trace) trace->push_back({kind, filled, take});
      cur = Eigen::Vector2d(pos(filled + take - 1, 0), pos(filled + take - 1, 1));
      filled += take;
    }
    in_fixation = !in_fixation;
  }
  return pos;
}

GazeRecording simulate_scanpath(const IdentityParams& p, const SimConfig& cfg, Rng& rng, ScanpathTrace* trace) {
  cfg.validate();
  Positions pos = simulate_clean_scanpath(p, cfg.duration_s, cfg.rate_hz, rng, trace);
  if (p.noise_sd_deg > 0) {
    std::normal_distribution<double> noise(0.0, p.noise_sd_deg);
    for (Index i = 0; i < pos.rows(); ++i) {
      pos(i, 0) += noise(rng);
      pos(i, 1) += noise(rng);
    }
  }
  GazeRecording rec;
  rec.rate_hz = cfg.rate_hz;
  const double dt_ms = 1000.0 / cfg.rate_hz;
  rec.samples.reserve(static_cast<size_t>(pos.rows()));
  for (Index i = 0; i < pos.rows(); ++i)
    rec.samples.push_back({static_cast<double>(i) * dt_ms, pos(i, 0), pos(i, 1)});
  return rec;
}

namespace {

std::string id_tag(const char* prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%02d", prefix, i);
  return buf;
}

GazeRecording to_recording(const Positions& pos, double rate_hz, const IdentityParams& p, Rng& noise_rng,
                           Eye eye) {
  Positions noisy = pos;
  if (p.noise_sd_deg > 0) {
    std::normal_distribution<double> noise(0.0, p.noise_sd_deg);
    for (Index i = 0; i < noisy.rows(); ++i) {
      noisy(i, 0) += noise(noise_rng);
      noisy(i, 1) += noise(noise_rng);
    }
  }
  GazeRecording rec;
  rec.rate_hz = rate_hz;
  rec.eye = eye;
  const double dt_ms = 1000.0 / rate_hz;
  rec.samples.reserve(static_cast<size_t>(noisy.rows()));
  for (Index i = 0; i < noisy.rows(); ++i)
    rec.samples.push_back({static_cast<double>(i) * dt_ms, noisy(i, 0), noisy(i, 1)});
  return rec;
}

}  // namespace

Dataset generate_dataset(const SimConfig& cfg, const PopulationSpec& spec) {
  cfg.validate();
  spec.validate();
  Dataset ds;
  ds.config = cfg;
  ds.population = spec;

  for (int i = 0; i < cfg.identity_count; ++i) {
    Rng rng(substream_seed(cfg.seed, 0x1000000ull + static_cast<std::uint64_t>(i)));
    ds.identities.push_back(sample_identity(rng, spec));
  }

  for (int i = 0; i < cfg.identity_count; ++i) {
    const std::string subject = id_tag("id", i);
    for (int s = 0; s < cfg.sessions_per_identity; ++s) {
      const std::string session = id_tag("s", s);
      const std::uint64_t session_seed =
          substream_seed(cfg.seed, static_cast<std::uint64_t>(i) * 100003ull + static_cast<std::uint64_t>(s) + 1);
      if (cfg.binocular) {
        Rng path_rng(session_seed);
        Positions clean = simulate_clean_scanpath(ds.identities[static_cast<size_t>(i)], cfg.duration_s,
                                                  cfg.rate_hz, path_rng);
        for (Eye eye : {Eye::left, Eye::right}) {
          Rng noise_rng(substream_seed(session_seed, eye == Eye::left ? 2 : 3));
          GazeRecording rec =
              to_recording(clean, cfg.rate_hz, ds.identities[static_cast<size_t>(i)], noise_rng, eye);
          rec.subject_id = subject;
          rec.session_id = session;
          ds.meta.push_back({subject + "_" + session + "_" + signal::to_string(eye) + ".csv", subject, session,
                             eye, session_seed});
          ds.recordings.push_back(std::move(rec));
        }
      } else {
        Rng rng(session_seed);
        GazeRecording rec = simulate_scanpath(ds.identities[static_cast<size_t>(i)], cfg, rng);
        rec.subject_id = subject;
        rec.session_id = session;
        ds.meta.push_back({subject + "_" + session + ".csv", subject, session, Eye::unspecified, session_seed});
        ds.recordings.push_back(std::move(rec));
      }
    }
  }
  return ds;
}

void write_gaze_csv(std::ostream& out, const GazeRecording& rec) {
  const bool with_eye = rec.eye != Eye::unspecified;
  out << (with_eye ? "t_ms,x_deg,y_deg,eye\n" : "t_ms,x_deg,y_deg\n");
  char buf[96];
  for (const auto& s : rec.samples) {
    if (with_eye)
      std::snprintf(buf, sizeof(buf), "%.4f,%.6f,%.6f,%s\n", s.t_ms, s.x_deg, s.y_deg,
                    signal::to_string(rec.eye));
    else
      std::snprintf(buf, sizeof(buf), "%.4f,%.6f,%.6f\n", s.t_ms, s.x_deg, s.y_deg);
    out << buf;
  }
}

Dataset make_dataset(const SimConfig& cfg, const PopulationSpec& spec, const std::filesystem::path& dir) {
  Dataset ds = generate_dataset(cfg, spec);

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create dataset directory " + dir.string() + ": " + ec.message());

  for (size_t i = 0; i < ds.recordings.size(); ++i) {
    const auto path = dir / ds.meta[i].file;
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
    write_gaze_csv(out, ds.recordings[i]);
    if (!out) throw Error(ErrorCode::io, "failed writing " + path.string());
  }

  nlohmann::json manifest;
  manifest["format"] = "eyedent-dataset";
  manifest["version"] = 1;
  manifest["rate_hz"] = cfg.rate_hz;
  manifest["duration_s"] = cfg.duration_s;
  manifest["seed"] = cfg.seed;
  manifest["binocular"] = cfg.binocular;
  manifest["separation"] = spec.separation;
  for (size_t i = 0; i < ds.identities.size(); ++i) {
    const IdentityParams& p = ds.identities[i];
    manifest["identities"].push_back({{"subject_id", id_tag("id", static_cast<int>(i))},
                                      {"fixation_duration_mean_ms", p.fixation_duration_mean_ms},
                                      {"fixation_duration_sd_ms", p.fixation_duration_sd_ms},
                                      {"saccade_duration_intercept_ms", p.saccade_duration_intercept_ms},
                                      {"saccade_duration_slope_ms_per_deg", p.saccade_duration_slope_ms_per_deg},
                                      {"saccade_peak_velocity", p.saccade_peak_velocity},
                                      {"microsaccade_rate_hz", p.microsaccade_rate_hz},
                                      {"microsaccade_peak_velocity", p.microsaccade_peak_velocity},
                                      {"microsaccade_duration_ms", p.microsaccade_duration_ms},
                                      {"drift_speed", p.drift_speed},
                                      {"tremor_frequency_hz", p.tremor_frequency_hz},
                                      {"tremor_velocity_amplitude", p.tremor_velocity_amplitude},
                                      {"noise_sd_deg", p.noise_sd_deg}});
  }
  for (const RecordingMeta& m : ds.meta) {
    manifest["recordings"].push_back({{"file", m.file},
                                      {"subject_id", m.subject_id},
                                      {"session_id", m.session_id},
                                      {"eye", signal::to_string(m.eye)},
                                      {"seed", m.seed}});
  }

  const auto mpath = dir / "manifest.json";
  std::ofstream mout(mpath);
  if (!mout) throw Error(ErrorCode::io, "cannot open " + mpath.string() + " for writing");
  mout << manifest.dump(2) << "\n";
  if (!mout) throw Error(ErrorCode::io, "failed writing " + mpath.string());
  return ds;
}

}  // namespace eyedent::oculosim
