// SPDX-License-Identifier: Apache-2.0
//
// The three evaluation settings: multi-class accuracy versus input duration,
// open-set identification, and verification. Scores are cosine similarities
// between window embeddings and enrolled templates; ROC sweeps use strict >
// acceptance at every threshold.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eyedent/model.hpp"
#include "eyedent/random.hpp"

namespace eyedent::eval {

using model::EmbeddingVector;
using model::Index;
using model::MatXf;
using model::ModelBundle;

/// Stored reference embeddings of one enrolled user.
struct EnrollmentTemplate {
  std::string user_id;
  std::vector<EmbeddingVector> window_embeddings;

  void validate() const;
};

/// u.v / (|u||v|); throws on a zero-norm input.
double cosine(const EmbeddingVector& u, const EmbeddingVector& v);

enum class RocSetting { confusion, impostor, verification };

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

/// Threshold sweep over the union of the score sets, ascending by threshold;
/// the first point sits below every score (fpr = tpr = 1) and the last at the
/// maximum score (fpr = tpr = 0).
struct RocCurve {
  std::vector<RocPoint> points;
  RocSetting setting = RocSetting::verification;
};

RocCurve roc(std::span<const double> genuine, std::span<const double> impostor,
             RocSetting setting = RocSetting::verification);
/// Trapezoidal area under the curve.
double auc(const RocCurve& curve);
/// Operating point with fpr = fnr, linearly interpolated between the
/// bracketing sweep points.
double eer(const RocCurve& curve);

/// Per-window match evidence of one test stream against one template.
struct MatchTrace {
  std::vector<double> per_window;   // max cosine over the template's embeddings
  std::vector<double> running_max;  // non-decreasing decision statistic
};

MatchTrace match_score(const EnrollmentTemplate& tmpl, std::span<const EmbeddingVector> test_windows);

/// Earliest window end time (seconds) at which the running max strictly
/// exceeds the threshold; nullopt when it never does.
std::optional<double> time_to_identification(const MatchTrace& trace, double threshold,
                                             std::span<const double> window_end_times_s);

/// Embed every window and store them as the user's template.
EnrollmentTemplate enroll(ModelBundle& bundle, std::span<const signal::InputWindow<float>> windows,
                          const std::string& user_id);

/// Elementwise mean of synchronized left/right softmax scores.
Eigen::VectorXf binocular_fuse(const Eigen::VectorXf& left, const Eigen::VectorXf& right);
MatXf binocular_fuse(const MatXf& left, const MatXf& right);

// ---------------------------------------------------------------------------
// Accuracy as a function of input duration

struct DurationAccuracy {
  double duration_s = 0;
  double accuracy = 0;
  double stderr_mean = 0;
};

/// Per-window class probabilities of one labeled test sequence.
struct SequenceScores {
  std::string label;
  std::string sequence_id;
  std::vector<Index> window_starts;  // velocity-sample index per window
  MatXf probs;                       // [windows, classes]
};

/// For each duration d: average the softmax vectors of all windows fully
/// contained in the first d seconds of each sequence, take the argmax, and
/// score against the label. Mean and standard error across sequences;
/// sequences too short to contribute a window are excluded with a warning.
std::vector<DurationAccuracy> accuracy_vs_duration(std::span<const SequenceScores> sequences,
                                                   std::span<const double> durations_s, Index window_length,
                                                   double rate_hz, const std::vector<std::string>& labels,
                                                   std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Identity resampling protocol

struct SplitSpec {
  int train_count = 0;
  int enrolled_count = 0;
  int impostor_count = 0;
};

struct Partition {
  std::vector<std::string> train;
  std::vector<std::string> enrolled;
  std::vector<std::string> impostors;
};

/// Disjoint identity split for one resampling iteration; training identities
/// never appear in enrollment or test roles.
Partition resample_protocol(std::span<const std::string> identities, const SplitSpec& spec, Rng& rng);

}  // namespace eyedent::eval
