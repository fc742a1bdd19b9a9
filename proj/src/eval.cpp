// SPDX-License-Identifier: Apache-2.0
#include "eyedent/eval.hpp"

#include <algorithm>
#include <cmath>

namespace eyedent::eval {

void EnrollmentTemplate::validate() const {
  if (window_embeddings.empty())
    throw Error(ErrorCode::validation, "template '" + user_id + "': needs at least one embedding");
  const Eigen::Index dim = window_embeddings.front().values.size();
  for (const auto& e : window_embeddings)
    if (e.values.size() != dim)
      throw Error(ErrorCode::validation, "template '" + user_id + "': embeddings disagree on dimension");
}

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.values.size() != v.values.size())
    throw Error(ErrorCode::shape, "cosine: embedding dimensions disagree");
  if (!(u.norm > 0) || !(v.norm > 0))
    throw Error(ErrorCode::validation, "cosine: similarity undefined for a zero embedding");
  const double s =
      static_cast<double>(u.values.dot(v.values)) / (static_cast<double>(u.norm) * static_cast<double>(v.norm));
  return std::clamp(s, -1.0, 1.0);  // rounding can push a self-match past 1
}

RocCurve roc(std::span<const double> genuine, std::span<const double> impostor, RocSetting setting) {
  if (genuine.empty() || impostor.empty())
    throw Error(ErrorCode::validation, "roc: both score sets must be non-empty");
  std::vector<double> g(genuine.begin(), genuine.end());
  std::vector<double> i(impostor.begin(), impostor.end());
  std::sort(g.begin(), g.end());
  std::sort(i.begin(), i.end());

  std::vector<double> thresholds;
  thresholds.reserve(g.size() + i.size() + 1);
  thresholds.push_back(std::min(g.front(), i.front()) - 1.0);  // below every score
  {
    std::vector<double> all(g);
    all.insert(all.end(), i.begin(), i.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    thresholds.insert(thresholds.end(), all.begin(), all.end());
  }

  RocCurve curve;
  curve.setting = setting;
  curve.points.reserve(thresholds.size());
  for (double t : thresholds) {
    // Acceptance is strictly greater than the threshold.
    const auto above = [](const std::vector<double>& v, double thr) {
      return static_cast<double>(v.end() - std::upper_bound(v.begin(), v.end(), thr));
    };
    curve.points.push_back({t, above(i, t) / static_cast<double>(i.size()),
                            above(g, t) / static_cast<double>(g.size())});
  }
  return curve;
}

double auc(const RocCurve& curve) {
  double area = 0;
  for (size_t k = 1; k < curve.points.size(); ++k) {
    const RocPoint& a = curve.points[k - 1];
    const RocPoint& b = curve.points[k];
    area += (a.fpr - b.fpr) * (a.tpr + b.tpr) / 2.0;  // fpr descends along the sweep
  }
  return area;
}

double eer(const RocCurve& curve) {
  double prev_d = curve.points.front().fpr - (1.0 - curve.points.front().tpr);
  for (size_t k = 1; k < curve.points.size(); ++k) {
    const RocPoint& a = curve.points[k - 1];
    const RocPoint& b = curve.points[k];
    const double d = b.fpr - (1.0 - b.tpr);
    if ((prev_d >= 0 && d <= 0) || (prev_d <= 0 && d >= 0)) {
      const double denom = d - prev_d;
      const double t = denom == 0 ? 0.0 : -prev_d / denom;
      return a.fpr + t * (b.fpr - a.fpr);
    }
    prev_d = d;
  }
  return curve.points.back().fpr;
}

MatchTrace match_score(const EnrollmentTemplate& tmpl, std::span<const EmbeddingVector> test_windows) {
  tmpl.validate();
  MatchTrace trace;
  trace.per_window.reserve(test_windows.size());
  trace.running_max.reserve(test_windows.size());
  double best = -1.0;
  for (const EmbeddingVector& w : test_windows) {
    double s = -1.0;
    for (const EmbeddingVector& e : tmpl.window_embeddings) s = std::max(s, cosine(w, e));
    best = std::max(best, s);
    trace.per_window.push_back(s);
    trace.running_max.push_back(best);
  }
  return trace;
}

std::optional<double> time_to_identification(const MatchTrace& trace, double threshold,
                                             std::span<const double> window_end_times_s) {
  if (trace.running_max.size() != window_end_times_s.size())
    throw Error(ErrorCode::shape, "time_to_identification: trace and window times disagree");
  for (size_t i = 0; i < trace.running_max.size(); ++i)
    if (trace.running_max[i] > threshold) return window_end_times_s[i];
  return std::nullopt;
}

EnrollmentTemplate enroll(ModelBundle& bundle, std::span<const signal::InputWindow<float>> windows,
                          const std::string& user_id) {
  if (windows.empty())
    throw Error(ErrorCode::validation, "enroll: user '" + user_id + "' yields no enrollment window");
  EnrollmentTemplate t;
  t.user_id = user_id;
  t.window_embeddings = model::embed_batch(bundle, windows);
  t.validate();
  return t;
}

Eigen::VectorXf binocular_fuse(const Eigen::VectorXf& left, const Eigen::VectorXf& right) {
  if (left.size() != right.size())
    throw Error(ErrorCode::shape, "binocular fusion: class counts disagree");
  return 0.5f * (left + right);
}

MatXf binocular_fuse(const MatXf& left, const MatXf& right) {
  if (left.rows() != right.rows() || left.cols() != right.cols())
    throw Error(ErrorCode::shape, "binocular fusion: score shapes disagree");
  return 0.5f * (left + right);
}

std::vector<DurationAccuracy> accuracy_vs_duration(std::span<const SequenceScores> sequences,
                                                   std::span<const double> durations_s, Index window_length,
                                                   double rate_hz, const std::vector<std::string>& labels,
                                                   std::vector<std::string>* warnings) {
  if (sequences.empty()) throw Error(ErrorCode::validation, "accuracy_vs_duration: no test sequences");
  std::vector<DurationAccuracy> out;
  for (double d : durations_s) {
    if (!(d > 0)) throw Error(ErrorCode::validation, "accuracy_vs_duration: durations must be positive");
    const double budget = d * rate_hz;  // velocity samples available
    std::vector<double> outcomes;
    for (const SequenceScores& seq : sequences) {
      Eigen::VectorXf mean = Eigen::VectorXf::Zero(seq.probs.cols());
      long used = 0;
      for (size_t w = 0; w < seq.window_starts.size(); ++w) {
        if (static_cast<double>(seq.window_starts[w] + window_length) > budget) continue;
        mean += seq.probs.row(static_cast<Index>(w)).transpose();
        ++used;
      }
      if (used == 0) {
        if (warnings)
          warnings->push_back("sequence '" + seq.sequence_id + "' shorter than " + std::to_string(d) +
                              " s; excluded from that duration");
        continue;
      }
      mean /= static_cast<float>(used);
      Index arg = 0;
      mean.maxCoeff(&arg);
      const bool correct = arg >= 0 && static_cast<size_t>(arg) < labels.size() &&
                           labels[static_cast<size_t>(arg)] == seq.label;
      outcomes.push_back(correct ? 1.0 : 0.0);
    }
    DurationAccuracy da;
    da.duration_s = d;
    if (!outcomes.empty()) {
      const double n = static_cast<double>(outcomes.size());
      double acc = 0;
      for (double x : outcomes) acc += x;
      acc /= n;
      da.accuracy = acc;
      if (outcomes.size() > 1) {
        double ss = 0;
        for (double x : outcomes) ss += (x - acc) * (x - acc);
        da.stderr_mean = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
      }
    }
    out.push_back(da);
  }
  return out;
}

Partition resample_protocol(std::span<const std::string> identities, const SplitSpec& spec, Rng& rng) {
  if (spec.train_count < 1 || spec.enrolled_count < 1 || spec.impostor_count < 0)
    throw Error(ErrorCode::validation, "split spec: counts must be positive (impostors may be zero)");
  const long need = spec.train_count + spec.enrolled_count + spec.impostor_count;
  if (static_cast<long>(identities.size()) < need)
    throw Error(ErrorCode::validation, "split spec: needs " + std::to_string(need) + " identities, have " +
                                           std::to_string(identities.size()));
  std::vector<std::string> pool(identities.begin(), identities.end());
  std::shuffle(pool.begin(), pool.end(), rng);
  Partition p;
  auto it = pool.begin();
  p.train.assign(it, it + spec.train_count);
  it += spec.train_count;
  p.enrolled.assign(it, it + spec.enrolled_count);
  it += spec.enrolled_count;
  p.impostors.assign(it, it + spec.impostor_count);
  return p;
}

}  // namespace eyedent::eval
