// SPDX-License-Identifier: Apache-2.0
//
// Dataset plumbing between the CSV contract and the model: directory loading
// (manifest-driven or glob), transform application, and window extraction.
#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "eyedent/gaze_signal.hpp"

namespace eyedent::pipeline {

using signal::Eye;
using signal::Index;

/// One contiguous velocity segment of one recording, with its provenance.
struct LoadedSequence {
  signal::VelocitySequence<float> velocities;
  Eye eye = Eye::unspecified;
  std::string subject_id;
  std::string session_id;
  std::string sequence_id;  // "<subject>_<session>[_<eye>]#<segment>"
};

struct LoadedDataset {
  double rate_hz = 1000;
  std::vector<LoadedSequence> sequences;
  bool has_eye_labels = false;
};

/// Load every recording under `dir`. A manifest.json written by the
/// synthesizer drives file-to-label mapping when present; otherwise *.csv
/// files are globbed and labels parsed from `<subject>_<session>[_<eye>].csv`
/// stems.
LoadedDataset load_dataset(const std::filesystem::path& dir, double rate_hz);

/// Transform one sequence with the given preprocessing state and cut aligned
/// windows. The label is the subject id unless `labeled` is false.
std::vector<signal::InputWindow<float>> sequence_windows(const LoadedSequence& seq,
                                                         const signal::TransformConfig& transform,
                                                         const signal::ZScoreStats<float>& stats, Index length,
                                                         Index stride, bool labeled = true);

/// Fit the fast-branch statistics over a set of training sequences.
signal::ZScoreStats<float> fit_stats(std::span<const LoadedSequence> train, const signal::TransformConfig& t);

/// Sorted unique subject ids.
std::vector<std::string> subjects_of(const LoadedDataset& ds);

}  // namespace eyedent::pipeline
