// SPDX-License-Identifier: Apache-2.0
#include "eyedent/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>

namespace eyedent::pipeline {
namespace {

struct FileEntry {
  std::filesystem::path path;
  std::string subject;
  std::string session;
  Eye eye = Eye::unspecified;
};

Eye eye_from_string(const std::string& s) {
  if (s == "L") return Eye::left;
  if (s == "R") return Eye::right;
  return Eye::unspecified;
}

std::vector<FileEntry> entries_from_manifest(const std::filesystem::path& dir, const nlohmann::json& manifest) {
  std::vector<FileEntry> entries;
  for (const auto& rec : manifest.at("recordings")) {
    FileEntry e;
    e.path = dir / rec.at("file").get<std::string>();
    e.subject = rec.at("subject_id").get<std::string>();
    e.session = rec.at("session_id").get<std::string>();
    e.eye = eye_from_string(rec.value("eye", ""));
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<FileEntry> entries_from_glob(const std::filesystem::path& dir) {
  std::vector<FileEntry> entries;
  for (const auto& de : std::filesystem::directory_iterator(dir)) {
    if (de.path().extension() != ".csv") continue;
    FileEntry e;
    e.path = de.path();
    const std::string stem = de.path().stem().string();
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
      const size_t us = stem.find('_', start);
      if (us == std::string::npos) {
        parts.push_back(stem.substr(start));
        break;
      }
      parts.push_back(stem.substr(start, us - start));
      start = us + 1;
    }
    if (!parts.empty() && (parts.back() == "L" || parts.back() == "R")) {
      e.eye = eye_from_string(parts.back());
      parts.pop_back();
    }
    e.subject = parts.empty() ? stem : parts[0];
    e.session = parts.size() > 1 ? parts[1] : "s00";
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(), [](const FileEntry& a, const FileEntry& b) { return a.path < b.path; });
  return entries;
}

}  // namespace

LoadedDataset load_dataset(const std::filesystem::path& dir, double rate_hz) {
  if (!std::filesystem::is_directory(dir))
    throw Error(ErrorCode::io, "dataset directory " + dir.string() + " does not exist");

  std::vector<FileEntry> entries;
  const auto manifest_path = dir / "manifest.json";
  double rate = rate_hz;
  if (std::filesystem::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    if (!in) throw Error(ErrorCode::io, "cannot open " + manifest_path.string());
    nlohmann::json manifest;
    try {
      in >> manifest;
      rate = manifest.value("rate_hz", rate_hz);
      entries = entries_from_manifest(dir, manifest);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, manifest_path.string() + ": " + e.what());
    }
  } else {
    entries = entries_from_glob(dir);
  }
  if (entries.empty()) throw Error(ErrorCode::io, "no recordings found under " + dir.string());

  LoadedDataset ds;
  ds.rate_hz = rate;
  for (const FileEntry& e : entries) {
    std::ifstream in(e.path);
    if (!in) throw Error(ErrorCode::io, "cannot open " + e.path.string());
    signal::ParseOptions opts;
    opts.rate_hz = rate;
    std::vector<signal::GazeRecording> segments;
    try {
      segments = signal::parse_recording(in, opts);
    } catch (const Error& err) {
      throw Error(err.code(), e.path.string() + ": " + err.what());
    }
    for (size_t s = 0; s < segments.size(); ++s) {
      segments[s].subject_id = e.subject;
      segments[s].session_id = e.session;
      if (segments[s].eye == Eye::unspecified) segments[s].eye = e.eye;
      if (segments[s].samples.size() < 2) continue;
      LoadedSequence seq;
      seq.velocities = signal::to_velocities<float>(segments[s]);
      seq.eye = segments[s].eye;
      seq.subject_id = e.subject;
      seq.session_id = e.session;
      seq.sequence_id = e.subject + "_" + e.session;
      if (seq.eye != Eye::unspecified) {
        seq.sequence_id += std::string("_") + signal::to_string(seq.eye);
        ds.has_eye_labels = true;
      }
      seq.sequence_id += "#" + std::to_string(s);
      seq.velocities.sequence_id = seq.sequence_id;
      seq.velocities.subject_id = e.subject;
      seq.velocities.session_id = e.session;
      ds.sequences.push_back(std::move(seq));
    }
  }
  if (ds.sequences.empty()) throw Error(ErrorCode::io, "no usable segments under " + dir.string());
  return ds;
}

std::vector<signal::InputWindow<float>> sequence_windows(const LoadedSequence& seq,
                                                         const signal::TransformConfig& transform,
                                                         const signal::ZScoreStats<float>& stats, Index length,
                                                         Index stride, bool labeled) {
  auto slow = signal::transform_slow(seq.velocities, transform);
  auto fast = signal::transform_fast(seq.velocities, transform, stats);
  return signal::windows<float>(slow, fast, length, stride, seq.sequence_id,
                                labeled ? std::optional<std::string>(seq.subject_id) : std::nullopt);
}

signal::ZScoreStats<float> fit_stats(std::span<const LoadedSequence> train, const signal::TransformConfig& t) {
  std::vector<signal::VelocitySequence<float>> seqs;
  seqs.reserve(train.size());
  for (const auto& s : train) seqs.push_back(s.velocities);
  return signal::fit_zscore<float>(seqs, t);
}

std::vector<std::string> subjects_of(const LoadedDataset& ds) {
  std::set<std::string> set;
  for (const auto& s : ds.sequences) set.insert(s.subject_id);
  return {set.begin(), set.end()};
}

}  // namespace eyedent::pipeline
