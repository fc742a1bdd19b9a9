// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point: synthesis, training, and the three evaluation
// settings, driven by a JSON config file with flag overrides. Every command
// is reproducible from (config, seed, inputs) and echoes its effective
// config next to its outputs.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "eyedent/checkpoint.hpp"
#include "eyedent/config.hpp"
#include "eyedent/eval.hpp"
#include "eyedent/gradcheck_suite.hpp"
#include "eyedent/model.hpp"
#include "eyedent/oculosim.hpp"
#include "eyedent/pipeline.hpp"

namespace fs = std::filesystem;
using namespace eyedent;
using config::RunConfig;
using model::Index;
using model::ModelBundle;
using pipeline::LoadedDataset;
using pipeline::LoadedSequence;

namespace {

constexpr std::uint32_t kTemplateVersion = 1;

/// Re-throw config/domain validation problems as usage errors (exit code 2).
template <class F>
void validate_as_usage(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::validation) throw Error(ErrorCode::usage, e.what());
    throw;
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::io, "failed writing " + path.string());
}

void echo_config(const RunConfig& cfg, const fs::path& dir) {
  write_text(dir / "effective_config.json", config::config_to_json(cfg).dump(2) + "\n");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Shared config/override flags.
struct ConfigCli {
  std::string config_file;
  bool unsafe = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> rate;
  std::optional<Index> stride;       // eval/enrollment window stride
  std::optional<Index> window_len;

  void attach(CLI::App* cmd, bool with_stride = true) {
    cmd->add_option("--config", config_file, "JSON config file (flags override file values)");
    cmd->add_flag("--unsafe-hparams", unsafe, "bypass hyperparameter domain validation");
    cmd->add_option("--seed", seed, "random seed")->envname("EYID_SEED");
    cmd->add_option("--rate", rate, "sampling rate in Hz");
    if (with_stride) cmd->add_option("--stride", stride, "evaluation/enrollment window stride in samples");
    cmd->add_option("--window", window_len, "window length in velocity samples");
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config_file.empty()) {
      try {
        c = config::load_config_file(config_file);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::validation) throw Error(ErrorCode::usage, e.what());
        throw;
      }
    }
    if (seed) c.seed = *seed;
    if (rate) c.rate_hz = *rate;
    if (stride) c.eval_stride = *stride;
    if (window_len) c.window_length = *window_len;
    if (unsafe) c.unsafe_hparams = true;
    if (c.unsafe_hparams) std::cerr << "note: hyperparameter domain validation disabled\n";
    return c;
  }
};

// ---------------------------------------------------------------------------
// synth

void cmd_synth(const RunConfig& cfg, const fs::path& out_dir) {
  validate_as_usage([&] { cfg.validate(); });
  oculosim::SimConfig sim;
  sim.rate_hz = cfg.rate_hz;
  sim.duration_s = cfg.sim_duration_s;
  sim.identity_count = cfg.sim_identities;
  sim.sessions_per_identity = cfg.sim_sessions;
  sim.seed = cfg.seed;
  sim.binocular = cfg.sim_binocular;
  oculosim::PopulationSpec pop;
  pop.separation = cfg.separation;
  validate_as_usage([&] {
    sim.validate();
    pop.validate();
  });
  ensure_dir(out_dir);
  oculosim::Dataset ds = oculosim::make_dataset(sim, pop, out_dir);
  echo_config(cfg, out_dir);
  std::cout << "wrote " << ds.recordings.size() << " recordings (" << sim.identity_count << " identities x "
            << sim.sessions_per_identity << " sessions" << (sim.binocular ? ", binocular" : "") << ") to "
            << out_dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// train

std::vector<signal::InputWindow<float>> dataset_windows(const LoadedDataset& ds, const ModelBundle& bundle,
                                                        Index stride) {
  std::vector<signal::InputWindow<float>> all;
  for (const LoadedSequence& seq : ds.sequences) {
    auto ws = pipeline::sequence_windows(seq, bundle.transform, bundle.zstats, bundle.window_length, stride);
    all.insert(all.end(), std::make_move_iterator(ws.begin()), std::make_move_iterator(ws.end()));
  }
  return all;
}

void cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir, const std::string& stage,
               const std::string& resume) {
  validate_as_usage([&] { cfg.validate(); });
  if (stage != "all" && stage != "slow" && stage != "fast" && stage != "joint")
    throw Error(ErrorCode::usage, "--stage must be one of all|slow|fast|joint");
  ensure_dir(out_dir);
  echo_config(cfg, out_dir);

  LoadedDataset ds = pipeline::load_dataset(data_dir, cfg.rate_hz);
  std::vector<std::string> subjects = pipeline::subjects_of(ds);

  ModelBundle bundle = [&] {
    if (!resume.empty()) {
      ModelBundle b = model::load_checkpoint(resume);
      if (b.labels != subjects)
        throw Error(ErrorCode::validation,
                    "resume checkpoint was trained on a different identity set than " + data_dir.string());
      return b;
    }
    if (subjects.size() < 2) throw Error(ErrorCode::validation, "training needs at least two identities");
    auto stats = pipeline::fit_stats(ds.sequences, cfg.transform);
    return model::build_model(cfg.slow_config(), cfg.fast_config(), subjects, cfg.transform, stats,
                              cfg.window_length, cfg.seed);
  }();

  auto windows = dataset_windows(ds, bundle, cfg.train_stride);
  std::cout << "training on " << windows.size() << " windows from " << ds.sequences.size() << " sequences, "
            << subjects.size() << " identities\n";

  model::TrainSchedule sched;
  sched.lr = cfg.lr_subnet;
  sched.batch_size = cfg.batch_size;
  sched.max_epochs = cfg.max_epochs;
  sched.patience = cfg.patience;
  sched.holdout_fraction = cfg.holdout_fraction;
  sched.seed = cfg.seed;
  sched.amsgrad = cfg.amsgrad;

  bundle.train_meta["learning_rates"] = {{"subnet", cfg.lr_subnet}, {"joint", cfg.lr_joint}};
  const auto log_path = out_dir / "training_log.json";
  auto dump_log = [&] { write_text(log_path, bundle.train_meta.dump(2) + "\n"); };

  try {
    if (stage == "all" || stage == "slow") {
      auto r = model::pretrain_subnet(bundle, model::Branch::slow, windows, sched);
      std::cout << "stage slow: " << r.epochs.size() << " epochs, train acc " << fmt(r.final_train_accuracy)
                << "\n";
    }
    if (stage == "all" || stage == "fast") {
      auto r = model::pretrain_subnet(bundle, model::Branch::fast, windows, sched);
      std::cout << "stage fast: " << r.epochs.size() << " epochs, train acc " << fmt(r.final_train_accuracy)
                << "\n";
    }
    if (stage == "all" || stage == "joint") {
      model::TrainSchedule joint_sched = sched;
      joint_sched.lr = cfg.lr_joint;
      auto r = model::train_joint(bundle, windows, joint_sched);
      std::cout << "stage joint: " << r.epochs.size() << " epochs, train acc " << fmt(r.final_train_accuracy)
                << "\n";
    }
  } catch (...) {
    dump_log();  // keep the partial per-epoch record on failure
    throw;
  }

  dump_log();
  const auto ckpt = out_dir / "checkpoint.eyid";
  model::save_checkpoint(bundle, ckpt);
  std::cout << "checkpoint written to " << ckpt.string() << "\n";
}

// ---------------------------------------------------------------------------
// eval-classify

struct StreamScores {
  eval::SequenceScores scores;
  Eigen::Index windows = 0;
};

eval::SequenceScores score_sequence(ModelBundle& bundle, const LoadedSequence& seq, Index stride) {
  auto ws = pipeline::sequence_windows(seq, bundle.transform, bundle.zstats, bundle.window_length, stride);
  eval::SequenceScores sc;
  sc.label = seq.subject_id;
  sc.sequence_id = seq.sequence_id;
  for (const auto& w : ws) sc.window_starts.push_back(w.start);
  sc.probs = ws.empty() ? model::MatXf(0, static_cast<Index>(bundle.labels.size()))
                        : model::classify_batch(bundle, ws);
  return sc;
}

void cmd_eval_classify(const RunConfig& cfg, const fs::path& model_path, const fs::path& data_dir,
                       const fs::path& out_csv, bool binocular) {
  validate_as_usage([&] { cfg.validate(); });
  ModelBundle bundle = model::load_checkpoint(model_path);
  LoadedDataset ds = pipeline::load_dataset(data_dir, cfg.rate_hz);

  std::vector<eval::SequenceScores> scores;
  if (binocular) {
    if (!ds.has_eye_labels)
      throw Error(ErrorCode::validation, "--binocular requires recordings with eye labels, data is monocular");
    std::map<std::string, std::pair<const LoadedSequence*, const LoadedSequence*>> pairs;
    for (const auto& seq : ds.sequences) {
      if (seq.eye == signal::Eye::unspecified)
        throw Error(ErrorCode::validation, "sequence " + seq.sequence_id + " carries no eye label");
      const std::string key = seq.subject_id + "_" + seq.session_id + "#" +
                              seq.sequence_id.substr(seq.sequence_id.find('#') + 1);
      auto& slot = pairs[key];
      (seq.eye == signal::Eye::left ? slot.first : slot.second) = &seq;
    }
    for (const auto& [key, pair] : pairs) {
      if (!pair.first || !pair.second)
        throw Error(ErrorCode::validation, "binocular evaluation: session " + key + " lacks one eye");
      eval::SequenceScores left = score_sequence(bundle, *pair.first, cfg.eval_stride);
      eval::SequenceScores right = score_sequence(bundle, *pair.second, cfg.eval_stride);
      if (left.window_starts != right.window_starts)
        throw Error(ErrorCode::validation, "binocular evaluation: eyes of " + key + " disagree on windows");
      left.probs = eval::binocular_fuse(left.probs, right.probs);
      left.sequence_id = key;
      scores.push_back(std::move(left));
    }
  } else {
    for (const auto& seq : ds.sequences) scores.push_back(score_sequence(bundle, seq, cfg.eval_stride));
  }

  std::vector<std::string> warnings;
  auto rows =
      eval::accuracy_vs_duration(scores, cfg.durations, bundle.window_length, cfg.rate_hz, bundle.labels, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  std::string csv = "duration_s,accuracy,stderr\n";
  for (const auto& r : rows)
    csv += fmt(r.duration_s) + "," + fmt(r.accuracy) + "," + fmt(r.stderr_mean) + "\n";
  write_text(out_csv, csv);
  write_text(out_csv.parent_path().empty() ? fs::path("effective_config.json")
                                           : out_csv.parent_path() / "effective_config.json",
             config::config_to_json(cfg).dump(2) + "\n");
  for (const auto& r : rows)
    std::cout << "duration " << fmt(r.duration_s) << " s: accuracy " << fmt(r.accuracy) << " (stderr "
              << fmt(r.stderr_mean) << ")\n";
}

// ---------------------------------------------------------------------------
// enroll / identify / verify

nlohmann::json template_to_json(const eval::EnrollmentTemplate& t) {
  nlohmann::json j;
  j["format"] = "eyedent-template";
  j["version"] = kTemplateVersion;
  j["user_id"] = t.user_id;
  j["dim"] = t.window_embeddings.front().values.size();
  for (const auto& e : t.window_embeddings) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index i = 0; i < e.values.size(); ++i) row.push_back(e.values[i]);
    j["embeddings"].push_back(std::move(row));
  }
  return j;
}

eval::EnrollmentTemplate template_from_json(const nlohmann::json& j, const fs::path& path) {
  if (j.value("format", "") != "eyedent-template")
    throw Error(ErrorCode::parse, path.string() + ": not a template file");
  if (j.value("version", 0u) != kTemplateVersion)
    throw Error(ErrorCode::checkpoint_version, path.string() + ": template version " +
                                                   std::to_string(j.value("version", 0u)) + ", expected " +
                                                   std::to_string(kTemplateVersion));
  eval::EnrollmentTemplate t;
  t.user_id = j.at("user_id").get<std::string>();
  for (const auto& row : j.at("embeddings")) {
    model::EmbeddingVector e;
    e.values.resize(static_cast<Eigen::Index>(row.size()));
    Eigen::Index i = 0;
    for (const auto& v : row) e.values[i++] = v.get<float>();
    e.norm = e.values.norm();
    t.window_embeddings.push_back(std::move(e));
  }
  t.validate();
  return t;
}

void cmd_enroll(const RunConfig& cfg, const fs::path& model_path, const fs::path& data_dir,
                const fs::path& out_dir) {
  validate_as_usage([&] { cfg.validate(); });
  ModelBundle bundle = model::load_checkpoint(model_path);
  LoadedDataset ds = pipeline::load_dataset(data_dir, cfg.rate_hz);
  ensure_dir(out_dir);
  echo_config(cfg, out_dir);

  std::map<std::string, std::vector<signal::InputWindow<float>>> by_user;
  for (const auto& seq : ds.sequences) {
    auto ws = pipeline::sequence_windows(seq, bundle.transform, bundle.zstats, bundle.window_length,
                                         cfg.eval_stride, /*labeled=*/false);
    auto& dst = by_user[seq.subject_id];
    dst.insert(dst.end(), std::make_move_iterator(ws.begin()), std::make_move_iterator(ws.end()));
  }
  for (auto& [user, ws] : by_user) {
    eval::EnrollmentTemplate t = eval::enroll(bundle, ws, user);
    const auto path = out_dir / (user + ".template.json");
    write_text(path, template_to_json(t).dump() + "\n");
    std::cout << "enrolled " << user << ": " << t.window_embeddings.size() << " embeddings -> " << path.string()
              << "\n";
  }
}

struct TestStream {
  std::string sequence_id;
  std::string subject_id;
  std::vector<model::EmbeddingVector> embeddings;
  std::vector<double> window_end_s;
};

std::vector<TestStream> embed_streams(ModelBundle& bundle, const LoadedDataset& ds, const RunConfig& cfg) {
  std::vector<TestStream> streams;
  for (const auto& seq : ds.sequences) {
    auto ws = pipeline::sequence_windows(seq, bundle.transform, bundle.zstats, bundle.window_length,
                                         cfg.eval_stride, /*labeled=*/false);
    if (ws.empty()) continue;
    TestStream s;
    s.sequence_id = seq.sequence_id;
    s.subject_id = seq.subject_id;
    s.embeddings = model::embed_batch(bundle, ws);
    for (const auto& w : ws)
      s.window_end_s.push_back(static_cast<double>(w.start + bundle.window_length) / cfg.rate_hz);
    streams.push_back(std::move(s));
  }
  if (streams.empty()) throw Error(ErrorCode::validation, "no test sequence yields a full window");
  return streams;
}

void write_roc_csv(const fs::path& path, const eval::RocCurve& curve) {
  std::string csv = "threshold,fpr,tpr\n";
  for (const auto& p : curve.points) csv += fmt(p.threshold) + "," + fmt(p.fpr) + "," + fmt(p.tpr) + "\n";
  write_text(path, csv);
}

void run_matching(const RunConfig& cfg, const fs::path& model_path, const fs::path& data_dir,
                  const fs::path& out_dir, const std::vector<eval::EnrollmentTemplate>& templates,
                  std::optional<double> threshold, bool verification) {
  ModelBundle bundle = model::load_checkpoint(model_path);
  LoadedDataset ds = pipeline::load_dataset(data_dir, cfg.rate_hz);
  ensure_dir(out_dir);
  echo_config(cfg, out_dir);

  std::vector<TestStream> streams = embed_streams(bundle, ds, cfg);
  std::vector<std::string> enrolled;
  for (const auto& t : templates) enrolled.push_back(t.user_id);

  std::string decisions = "stream,subject,template_user,score,accepted,time_to_identification_s\n";
  std::string traces = "stream,template_user,window,window_end_s,similarity,running_max\n";
  std::vector<double> genuine, confusion_neg, impostor_neg;

  for (const TestStream& s : streams) {
    const bool subject_enrolled =
        std::find(enrolled.begin(), enrolled.end(), s.subject_id) != enrolled.end();
    for (const auto& t : templates) {
      eval::MatchTrace trace = eval::match_score(t, s.embeddings);
      const double score = trace.running_max.back();
      if (s.subject_id == t.user_id) genuine.push_back(score);
      else if (subject_enrolled) confusion_neg.push_back(score);
      else impostor_neg.push_back(score);

      std::string accepted, tti;
      if (threshold) {
        accepted = score > *threshold ? "1" : "0";
        auto when = eval::time_to_identification(trace, *threshold, s.window_end_s);
        tti = when ? fmt(*when) : "";
      }
      decisions += s.sequence_id + "," + s.subject_id + "," + t.user_id + "," + fmt(score) + "," + accepted +
                   "," + tti + "\n";
      for (size_t w = 0; w < trace.per_window.size(); ++w)
        traces += s.sequence_id + "," + t.user_id + "," + std::to_string(w) + "," + fmt(s.window_end_s[w]) +
                  "," + fmt(trace.per_window[w]) + "," + fmt(trace.running_max[w]) + "\n";
    }
  }

  write_text(out_dir / "decisions.csv", decisions);
  write_text(out_dir / "traces.csv", traces);

  nlohmann::json summary;
  summary["streams"] = streams.size();
  summary["templates"] = templates.size();
  summary["genuine_scores"] = genuine.size();
  summary["confusion_scores"] = confusion_neg.size();
  summary["impostor_scores"] = impostor_neg.size();

  auto emit_setting = [&](const char* name, const std::vector<double>& neg, eval::RocSetting setting,
                          const fs::path& file) {
    if (genuine.empty() || neg.empty()) {
      std::cerr << "note: " << name << " ROC skipped (needs both genuine and negative scores)\n";
      return;
    }
    eval::RocCurve curve = eval::roc(genuine, neg, setting);
    write_roc_csv(file, curve);
    summary[name] = {{"auc", eval::auc(curve)}, {"eer", eval::eer(curve)}};
    std::cout << name << ": AUC " << fmt(eval::auc(curve)) << ", EER " << fmt(eval::eer(curve)) << "\n";
  };

  if (verification) {
    emit_setting("verification", impostor_neg, eval::RocSetting::verification, out_dir / "roc_verification.csv");
  } else {
    emit_setting("confusion", confusion_neg, eval::RocSetting::confusion, out_dir / "roc_confusion.csv");
    emit_setting("impostor", impostor_neg, eval::RocSetting::impostor, out_dir / "roc_impostor.csv");
  }
  write_text(out_dir / "summary.json", summary.dump(2) + "\n");
}

std::vector<eval::EnrollmentTemplate> load_templates_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& de : fs::directory_iterator(dir))
    if (de.path().string().ends_with(".template.json")) files.push_back(de.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::io, "no *.template.json under " + dir.string());
  std::vector<eval::EnrollmentTemplate> templates;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw Error(ErrorCode::io, "cannot open " + f.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, f.string() + ": " + e.what());
    }
    templates.push_back(template_from_json(j, f));
  }
  return templates;
}

eval::EnrollmentTemplate load_template_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::io, "cannot open " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, file.string() + ": " + e.what());
  }
  return template_from_json(j, file);
}

// ---------------------------------------------------------------------------
// export-embeddings

void cmd_export_embeddings(const RunConfig& cfg, const fs::path& model_path, const fs::path& data_dir,
                           const fs::path& out_csv) {
  validate_as_usage([&] { cfg.validate(); });
  ModelBundle bundle = model::load_checkpoint(model_path);
  LoadedDataset ds = pipeline::load_dataset(data_dir, cfg.rate_hz);

  std::string csv;
  bool header_done = false;
  for (const auto& seq : ds.sequences) {
    auto ws = pipeline::sequence_windows(seq, bundle.transform, bundle.zstats, bundle.window_length,
                                         cfg.eval_stride, /*labeled=*/false);
    if (ws.empty()) continue;
    auto embs = model::embed_batch(bundle, ws);
    if (!header_done) {
      csv += "user_id,window_start";
      for (Eigen::Index i = 0; i < embs[0].values.size(); ++i) csv += ",e" + std::to_string(i);
      csv += "\n";
      header_done = true;
    }
    for (size_t w = 0; w < ws.size(); ++w) {
      csv += seq.subject_id + "," + std::to_string(ws[w].start);
      for (Eigen::Index i = 0; i < embs[w].values.size(); ++i)
        csv += "," + fmt(static_cast<double>(embs[w].values[i]));
      csv += "\n";
    }
  }
  if (!header_done) throw Error(ErrorCode::validation, "no sequence yields a full window");
  write_text(out_csv, csv);
  std::cout << "embeddings written to " << out_csv.string() << "\n";
}

// ---------------------------------------------------------------------------
// gradcheck

int cmd_gradcheck(std::uint64_t seed, int n_seeds, const std::string& corrupt) {
  constexpr double kTol = 1e-4;
  auto reports = autograd::run_gradcheck_suite(seed, n_seeds, corrupt);
  bool all_ok = true;
  std::printf("%-18s %8s %14s %8s  %s\n", "op", "seeds", "coords", "max_err", "status");
  for (const auto& r : reports) {
    const bool ok = r.max_rel_error < kTol;
    all_ok = all_ok && ok;
    std::printf("%-18s %8d %14ld %8.1e  %s\n", r.op.c_str(), r.seeds_run, r.coords_checked, r.max_rel_error,
                ok ? "ok" : "FAIL");
  }
  if (!all_ok) std::cerr << "gradient check failed: at least one operator exceeds " << kTol << "\n";
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eyedent: gaze-velocity biometric identification pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic gaze dataset");
  ConfigCli synth_cfg;
  synth_cfg.attach(synth, /*with_stride=*/false);
  std::string synth_out;
  std::optional<int> synth_ids, synth_sessions;
  std::optional<double> synth_seconds, synth_separation;
  bool synth_binocular = false;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--identities", synth_ids, "number of identities");
  synth->add_option("--sessions", synth_sessions, "sessions per identity");
  synth->add_option("--seconds", synth_seconds, "duration per session in seconds");
  synth->add_option("--separation", synth_separation, "identity separation knob in (0,1]");
  synth->add_flag("--binocular", synth_binocular, "emit synchronized left/right recordings");
  synth->callback([&] {
    RunConfig cfg = synth_cfg.resolve();
    if (synth_ids) cfg.sim_identities = *synth_ids;
    if (synth_sessions) cfg.sim_sessions = *synth_sessions;
    if (synth_seconds) cfg.sim_duration_s = *synth_seconds;
    if (synth_separation) cfg.separation = *synth_separation;
    if (synth_binocular) cfg.sim_binocular = true;
    cmd_synth(cfg, synth_out);
  });

  // train
  auto* train = app.add_subcommand("train", "run the three-stage training protocol");
  ConfigCli train_cfg;
  train_cfg.attach(train, /*with_stride=*/false);
  std::string train_data, train_out, train_stage = "all", train_resume, train_profile;
  std::optional<int> train_epochs, train_patience;
  std::optional<Index> train_batch, train_stride_opt;
  std::optional<double> train_holdout, train_lr, train_joint_lr;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "output directory for checkpoint and logs")->required();
  train->add_option("--stage", train_stage, "all|slow|fast|joint");
  train->add_option("--resume", train_resume, "checkpoint to continue from (for later stages)");
  train->add_option("--profile", train_profile, "paper|reduced architecture profile");
  train->add_option("--epochs", train_epochs, "max epochs per stage");
  train->add_option("--batch", train_batch, "batch size");
  train->add_option("--patience", train_patience, "early stopping patience");
  train->add_option("--holdout", train_holdout, "held-out fraction for early stopping");
  train->add_option("--lr", train_lr, "subnet learning rate");
  train->add_option("--joint-lr", train_joint_lr, "joint-layer learning rate");
  train->add_option("--train-stride", train_stride_opt, "training window stride");
  train->callback([&] {
    RunConfig cfg = train_cfg.resolve();
    if (!train_profile.empty()) cfg.profile = train_profile;
    if (train_epochs) cfg.max_epochs = *train_epochs;
    if (train_batch) cfg.batch_size = *train_batch;
    if (train_patience) cfg.patience = *train_patience;
    if (train_holdout) cfg.holdout_fraction = *train_holdout;
    if (train_lr) cfg.lr_subnet = *train_lr;
    if (train_joint_lr) cfg.lr_joint = *train_joint_lr;
    if (train_stride_opt) cfg.train_stride = *train_stride_opt;
    cmd_train(cfg, train_data, train_out, train_stage, train_resume);
  });

  // eval-classify
  auto* evalc = app.add_subcommand("eval-classify", "multi-class accuracy as a function of duration");
  ConfigCli evalc_cfg;
  evalc_cfg.attach(evalc);
  std::string evalc_model, evalc_data, evalc_out = "duration_accuracy.csv";
  std::vector<double> evalc_durations;
  bool evalc_binocular = false;
  evalc->add_option("--model", evalc_model, "checkpoint file")->required();
  evalc->add_option("--data", evalc_data, "test dataset directory")->required();
  evalc->add_option("--out", evalc_out, "output CSV path");
  evalc->add_option("--durations", evalc_durations, "durations in seconds")->delimiter(',');
  evalc->add_flag("--binocular", evalc_binocular, "fuse synchronized left/right softmax scores");
  evalc->callback([&] {
    RunConfig cfg = evalc_cfg.resolve();
    if (!evalc_durations.empty()) cfg.durations = evalc_durations;
    cmd_eval_classify(cfg, evalc_model, evalc_data, evalc_out, evalc_binocular);
  });

  // enroll
  auto* enroll = app.add_subcommand("enroll", "store embedding templates for users");
  ConfigCli enroll_cfg;
  enroll_cfg.attach(enroll);
  std::string enroll_model, enroll_data, enroll_out;
  enroll->add_option("--model", enroll_model, "checkpoint file")->required();
  enroll->add_option("--data", enroll_data, "enrollment dataset directory")->required();
  enroll->add_option("--out", enroll_out, "template output directory")->required();
  enroll->callback([&] {
    RunConfig cfg = enroll_cfg.resolve();
    cmd_enroll(cfg, enroll_model, enroll_data, enroll_out);
  });

  // identify
  auto* identify = app.add_subcommand("identify", "open-set identification against enrolled templates");
  ConfigCli identify_cfg;
  identify_cfg.attach(identify);
  std::string id_model, id_templates, id_data, id_out;
  std::optional<double> id_threshold;
  identify->add_option("--model", id_model, "checkpoint file")->required();
  identify->add_option("--templates", id_templates, "directory of *.template.json")->required();
  identify->add_option("--data", id_data, "test dataset directory")->required();
  identify->add_option("--out", id_out, "output directory")->required();
  identify->add_option("--threshold", id_threshold, "recognition threshold for decisions");
  identify->callback([&] {
    RunConfig cfg = identify_cfg.resolve();
    validate_as_usage([&] { cfg.validate(); });
    auto templates = load_templates_dir(id_templates);
    run_matching(cfg, id_model, id_data, id_out, templates, id_threshold, /*verification=*/false);
  });

  // verify
  auto* verify = app.add_subcommand("verify", "verification of one enrolled user");
  ConfigCli verify_cfg;
  verify_cfg.attach(verify);
  std::string v_model, v_template, v_data, v_out;
  std::optional<double> v_threshold;
  verify->add_option("--model", v_model, "checkpoint file")->required();
  verify->add_option("--template", v_template, "template file of the enrolled user")->required();
  verify->add_option("--data", v_data, "test dataset directory")->required();
  verify->add_option("--out", v_out, "output directory")->required();
  verify->add_option("--threshold", v_threshold, "recognition threshold for decisions");
  verify->callback([&] {
    RunConfig cfg = verify_cfg.resolve();
    validate_as_usage([&] { cfg.validate(); });
    std::vector<eval::EnrollmentTemplate> templates{load_template_file(v_template)};
    run_matching(cfg, v_model, v_data, v_out, templates, v_threshold, /*verification=*/true);
  });

  // export-embeddings
  auto* exp = app.add_subcommand("export-embeddings", "write per-window embeddings as CSV");
  ConfigCli exp_cfg;
  exp_cfg.attach(exp);
  std::string exp_model, exp_data, exp_out;
  exp->add_option("--model", exp_model, "checkpoint file")->required();
  exp->add_option("--data", exp_data, "dataset directory")->required();
  exp->add_option("--out", exp_out, "output CSV path")->required();
  exp->callback([&] {
    RunConfig cfg = exp_cfg.resolve();
    cmd_export_embeddings(cfg, exp_model, exp_data, exp_out);
  });

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of every operator");
  std::optional<std::uint64_t> gc_seed;
  int gc_nseeds = 20;
  std::string gc_corrupt;
  gc->add_option("--seed", gc_seed, "random seed")->envname("EYID_SEED");
  gc->add_option("--seeds", gc_nseeds, "number of random seeds per operator");
  gc->add_option("--corrupt-op", gc_corrupt, "fault-injection hook for exit-path tests")
      ->group("");  // hidden
  int gradcheck_exit = 0;
  gc->callback([&] { gradcheck_exit = cmd_gradcheck(gc_seed.value_or(0), gc_nseeds, gc_corrupt); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return e.code() == ErrorCode::usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return gradcheck_exit;
}
