// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line with
// its runtime; the process exits non-zero when any criterion fails. The
// trained-accuracy criteria run on synthetic data built to be separable; they
// validate the pipeline, not human-subject performance.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "eyedent/checkpoint.hpp"
#include "eyedent/eval.hpp"
#include "eyedent/gradcheck_suite.hpp"
#include "eyedent/model.hpp"
#include "eyedent/oculosim.hpp"
#include "eyedent/pipeline.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace eyedent;
using model::Index;
using model::ModelBundle;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool cond, const std::string& msg) {
    if (!cond) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += msg;
    }
  }
  void note(const std::string& msg) {
    if (!detail.empty()) detail += "; ";
    detail += msg;
  }
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "eyedent_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

Outcome criterion_gradients(double elapsed_limit_s) {
  Outcome o;
  const auto t0 = Clock::now();
  auto reports = autograd::run_gradcheck_suite(0x20250810, 20);
  double worst = 0;
  std::string worst_op;
  for (const auto& r : reports) {
    o.require(r.seeds_run == 20, r.op + ": expected 20 seeds");
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_op = r.op;
    }
    o.require(r.max_rel_error < 1e-4, r.op + " error " + fmt(r.max_rel_error) + " >= 1e-4");
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  o.require(secs < elapsed_limit_s, "runtime " + fmt(secs) + " s exceeds " + fmt(elapsed_limit_s) + " s");
  o.note(std::to_string(reports.size()) + " ops x 20 seeds, worst " + worst_op + " " + fmt(worst));
  return o;
}

// ---------------------------------------------------------------------------
// 2. Shape fidelity on the chosen full configuration

Outcome criterion_shapes() {
  Outcome o;
  signal::ZScoreStats<float> z;
  z.sd_x = z.sd_y = 1;
  ModelBundle bundle = model::build_model(model::slow_paper_config(), model::fast_paper_config(), {"a", "b"},
                                          signal::TransformConfig{}, z, 1000, 1);
  autograd::Graph<float> g;
  autograd::Tensor<float> x({1, 1000, 2});
  Rng rng(3);
  autograd::fill_uniform(x, rng, -0.5f, 0.5f);
  int xs = g.variable(x);
  auto so = bundle.slow.forward(g, xs, autograd::BnMode::infer);
  auto fo = bundle.fast.forward(g, g.variable(std::move(x)), autograd::BnMode::infer);

  const auto& slow_shape = g.value(so.pre_flatten).shape;
  const auto& fast_shape = g.value(fo.pre_flatten).shape;
  o.require(slow_shape == autograd::Shape{1, 947, 256},
            "slow pre-flatten " + autograd::shape_str(slow_shape) + " != [1,947,256]");
  o.require(fast_shape == autograd::Shape{1, 947, 512},
            "fast pre-flatten " + autograd::shape_str(fast_shape) + " != [1,947,512]");
  o.require(g.value(so.embedding).shape == autograd::Shape{1, 128}, "slow embedding not 128-dim");
  o.require(g.value(fo.embedding).shape == autograd::Shape{1, 128}, "fast embedding not 128-dim");

  int cat = autograd::concat(g, {so.embedding, fo.embedding});
  auto jo = bundle.joint.forward(g, cat, autograd::BnMode::infer);
  o.require(g.value(jo.embedding).shape == autograd::Shape{1, 128}, "joint embedding not 128-dim");
  const Index total = g.value(jo.embedding).dim(1) + g.value(fo.embedding).dim(1) + g.value(so.embedding).dim(1);
  o.require(total == 384, "concatenated embedding is " + std::to_string(total) + "-dim, expected 384");
  o.note("pre-flatten 947, embeddings 128/128/128, concatenated 384");
  return o;
}

// ---------------------------------------------------------------------------
// 3. Transform exactness at 64-bit

Outcome criterion_transforms() {
  Outcome o;
  std::mt19937_64 rng(0xace);
  std::uniform_real_distribution<double> wide(-2000, 2000);

  long n_slow = 0;
  for (double c : {0.01, 0.02, 0.04, 0.06}) {
    signal::TransformConfig cfg;
    cfg.c = c;
    signal::VelocitySequence<double> v;
    v.pairs.resize(250000, 2);
    for (Index i = 0; i < v.pairs.rows(); ++i) {
      const double d = wide(rng);
      v.pairs(i, 0) = d;
      v.pairs(i, 1) = -d;
    }
    auto out = signal::transform_slow(v, cfg);
    for (Index i = 0; i < out.rows(); ++i) {
      n_slow += 2;
      if (!(std::abs(out(i, 0)) < 1.0) || !(std::abs(out(i, 1)) < 1.0)) {
        o.require(false, "slow output not strictly inside (-1,1) at c=" + fmt(c));
        break;
      }
      if (std::abs(out(i, 0) + out(i, 1)) > 1e-12) {
        o.require(false, "odd symmetry violated beyond 1e-12 at c=" + fmt(c));
        break;
      }
    }
  }

  signal::TransformConfig cfg;  // v_min = 40
  signal::ZScoreStats<double> st;
  st.mean_x = 47.0;
  st.sd_x = 13.0;
  st.mean_y = -11.0;
  st.sd_y = 6.5;
  const double z0x = (0.0 - st.mean_x) / st.sd_x;
  const double z0y = (0.0 - st.mean_y) / st.sd_y;
  std::uniform_real_distribution<double> near(-85, 85);
  signal::VelocitySequence<double> v;
  const Index n = 1000000;
  v.pairs.resize(n, 2);
  for (Index i = 0; i < n; ++i) {
    v.pairs(i, 0) = near(rng);
    v.pairs(i, 1) = near(rng);
  }
  auto out = signal::transform_fast(v, cfg, st);
  long misclassified = 0;
  for (Index i = 0; i < n; ++i) {
    const double dx = v.pairs(i, 0), dy = v.pairs(i, 1);
    const bool sub = std::sqrt(dx * dx + dy * dy) < cfg.v_min;  // the truncation predicate
    const bool is_truncated = out(i, 0) == z0x && out(i, 1) == z0y;
    if (is_truncated != sub) ++misclassified;
    if (!sub && (out(i, 0) != (dx - st.mean_x) / st.sd_x || out(i, 1) != (dy - st.mean_y) / st.sd_y))
      ++misclassified;
  }
  o.require(misclassified == 0, std::to_string(misclassified) + " of 1e6 samples misclassified by truncation");
  o.note(std::to_string(n_slow) + " slow samples bounded and odd; 1e6 fast samples, 0 misclassified");
  return o;
}

// ---------------------------------------------------------------------------
// Shared synthetic-data helpers

fs::path synth_dataset(const std::string& name, int identities, int sessions, double seconds, bool binocular,
                       std::uint64_t seed) {
  oculosim::SimConfig sim;
  sim.rate_hz = 1000;
  sim.duration_s = seconds;
  sim.identity_count = identities;
  sim.sessions_per_identity = sessions;
  sim.seed = seed;
  sim.binocular = binocular;
  const fs::path dir = work_dir() / name;
  oculosim::make_dataset(sim, oculosim::PopulationSpec{}, dir);
  return dir;
}

std::vector<signal::InputWindow<float>> windows_of(const pipeline::LoadedSequence& seq, const ModelBundle& b,
                                                   Index stride, Index max_start = -1) {
  auto ws = pipeline::sequence_windows(seq, b.transform, b.zstats, b.window_length, stride);
  if (max_start >= 0) {
    std::erase_if(ws, [&](const auto& w) { return w.start > max_start; });
  }
  return ws;
}

// ---------------------------------------------------------------------------
// 4 + 7 + 8. Overfit oracle, freezing contract, checkpoint round-trip

struct OverfitResult {
  Outcome overfit;
  Outcome freezing;
  Outcome checkpoint;
};

OverfitResult criterion_overfit_freeze_checkpoint(double elapsed_limit_s) {
  OverfitResult res;
  Outcome& o = res.overfit;
  const auto t0 = Clock::now();

  const fs::path dir = synth_dataset("overfit_data", 2, 1, 17.0, false, 0x0f1);
  auto ds = pipeline::load_dataset(dir, 1000);
  auto stats = pipeline::fit_stats(ds.sequences, signal::TransformConfig{});
  ModelBundle bundle = model::build_model(model::slow_reduced_config(), model::fast_reduced_config(),
                                          pipeline::subjects_of(ds), signal::TransformConfig{}, stats, 1000, 41);

  std::vector<signal::InputWindow<float>> windows;
  for (const auto& seq : ds.sequences) {
    auto ws = windows_of(seq, bundle, 1000);
    windows.insert(windows.end(), ws.begin(), ws.end());
  }
  windows.resize(32);
  o.require(windows.size() == 32, "expected 32 windows");

  model::TrainSchedule sched;
  sched.lr = 1e-3f;
  sched.batch_size = 64;
  sched.max_epochs = 200;
  sched.holdout_fraction = 0;
  sched.stop_at_train_accuracy = 1.0;
  sched.seed = 11;

  auto r_slow = model::pretrain_subnet(bundle, model::Branch::slow, windows, sched);
  auto r_fast = model::pretrain_subnet(bundle, model::Branch::fast, windows, sched);
  o.require(r_slow.final_train_accuracy == 1.0,
            "slow subnet reached " + fmt(r_slow.final_train_accuracy) + " after " +
                std::to_string(r_slow.epochs.size()) + " epochs");
  o.require(r_fast.final_train_accuracy == 1.0,
            "fast subnet reached " + fmt(r_fast.final_train_accuracy));

  const std::string hash_before = model::subnet_parameter_hash(bundle);
  model::TrainSchedule joint_sched = sched;
  joint_sched.lr = 1e-4f;
  joint_sched.max_epochs = 200;
  auto r_joint = model::train_joint(bundle, windows, joint_sched);
  o.require(r_joint.final_train_accuracy == 1.0, "joint reached " + fmt(r_joint.final_train_accuracy));
  const std::string hash_after = model::subnet_parameter_hash(bundle);

  model::MatXf probs = model::classify_batch(bundle, windows);
  long correct = 0;
  for (Index i = 0; i < probs.rows(); ++i) {
    Index arg = 0;
    probs.row(i).maxCoeff(&arg);
    if (bundle.labels[static_cast<size_t>(arg)] == *windows[static_cast<size_t>(i)].label) ++correct;
  }
  o.require(correct == static_cast<long>(windows.size()), "inference-mode classification of training windows: " +
                                                              std::to_string(correct) + "/32 correct");
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  o.require(secs < elapsed_limit_s, "runtime " + fmt(secs) + " s exceeds " + fmt(elapsed_limit_s) + " s");
  o.note("slow " + std::to_string(r_slow.epochs.size()) + " / fast " + std::to_string(r_fast.epochs.size()) +
         " / joint " + std::to_string(r_joint.epochs.size()) + " epochs to 100%");

  // 7. Freezing contract.
  res.freezing.require(hash_before == hash_after, "subnet SHA-256 changed across joint training");
  res.freezing.note("sha256 " + hash_before.substr(0, 12) + "... unchanged");

  // 8. Checkpoint round-trip on 100 random windows.
  Outcome& c = res.checkpoint;
  const fs::path ckpt = work_dir() / "acceptance.eyid";
  model::save_checkpoint(bundle, ckpt);
  ModelBundle reloaded = model::load_checkpoint(ckpt);

  Rng wrng(77);
  std::vector<signal::InputWindow<float>> random_windows(100);
  std::normal_distribution<float> fastn(0.0f, 1.5f);
  std::uniform_real_distribution<float> slown(-0.99f, 0.99f);
  for (auto& w : random_windows) {
    w.slow.resize(1000, 2);
    w.fast.resize(1000, 2);
    for (Index t = 0; t < 1000; ++t)
      for (int ch = 0; ch < 2; ++ch) {
        w.slow(t, ch) = slown(wrng);
        w.fast(t, ch) = fastn(wrng);
      }
  }
  model::MatXf pa = model::classify_batch(bundle, random_windows);
  model::MatXf pb = model::classify_batch(reloaded, random_windows);
  c.require((pa - pb).cwiseAbs().maxCoeff() == 0.0f, "reloaded bundle diverges from original on random windows");

  auto bytes = slurp(ckpt);
  {
    std::string bad = bytes;
    bad[bad.size() - 777] ^= 0x10;
    const fs::path p = work_dir() / "corrupt.eyid";
    std::ofstream(p, std::ios::binary).write(bad.data(), static_cast<std::streamsize>(bad.size()));
    try {
      model::load_checkpoint(p);
      c.require(false, "corrupted byte not rejected");
    } catch (const Error& e) {
      c.require(e.code() == ErrorCode::checkpoint_checksum,
                std::string("corrupted byte raised ") + to_string(e.code()) + ", expected checkpoint_checksum");
    }
  }
  {
    std::string bad = bytes;
    bad[4] = 9;
    const fs::path p = work_dir() / "version.eyid";
    std::ofstream(p, std::ios::binary).write(bad.data(), static_cast<std::streamsize>(bad.size()));
    try {
      model::load_checkpoint(p);
      c.require(false, "foreign version not rejected");
    } catch (const Error& e) {
      c.require(e.code() == ErrorCode::checkpoint_version,
                std::string("version mismatch raised ") + to_string(e.code()) + ", expected checkpoint_version");
    }
  }
  c.note("100 windows bit-identical; checksum and version errors distinct");
  return res;
}

// ---------------------------------------------------------------------------
// 5. Desk-scale identification trends

Outcome criterion_desk_scale(double elapsed_limit_s) {
  Outcome o;
  const auto t0 = Clock::now();

  const fs::path dir = synth_dataset("desk_data", 10, 2, 60.0, true, 0x5ca1e);
  auto ds = pipeline::load_dataset(dir, 1000);

  // Both eyes of the training session are separate training instances.
  std::vector<pipeline::LoadedSequence> train_seqs;
  for (const auto& seq : ds.sequences)
    if (seq.session_id == "s00") train_seqs.push_back(seq);
  o.require(train_seqs.size() == 20, "expected 20 training sequences (10 identities x 2 eyes)");

  auto stats = pipeline::fit_stats(train_seqs, signal::TransformConfig{});
  ModelBundle bundle =
      model::build_model(model::slow_reduced_config(), model::fast_reduced_config(),
                         pipeline::subjects_of(ds), signal::TransformConfig{}, stats, 1000, 0x5ca1e);

  std::vector<signal::InputWindow<float>> train_windows;
  for (const auto& seq : train_seqs) {
    auto ws = windows_of(seq, bundle, 1000);
    train_windows.insert(train_windows.end(), ws.begin(), ws.end());
  }
  o.note(std::to_string(train_windows.size()) + " train windows");

  model::TrainSchedule sched;
  sched.lr = 1e-3f;
  sched.batch_size = 64;
  sched.max_epochs = 50;
  sched.patience = 10;
  sched.holdout_fraction = 0.1;
  sched.seed = 0x5ca1e;

  auto r_slow = model::pretrain_subnet(bundle, model::Branch::slow, train_windows, sched);
  auto r_fast = model::pretrain_subnet(bundle, model::Branch::fast, train_windows, sched);
  model::TrainSchedule joint_sched = sched;
  joint_sched.lr = 1e-4f;
  auto r_joint = model::train_joint(bundle, train_windows, joint_sched);
  o.note("epochs slow/fast/joint " + std::to_string(r_slow.epochs.size()) + "/" +
         std::to_string(r_fast.epochs.size()) + "/" + std::to_string(r_joint.epochs.size()));

  // Held-out evaluation on the unseen session, both eyes, windows inside the
  // first 10 seconds at stride 250.
  const std::vector<double> durations{1, 2, 5, 10};
  const Index max_start = 10000 - bundle.window_length;
  struct EyeScores {
    std::vector<eval::SequenceScores> joint, slow, fast;
  };
  EyeScores left, right;
  for (const auto& seq : ds.sequences) {
    if (seq.session_id != "s01") continue;
    auto ws = windows_of(seq, bundle, 250, max_start);
    if (ws.empty()) continue;
    eval::SequenceScores sc;
    sc.label = seq.subject_id;
    sc.sequence_id = seq.sequence_id;
    for (const auto& w : ws) sc.window_starts.push_back(w.start);
    EyeScores& side = seq.eye == signal::Eye::left ? left : right;
    sc.probs = model::classify_batch(bundle, ws);
    side.joint.push_back(sc);
    sc.probs = model::classify_subnet_batch(bundle, model::Branch::slow, ws);
    side.slow.push_back(sc);
    sc.probs = model::classify_subnet_batch(bundle, model::Branch::fast, ws);
    side.fast.push_back(sc);
  }
  o.require(left.joint.size() == 10 && right.joint.size() == 10, "expected 10 test sequences per eye");

  auto acc_at = [&](const std::vector<eval::SequenceScores>& scores) {
    return eval::accuracy_vs_duration(scores, durations, bundle.window_length, 1000, bundle.labels);
  };

  auto joint_l = acc_at(left.joint);
  const double acc10 = joint_l.back().accuracy;
  o.require(acc10 >= 0.90, "held-out joint accuracy at 10 s is " + fmt(acc10) + " < 0.90");
  for (size_t i = 1; i < joint_l.size(); ++i)
    o.require(joint_l[i].accuracy >= joint_l[i - 1].accuracy - 1e-12,
              "accuracy not monotone: " + fmt(joint_l[i - 1].accuracy) + " at " + fmt(durations[i - 1]) +
                  " s vs " + fmt(joint_l[i].accuracy) + " at " + fmt(durations[i]) + " s");

  const double slow10 = acc_at(left.slow).back().accuracy;
  const double fast10 = acc_at(left.fast).back().accuracy;
  o.require(acc10 >= slow10 && acc10 >= fast10,
            "joint " + fmt(acc10) + " not >= subnets (slow " + fmt(slow10) + ", fast " + fmt(fast10) + ")");

  // Binocular fusion against the worse monocular eye, joint head at 10 s.
  const double right10 = acc_at(right.joint).back().accuracy;
  std::vector<eval::SequenceScores> fused = left.joint;
  for (auto& sc : fused) {
    const std::string key = sc.sequence_id.substr(0, sc.sequence_id.find("_L#"));
    bool found = false;
    for (const auto& rsc : right.joint) {
      if (rsc.sequence_id.substr(0, rsc.sequence_id.find("_R#")) != key) continue;
      sc.probs = eval::binocular_fuse(sc.probs, rsc.probs);
      found = true;
      break;
    }
    if (!found) o.require(false, "no right-eye partner for " + sc.sequence_id);
  }
  const double fused10 = acc_at(fused).back().accuracy;
  o.require(fused10 >= std::min(acc10, right10) - 1e-12,
            "fused " + fmt(fused10) + " below worse monocular eye (L " + fmt(acc10) + ", R " + fmt(right10) + ")");

  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  o.require(secs < elapsed_limit_s, "runtime " + fmt(secs) + " s exceeds " + fmt(elapsed_limit_s) + " s");
  o.note("acc@{1,2,5,10}s = " + fmt(joint_l[0].accuracy) + "/" + fmt(joint_l[1].accuracy) + "/" +
         fmt(joint_l[2].accuracy) + "/" + fmt(acc10) + "; slow " + fmt(slow10) + ", fast " + fmt(fast10) +
         "; L/R/fused " + fmt(acc10) + "/" + fmt(right10) + "/" + fmt(fused10));
  return o;
}

// ---------------------------------------------------------------------------
// 6. ROC / AUC / EER oracle equivalence

Outcome criterion_roc_oracle() {
  Outcome o;
  {
    const double g[] = {0.9};
    const double i[] = {0.1};
    eval::RocCurve c = eval::roc(g, i);
    o.require(eval::auc(c) == 1.0, "hand case AUC != 1");
    o.require(eval::eer(c) == 0.0, "hand case EER != 0");
  }
  {
    const double g[] = {0.6, 0.4};
    const double i[] = {0.5};
    eval::RocCurve c = eval::roc(g, i);
    o.require(std::abs(eval::auc(c) - 0.5) < 1e-12, "hand case AUC != 0.5");
    o.require(std::abs(eval::eer(c) - 0.5) < 1e-12, "hand case EER != 0.5");
  }

  std::uint64_t st = 0xb10c;
  long checked = 0;
  for (int trial = 0; trial < 1000 && o.pass; ++trial) {
    const size_t ng = 1 + static_cast<size_t>(oracle::unit_double(st) * 199);
    const size_t ni = 1 + static_cast<size_t>(oracle::unit_double(st) * 199);
    std::vector<double> g(ng), i(ni);
    const bool quantize = trial % 3 == 0;
    for (auto& x : g) {
      x = 2.0 * oracle::unit_double(st) - 1.0;
      if (quantize) x = std::round(x * 8.0) / 8.0;
    }
    for (auto& x : i) {
      x = 2.0 * oracle::unit_double(st) - 1.0;
      if (quantize) x = std::round(x * 8.0) / 8.0;
    }
    eval::RocCurve c = eval::roc(g, i);
    for (const auto& p : c.points) {
      const auto ref = oracle::roc_point_at(p.threshold, g, i);
      if (p.fpr != ref.fpr || p.tpr != ref.tpr) {
        o.require(false, "curve point disagrees with brute force at trial " + std::to_string(trial));
        break;
      }
    }
    if (std::abs(eval::auc(c) - oracle::auc_ref(g, i)) > 1e-10)
      o.require(false, "AUC disagrees with pairwise oracle at trial " + std::to_string(trial));
    if (std::abs(eval::eer(c) - oracle::eer_ref(g, i)) > 1e-10)
      o.require(false, "EER disagrees with oracle at trial " + std::to_string(trial));
    ++checked;
  }
  o.note(std::to_string(checked) + " random multisets checked");
  return o;
}

// ---------------------------------------------------------------------------
// 9. CLI train determinism

Outcome criterion_determinism() {
  Outcome o;
  const char* cli = std::getenv("EYEDENT_CLI");
  if (!cli) {
    o.require(false, "EYEDENT_CLI not set");
    return o;
  }
  const fs::path data = work_dir() / "det_data";
  const fs::path a = work_dir() / "det_run_a";
  const fs::path b = work_dir() / "det_run_b";
  auto sh = [&](const std::string& cmd) {
    const std::string full = std::string(cli) + " " + cmd + " > /dev/null 2>&1";
    return std::system(full.c_str()) == 0;
  };
  o.require(sh("synth --out " + data.string() + " --identities 2 --sessions 1 --seconds 8 --seed 4"),
            "synth failed");
  const std::string train_args = " --profile reduced --epochs 3 --batch 16 --seed 4";
  o.require(sh("train --data " + data.string() + " --out " + a.string() + train_args), "first train failed");
  o.require(sh("train --data " + data.string() + " --out " + b.string() + train_args), "second train failed");
  if (o.pass) {
    o.require(slurp(a / "checkpoint.eyid") == slurp(b / "checkpoint.eyid"), "checkpoints differ");
    o.require(slurp(a / "training_log.json") == slurp(b / "training_log.json"), "training logs differ");
    o.require(slurp(a / "effective_config.json") == slurp(b / "effective_config.json"),
              "effective configs differ");
    o.note("checkpoint " + std::to_string(slurp(a / "checkpoint.eyid").size()) + " bytes byte-identical");
  }
  return o;
}

}  // namespace

int main() {
  struct Entry {
    int id;
    std::string name;
    std::function<Outcome()> run;
  };

  OverfitResult shared;  // criteria 4, 7 and 8 share one training run
  bool shared_ready = false;
  auto ensure_shared = [&] {
    if (!shared_ready) {
      shared = criterion_overfit_freeze_checkpoint(300.0);
      shared_ready = true;
    }
  };

  std::vector<Entry> entries = {
      {1, "gradient correctness (< 1e-4, 20 seeds, < 1 min)", [] { return criterion_gradients(60.0); }},
      {2, "shape fidelity (947 temporal, 128/128/128 embeddings)", [] { return criterion_shapes(); }},
      {3, "transform exactness at 64-bit", [] { return criterion_transforms(); }},
      {4, "overfit oracle (reduced profile, 32 windows, < 5 min)",
       [&] {
         ensure_shared();
         return shared.overfit;
       }},
      {5, "desk-scale identification trends (< 30 min)", [] { return criterion_desk_scale(1800.0); }},
      {6, "roc/auc/eer oracle equivalence (1000 multisets)", [] { return criterion_roc_oracle(); }},
      {7, "freezing contract (subnet SHA-256 unchanged)",
       [&] {
         ensure_shared();
         return shared.freezing;
       }},
      {8, "checkpoint round-trip and corruption rejection",
       [&] {
         ensure_shared();
         return shared.checkpoint;
       }},
      {9, "train determinism (byte-identical outputs)", [] { return criterion_determinism(); }},
  };

  bool all_pass = true;
  for (auto& e : entries) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = e.run();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail = std::string("exception: ") + ex.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("%s  criterion %d: %s [%0.1f s]%s%s\n", o.pass ? "PASS" : "FAIL", e.id, e.name.c_str(), secs,
                o.detail.empty() ? "" : " - ", o.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && o.pass;
  }
  std::printf("%s\n", all_pass ? "ACCEPTANCE: all criteria passed" : "ACCEPTANCE: FAILURES PRESENT");
  return all_pass ? 0 : 1;
}
