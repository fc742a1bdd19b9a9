// SPDX-License-Identifier: Apache-2.0
#include "eyedent/config.hpp"

#include <fstream>
#include <set>

namespace eyedent::config {
namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::validation, "config: " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key))
      throw Error(ErrorCode::validation, "config: unknown key '" + where + key + "'");
  }
}

std::vector<model::ConvBlockConfig> blocks_from_json(const nlohmann::json& j) {
  std::vector<model::ConvBlockConfig> blocks;
  for (const auto& b : j) blocks.push_back({b.at(0).get<Index>(), b.at(1).get<Index>()});
  return blocks;
}

bool in_domain(Index v, std::initializer_list<Index> domain) {
  for (Index d : domain)
    if (v == d) return true;
  return false;
}

void check_arch_domains(const std::vector<model::ConvBlockConfig>& blocks, const char* which) {
  for (size_t i = 0; i < blocks.size(); ++i) {
    if (!in_domain(blocks[i].kernel, {3, 5, 7, 9}))
      throw Error(ErrorCode::validation, std::string("config: ") + which + " block " + std::to_string(i) +
                                             " kernel " + std::to_string(blocks[i].kernel) +
                                             " outside the validated domain {3,5,7,9}");
    if (!in_domain(blocks[i].filters, {32, 64, 128, 256, 512}))
      throw Error(ErrorCode::validation, std::string("config: ") + which + " block " + std::to_string(i) +
                                             " filter count " + std::to_string(blocks[i].filters) +
                                             " outside the validated domain {32,64,128,256,512}");
  }
}

}  // namespace

model::SubnetConfig RunConfig::slow_config() const {
  model::SubnetConfig c = profile == "reduced" ? model::slow_reduced_config() : model::slow_paper_config();
  if (!slow_blocks_override.empty()) c.conv_blocks = slow_blocks_override;
  if (pool_stride_override > 0) c.pool_stride = pool_stride_override;
  return c;
}

model::SubnetConfig RunConfig::fast_config() const {
  model::SubnetConfig c = profile == "reduced" ? model::fast_reduced_config() : model::fast_paper_config();
  if (!fast_blocks_override.empty()) c.conv_blocks = fast_blocks_override;
  if (pool_stride_override > 0) c.pool_stride = pool_stride_override;
  return c;
}

void RunConfig::validate() const {
  if (profile != "paper" && profile != "reduced")
    throw Error(ErrorCode::validation, "config: profile must be 'paper' or 'reduced', got '" + profile + "'");
  if (rate_hz <= 0) throw Error(ErrorCode::validation, "config: rate_hz must be positive");
  if (window_length < 1 || train_stride < 1 || eval_stride < 1)
    throw Error(ErrorCode::validation, "config: window length and strides must be >= 1");
  if (batch_size < 2) throw Error(ErrorCode::validation, "config: batch_size must be >= 2");
  if (max_epochs < 0) throw Error(ErrorCode::validation, "config: max_epochs must be >= 0");
  if (patience < 1) throw Error(ErrorCode::validation, "config: patience must be >= 1");
  if (holdout_fraction < 0 || holdout_fraction > 0.9)
    throw Error(ErrorCode::validation, "config: holdout_fraction must lie in [0, 0.9]");
  if (!(lr_subnet > 0) || !(lr_joint > 0))
    throw Error(ErrorCode::validation, "config: learning rates must be positive");
  for (double d : durations)
    if (!(d > 0)) throw Error(ErrorCode::validation, "config: durations must be positive");
  if (protocol.train_count < 1 || protocol.enrolled_count < 1 || protocol.impostor_count < 0 ||
      protocol.iterations < 1)
    throw Error(ErrorCode::validation, "config: protocol counts must be positive");
  if (sim_duration_s <= 1) throw Error(ErrorCode::validation, "config: sim duration must exceed 1 s");
  if (sim_identities < 1 || sim_sessions < 1)
    throw Error(ErrorCode::validation, "config: sim counts must be >= 1");
  if (!(separation > 0) || separation > 1)
    throw Error(ErrorCode::validation, "config: separation must lie in (0, 1]");

  // Structural constraints always hold.
  slow_config().validate();
  fast_config().validate();

  if (!unsafe_hparams) {
    transform.validate();
    check_arch_domains(slow_config().conv_blocks, "slow");
    check_arch_domains(fast_config().conv_blocks, "fast");
  }
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  check_keys(j, {"seed", "rate_hz", "transform", "window", "model", "train", "eval", "sim", "unsafe_hparams"},
             "");
  c.seed = j.value("seed", c.seed);
  c.rate_hz = j.value("rate_hz", c.rate_hz);
  c.unsafe_hparams = j.value("unsafe_hparams", c.unsafe_hparams);
  if (j.contains("transform")) {
    const auto& t = j["transform"];
    check_keys(t, {"c", "v_min"}, "transform.");
    c.transform.c = t.value("c", c.transform.c);
    c.transform.v_min = t.value("v_min", c.transform.v_min);
  }
  if (j.contains("window")) {
    const auto& w = j["window"];
    check_keys(w, {"length", "train_stride", "eval_stride"}, "window.");
    c.window_length = w.value("length", c.window_length);
    c.train_stride = w.value("train_stride", c.train_stride);
    c.eval_stride = w.value("eval_stride", c.eval_stride);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, {"profile", "pool_stride", "slow_conv_blocks", "fast_conv_blocks"}, "model.");
    c.profile = m.value("profile", c.profile);
    c.pool_stride_override = m.value("pool_stride", c.pool_stride_override);
    if (m.contains("slow_conv_blocks")) c.slow_blocks_override = blocks_from_json(m["slow_conv_blocks"]);
    if (m.contains("fast_conv_blocks")) c.fast_blocks_override = blocks_from_json(m["fast_conv_blocks"]);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t, {"lr_subnet", "lr_joint", "batch_size", "max_epochs", "patience", "holdout_fraction", "amsgrad"},
               "train.");
    c.lr_subnet = t.value("lr_subnet", c.lr_subnet);
    c.lr_joint = t.value("lr_joint", c.lr_joint);
    c.batch_size = t.value("batch_size", c.batch_size);
    c.max_epochs = t.value("max_epochs", c.max_epochs);
    c.patience = t.value("patience", c.patience);
    c.holdout_fraction = t.value("holdout_fraction", c.holdout_fraction);
    c.amsgrad = t.value("amsgrad", c.amsgrad);
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_keys(e, {"durations", "protocol"}, "eval.");
    if (e.contains("durations")) c.durations = e["durations"].get<std::vector<double>>();
    if (e.contains("protocol")) {
      const auto& p = e["protocol"];
      check_keys(p, {"train", "enrolled", "impostors", "iterations"}, "eval.protocol.");
      c.protocol.train_count = p.value("train", c.protocol.train_count);
      c.protocol.enrolled_count = p.value("enrolled", c.protocol.enrolled_count);
      c.protocol.impostor_count = p.value("impostors", c.protocol.impostor_count);
      c.protocol.iterations = p.value("iterations", c.protocol.iterations);
    }
  }
  if (j.contains("sim")) {
    const auto& s = j["sim"];
    check_keys(s, {"duration_s", "identities", "sessions", "binocular", "separation"}, "sim.");
    c.sim_duration_s = s.value("duration_s", c.sim_duration_s);
    c.sim_identities = s.value("identities", c.sim_identities);
    c.sim_sessions = s.value("sessions", c.sim_sessions);
    c.sim_binocular = s.value("binocular", c.sim_binocular);
    c.separation = s.value("separation", c.separation);
  }
  return c;
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, "config file " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["rate_hz"] = c.rate_hz;
  j["unsafe_hparams"] = c.unsafe_hparams;
  j["transform"] = {{"c", c.transform.c}, {"v_min", c.transform.v_min}};
  j["window"] = {{"length", c.window_length}, {"train_stride", c.train_stride}, {"eval_stride", c.eval_stride}};
  nlohmann::json slow_blocks = nlohmann::json::array();
  for (const auto& b : c.slow_config().conv_blocks) slow_blocks.push_back({b.kernel, b.filters});
  nlohmann::json fast_blocks = nlohmann::json::array();
  for (const auto& b : c.fast_config().conv_blocks) fast_blocks.push_back({b.kernel, b.filters});
  j["model"] = {{"profile", c.profile},
                {"pool_stride", c.slow_config().pool_stride},
                {"slow_conv_blocks", slow_blocks},
                {"fast_conv_blocks", fast_blocks}};
  j["train"] = {{"lr_subnet", c.lr_subnet},     {"lr_joint", c.lr_joint},
                {"batch_size", c.batch_size},   {"max_epochs", c.max_epochs},
                {"patience", c.patience},       {"holdout_fraction", c.holdout_fraction},
                {"amsgrad", c.amsgrad}};
  j["eval"] = {{"durations", c.durations},
               {"protocol",
                {{"train", c.protocol.train_count},
                 {"enrolled", c.protocol.enrolled_count},
                 {"impostors", c.protocol.impostor_count},
                 {"iterations", c.protocol.iterations}}}};
  j["sim"] = {{"duration_s", c.sim_duration_s},
              {"identities", c.sim_identities},
              {"sessions", c.sim_sessions},
              {"binocular", c.sim_binocular},
              {"separation", c.separation}};
  return j;
}

}  // namespace eyedent::config
