// SPDX-License-Identifier: Apache-2.0
//
// Run configuration shared by the CLI commands. JSON config files follow the
// schema documented in the README; unknown keys are rejected, and values are
// checked against the validated hyperparameter domains unless the caller
// opts out with unsafe_hparams.
#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "eyedent/model.hpp"
#include "eyedent/oculosim.hpp"

namespace eyedent::config {

using model::Index;

struct ProtocolSpec {
  int train_count = 6;
  int enrolled_count = 3;
  int impostor_count = 1;
  int iterations = 1;
};

struct RunConfig {
  std::uint64_t seed = 0;
  double rate_hz = 1000;

  signal::TransformConfig transform;  // c = 0.02, v_min = 40

  Index window_length = 1000;
  Index train_stride = 1000;
  Index eval_stride = 250;

  std::string profile = "paper";  // paper | reduced
  Index pool_stride_override = 0; // 0 keeps the profile's value
  std::vector<model::ConvBlockConfig> slow_blocks_override;  // empty keeps profile
  std::vector<model::ConvBlockConfig> fast_blocks_override;

  double lr_subnet = 1e-3;
  double lr_joint = 1e-4;
  Index batch_size = 64;
  int max_epochs = 100;
  int patience = 10;
  double holdout_fraction = 0.1;
  bool amsgrad = false;

  std::vector<double> durations{1, 2, 5, 10, 20, 40, 90};
  ProtocolSpec protocol;

  double sim_duration_s = 60;
  int sim_identities = 10;
  int sim_sessions = 2;
  bool sim_binocular = false;
  double separation = 1.0;

  bool unsafe_hparams = false;

  model::SubnetConfig slow_config() const;
  model::SubnetConfig fast_config() const;
  /// Domain checks (transform and architecture values against the validated
  /// search space) plus structural checks. Structural violations always
  /// throw; domain violations are skipped when unsafe_hparams is set.
  void validate() const;
};

/// Strict parse: unknown keys anywhere are a validation error.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config_file(const std::filesystem::path& path);
/// Effective-config echo, suitable for provenance files.
nlohmann::json config_to_json(const RunConfig& c);

}  // namespace eyedent::config
