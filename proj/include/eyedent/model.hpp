// SPDX-License-Identifier: Apache-2.0
//
// The dual-subnet network: slow and fast branches of nine conv/bn/relu/pool
// blocks plus fully connected layers, joint layers over the concatenated
// subnet embeddings, the three-stage training protocol, and inference
// entry points. Inference always runs per sample in batch-norm inference
// mode, so a window's outputs do not depend on batch composition.
#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eyedent/adam.hpp"
#include "eyedent/autograd.hpp"
#include "eyedent/gaze_signal.hpp"
#include "eyedent/random.hpp"

namespace eyedent::model {

using autograd::BatchNormState;
using autograd::BnMode;
using autograd::Graph;
using autograd::Index;
using autograd::Parameter;
using autograd::Shape;
using Tensorf = autograd::Tensor<float>;
using MatXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvBlockConfig {
  Index kernel = 3;
  Index filters = 32;
};

/// Architecture of one subnet. Kernel sizes must be non-increasing and filter
/// counts non-decreasing across blocks.
struct SubnetConfig {
  std::vector<ConvBlockConfig> conv_blocks;
  Index fc1_size = 256;
  Index fc2_size = 128;
  Index embedding_size = 128;
  Index pool_size = 2;
  Index pool_stride = 1;

  void validate() const;
  /// Temporal length after the conv/pool stack on `input_len` samples.
  Index temporal_length(Index input_len) const;
};

/// Chosen configuration: kernels 9,9,9,5,5,5,5,3,3 with 128x3, 256x4, 256x2
/// filters.
SubnetConfig slow_paper_config();
/// Same kernels with 32x3, 512x4, 512x2 filters.
SubnetConfig fast_paper_config();
/// Desk-scale profile: six blocks, filters quartered (floored at 32),
/// stride-2 pooling.
SubnetConfig slow_reduced_config();
SubnetConfig fast_reduced_config();

void to_json(nlohmann::json& j, const SubnetConfig& c);
void from_json(const nlohmann::json& j, SubnetConfig& c);

struct BnLayer {
  Parameter<float> gamma, beta;
  BatchNormState<float> state;
};

struct ConvBlock {
  Parameter<float> w, b;
  BnLayer bn;
};

struct DenseLayer {
  Parameter<float> w, b;
};

struct ForwardOut {
  int embedding = -1;    // node id of the embedding layer output
  int logits = -1;       // node id of the softmax-head input
  int pre_flatten = -1;  // node id after the conv/pool stack (subnets only)
};

/// One branch: conv/bn/relu/pool blocks, two fc layers with bn+relu, an
/// embedding fc with relu, and a softmax head used during (pre)training.
struct Subnet {
  SubnetConfig cfg;
  Index in_channels = 2;
  std::vector<ConvBlock> blocks;
  DenseLayer fc1;
  BnLayer fc1_bn;
  DenseLayer fc2;
  BnLayer fc2_bn;
  DenseLayer emb;
  DenseLayer head;

  /// mode == train registers parameters for gradients and uses batch
  /// statistics; infer freezes everything and uses running statistics.
  ForwardOut forward(Graph<float>& g, int x, BnMode mode);
  void collect_params(std::vector<Parameter<float>*>& out);
  /// Parameters plus batch-norm running statistics, in serialization order.
  void collect_tensors(std::vector<std::pair<std::string, Tensorf*>>& out, const std::string& prefix);
};

/// Joint layers over the concatenated subnet embeddings.
struct JointNet {
  DenseLayer fc1;
  BnLayer fc1_bn;
  DenseLayer emb;
  BnLayer emb_bn;
  DenseLayer head;

  ForwardOut forward(Graph<float>& g, int x, BnMode mode);
  void collect_params(std::vector<Parameter<float>*>& out);
  void collect_tensors(std::vector<std::pair<std::string, Tensorf*>>& out, const std::string& prefix);
};

/// Final matching representation: joint, fast and slow embeddings
/// concatenated in that order, with the Euclidean norm cached.
struct EmbeddingVector {
  Eigen::VectorXf values;
  float norm = 0;
};

/// Everything learned plus the preprocessing state needed to reproduce
/// inference: both subnets, the joint layers, z-score statistics, transform
/// config, the class-label table and training metadata.
struct ModelBundle {
  signal::TransformConfig transform;
  signal::ZScoreStats<float> zstats;
  Index window_length = 1000;
  std::vector<std::string> labels;  // class index -> subject id
  Subnet slow;
  Subnet fast;
  JointNet joint;
  bool slow_trained = false;
  bool fast_trained = false;
  bool joint_trained = false;
  nlohmann::json train_meta = nlohmann::json::object();

  bool fully_trained() const { return slow_trained && fast_trained && joint_trained; }
  int class_index(const std::string& label) const;
  /// All tensors in checkpoint order.
  std::vector<std::pair<std::string, Tensorf*>> named_tensors();
  /// Slow+fast tensors only; hashed for the freezing contract.
  std::vector<std::pair<std::string, Tensorf*>> subnet_tensors();
};

/// Construct an untrained bundle. Weights are fan-in-scaled uniform, biases
/// zero, batch-norm gamma 1 / beta 0; all draws come from `seed`.
ModelBundle build_model(const SubnetConfig& slow_cfg, const SubnetConfig& fast_cfg,
                        std::vector<std::string> labels, const signal::TransformConfig& transform,
                        const signal::ZScoreStats<float>& zstats, Index window_length, std::uint64_t seed,
                        bool init_weights = true);

/// SHA-256 over the raw bytes of both subnets' parameters and running
/// statistics, in serialization order.
std::string subnet_parameter_hash(ModelBundle& bundle);

// ---------------------------------------------------------------------------
// Training

struct TrainSchedule {
  double lr = 1e-3;
  Index batch_size = 64;
  int max_epochs = 100;
  int patience = 10;
  double holdout_fraction = 0.1;
  /// Stop once training accuracy reaches this value; > 1 disables.
  double stop_at_train_accuracy = 2.0;
  std::uint64_t seed = 0;
  bool amsgrad = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  double val_accuracy = 0;  // NaN when no holdout split
};

struct StageResult {
  std::vector<EpochRecord> epochs;
  double best_val_accuracy = 0;
  int best_epoch = -1;
  double final_train_accuracy = 0;
};

enum class Branch { slow, fast };

/// Stage 1/2: cross-entropy training of one subnet on its view of the
/// windows. Early stopping on held-out accuracy with the schedule's patience;
/// the best-epoch parameters are restored.
StageResult pretrain_subnet(ModelBundle& bundle, Branch branch,
                            std::span<const signal::InputWindow<float>> windows, const TrainSchedule& schedule);

/// Stage 3: subnets frozen (weights and running statistics), joint layers
/// trained on the cached concatenated subnet embeddings. Verifies that the
/// frozen-parameter hash is unchanged.
StageResult train_joint(ModelBundle& bundle, std::span<const signal::InputWindow<float>> windows,
                        const TrainSchedule& schedule);

// ---------------------------------------------------------------------------
// Inference

/// Joint-head class probabilities for a batch of windows; rows sum to 1.
MatXf classify_batch(ModelBundle& bundle, std::span<const signal::InputWindow<float>> windows);
Eigen::VectorXf classify(ModelBundle& bundle, const signal::InputWindow<float>& window);

/// Class probabilities from one subnet's own softmax head.
MatXf classify_subnet_batch(ModelBundle& bundle, Branch branch,
                            std::span<const signal::InputWindow<float>> windows);

/// 384-dim embeddings (joint, fast, slow concatenation).
std::vector<EmbeddingVector> embed_batch(ModelBundle& bundle, std::span<const signal::InputWindow<float>> windows);
EmbeddingVector embed(ModelBundle& bundle, const signal::InputWindow<float>& window);

}  // namespace eyedent::model
