// SPDX-License-Identifier: Apache-2.0
#include "eyedent/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "eyedent/sha256.hpp"

namespace eyedent::model {

// ---------------------------------------------------------------------------
// Configs

void SubnetConfig::validate() const {
  if (conv_blocks.empty()) throw Error(ErrorCode::validation, "subnet config: needs at least one conv block");
  for (size_t i = 0; i < conv_blocks.size(); ++i) {
    if (conv_blocks[i].kernel < 1 || conv_blocks[i].filters < 1)
      throw Error(ErrorCode::validation, "subnet config: block " + std::to_string(i) +
                                             " has non-positive kernel or filter count");
    if (i > 0 && conv_blocks[i].kernel > conv_blocks[i - 1].kernel)
      throw Error(ErrorCode::validation,
                  "subnet config: kernel sizes must be non-increasing across blocks, block " + std::to_string(i) +
                      " has k=" + std::to_string(conv_blocks[i].kernel) + " after k=" +
                      std::to_string(conv_blocks[i - 1].kernel));
    if (i > 0 && conv_blocks[i].filters < conv_blocks[i - 1].filters)
      throw Error(ErrorCode::validation,
                  "subnet config: filter counts must be non-decreasing across blocks, block " + std::to_string(i) +
                      " has f=" + std::to_string(conv_blocks[i].filters) + " after f=" +
                      std::to_string(conv_blocks[i - 1].filters));
  }
  if (fc1_size < 1 || fc2_size < 1 || embedding_size < 1)
    throw Error(ErrorCode::validation, "subnet config: fully connected sizes must be positive");
  if (pool_size < 1 || pool_stride < 1)
    throw Error(ErrorCode::validation, "subnet config: pool size and stride must be positive");
}

Index SubnetConfig::temporal_length(Index input_len) const {
  Index len = input_len;
  for (size_t i = 0; i < conv_blocks.size(); ++i) {
    if (len < conv_blocks[i].kernel)
      throw Error(ErrorCode::validation, "subnet config: temporal length " + std::to_string(len) +
                                             " underflows kernel " + std::to_string(conv_blocks[i].kernel) +
                                             " at block " + std::to_string(i));
    len = len - conv_blocks[i].kernel + 1;
    if (len < pool_size)
      throw Error(ErrorCode::validation, "subnet config: temporal length " + std::to_string(len) +
                                             " underflows pool at block " + std::to_string(i));
    len = (len - pool_size) / pool_stride + 1;
  }
  return len;
}

namespace {

SubnetConfig with_blocks(std::vector<ConvBlockConfig> blocks, Index pool_stride) {
  SubnetConfig c;
  c.conv_blocks = std::move(blocks);
  c.pool_stride = pool_stride;
  return c;
}

}  // namespace

SubnetConfig slow_paper_config() {
  return with_blocks({{9, 128}, {9, 128}, {9, 128}, {5, 256}, {5, 256}, {5, 256}, {5, 256}, {3, 256}, {3, 256}},
                     1);
}

SubnetConfig fast_paper_config() {
  return with_blocks({{9, 32}, {9, 32}, {9, 32}, {5, 512}, {5, 512}, {5, 512}, {5, 512}, {3, 512}, {3, 512}}, 1);
}

SubnetConfig slow_reduced_config() {
  return with_blocks({{9, 32}, {9, 32}, {5, 64}, {5, 64}, {3, 64}, {3, 64}}, 2);
}

SubnetConfig fast_reduced_config() {
  // Filters /4, floored at the smallest validated filter count.
  return with_blocks({{9, 32}, {9, 32}, {5, 128}, {5, 128}, {3, 128}, {3, 128}}, 2);
}

void to_json(nlohmann::json& j, const SubnetConfig& c) {
  j = nlohmann::json::object();
  for (const auto& b : c.conv_blocks) j["conv_blocks"].push_back({b.kernel, b.filters});
  j["fc1_size"] = c.fc1_size;
  j["fc2_size"] = c.fc2_size;
  j["embedding_size"] = c.embedding_size;
  j["pool_size"] = c.pool_size;
  j["pool_stride"] = c.pool_stride;
}

void from_json(const nlohmann::json& j, SubnetConfig& c) {
  c.conv_blocks.clear();
  for (const auto& b : j.at("conv_blocks")) c.conv_blocks.push_back({b.at(0).get<Index>(), b.at(1).get<Index>()});
  c.fc1_size = j.at("fc1_size").get<Index>();
  c.fc2_size = j.at("fc2_size").get<Index>();
  c.embedding_size = j.at("embedding_size").get<Index>();
  c.pool_size = j.at("pool_size").get<Index>();
  c.pool_stride = j.at("pool_stride").get<Index>();
}

// ---------------------------------------------------------------------------
// Construction

namespace {

Parameter<float> make_weight(const std::string& name, Shape shape, Index fan_in, Rng& rng, bool init) {
  Parameter<float> p(name, Tensorf(std::move(shape)));
  if (init) {
    const float limit = std::sqrt(1.0f / static_cast<float>(fan_in));
    autograd::fill_uniform(p.value, rng, -limit, limit);
  }
  return p;
}

Parameter<float> make_bias(const std::string& name, Index size) {
  return Parameter<float>(name, Tensorf({size}));
}

BnLayer make_bn(const std::string& name, Index channels) {
  BnLayer bn;
  bn.gamma = Parameter<float>(name + ".gamma", Tensorf::constant({channels}, 1.0f));
  bn.beta = Parameter<float>(name + ".beta", Tensorf({channels}));
  bn.state = BatchNormState<float>(channels);
  return bn;
}

DenseLayer make_dense(const std::string& name, Index in, Index out, Rng& rng, bool init) {
  return {make_weight(name + ".w", {in, out}, in, rng, init), make_bias(name + ".b", out)};
}

Subnet build_subnet(const SubnetConfig& cfg, Index input_len, Index in_ch, Index classes,
                    const std::string& prefix, Rng& rng, bool init) {
  cfg.validate();
  const Index temporal = cfg.temporal_length(input_len);  // also validates the stack depth
  Subnet net;
  net.cfg = cfg;
  net.in_channels = in_ch;
  Index ch = in_ch;
  for (size_t i = 0; i < cfg.conv_blocks.size(); ++i) {
    const auto& bc = cfg.conv_blocks[i];
    ConvBlock blk;
    const std::string name = prefix + ".conv" + std::to_string(i);
    blk.w = make_weight(name + ".w", {bc.kernel, ch, bc.filters}, bc.kernel * ch, rng, init);
    blk.b = make_bias(name + ".b", bc.filters);
    blk.bn = make_bn(prefix + ".bn" + std::to_string(i), bc.filters);
    net.blocks.push_back(std::move(blk));
    ch = bc.filters;
  }
  const Index flat = temporal * ch;
  net.fc1 = make_dense(prefix + ".fc1", flat, cfg.fc1_size, rng, init);
  net.fc1_bn = make_bn(prefix + ".fc1_bn", cfg.fc1_size);
  net.fc2 = make_dense(prefix + ".fc2", cfg.fc1_size, cfg.fc2_size, rng, init);
  net.fc2_bn = make_bn(prefix + ".fc2_bn", cfg.fc2_size);
  net.emb = make_dense(prefix + ".emb", cfg.fc2_size, cfg.embedding_size, rng, init);
  net.head = make_dense(prefix + ".head", cfg.embedding_size, classes, rng, init);
  return net;
}

JointNet build_joint(Index in_dim, Index fc_size, Index emb_size, Index classes, Rng& rng, bool init) {
  JointNet j;
  j.fc1 = make_dense("joint.fc1", in_dim, fc_size, rng, init);
  j.fc1_bn = make_bn("joint.fc1_bn", fc_size);
  j.emb = make_dense("joint.emb", fc_size, emb_size, rng, init);
  j.emb_bn = make_bn("joint.emb_bn", emb_size);
  j.head = make_dense("joint.head", emb_size, classes, rng, init);
  return j;
}

void collect_bn(BnLayer& bn, const std::string& name, std::vector<std::pair<std::string, Tensorf*>>& out) {
  out.emplace_back(name + ".gamma", &bn.gamma.value);
  out.emplace_back(name + ".beta", &bn.beta.value);
  out.emplace_back(name + ".running_mean", &bn.state.running_mean);
  out.emplace_back(name + ".running_var", &bn.state.running_var);
}

}  // namespace

ForwardOut Subnet::forward(Graph<float>& g, int x, BnMode mode) {
  const bool tr = mode == BnMode::train;
  auto reg = [&](Parameter<float>& p) { return tr ? g.param(p) : g.frozen(p.value); };
  int h = x;
  for (auto& blk : blocks) {
    h = conv1d(g, h, reg(blk.w), reg(blk.b));
    h = batchnorm(g, h, reg(blk.bn.gamma), reg(blk.bn.beta), blk.bn.state, mode);
    h = relu(g, h);
    h = avgpool1d(g, h, cfg.pool_size, cfg.pool_stride);
  }
  const int pre_flatten = h;
  h = flatten(g, h);
  h = dense(g, h, reg(fc1.w), reg(fc1.b));
  h = batchnorm(g, h, reg(fc1_bn.gamma), reg(fc1_bn.beta), fc1_bn.state, mode);
  h = relu(g, h);
  h = dense(g, h, reg(fc2.w), reg(fc2.b));
  h = batchnorm(g, h, reg(fc2_bn.gamma), reg(fc2_bn.beta), fc2_bn.state, mode);
  h = relu(g, h);
  int e = relu(g, dense(g, h, reg(emb.w), reg(emb.b)));
  int logits = dense(g, e, reg(head.w), reg(head.b));
  return {e, logits, pre_flatten};
}

void Subnet::collect_params(std::vector<Parameter<float>*>& out) {
  for (auto& blk : blocks) {
    out.push_back(&blk.w);
    out.push_back(&blk.b);
    out.push_back(&blk.bn.gamma);
    out.push_back(&blk.bn.beta);
  }
  out.push_back(&fc1.w);
  out.push_back(&fc1.b);
  out.push_back(&fc1_bn.gamma);
  out.push_back(&fc1_bn.beta);
  out.push_back(&fc2.w);
  out.push_back(&fc2.b);
  out.push_back(&fc2_bn.gamma);
  out.push_back(&fc2_bn.beta);
  out.push_back(&emb.w);
  out.push_back(&emb.b);
  out.push_back(&head.w);
  out.push_back(&head.b);
}

void Subnet::collect_tensors(std::vector<std::pair<std::string, Tensorf*>>& out, const std::string& prefix) {
  for (size_t i = 0; i < blocks.size(); ++i) {
    auto& blk = blocks[i];
    const std::string name = prefix + ".conv" + std::to_string(i);
    out.emplace_back(name + ".w", &blk.w.value);
    out.emplace_back(name + ".b", &blk.b.value);
    collect_bn(blk.bn, prefix + ".bn" + std::to_string(i), out);
  }
  out.emplace_back(prefix + ".fc1.w", &fc1.w.value);
  out.emplace_back(prefix + ".fc1.b", &fc1.b.value);
  collect_bn(fc1_bn, prefix + ".fc1_bn", out);
  out.emplace_back(prefix + ".fc2.w", &fc2.w.value);
  out.emplace_back(prefix + ".fc2.b", &fc2.b.value);
  collect_bn(fc2_bn, prefix + ".fc2_bn", out);
  out.emplace_back(prefix + ".emb.w", &emb.w.value);
  out.emplace_back(prefix + ".emb.b", &emb.b.value);
  out.emplace_back(prefix + ".head.w", &head.w.value);
  out.emplace_back(prefix + ".head.b", &head.b.value);
}

ForwardOut JointNet::forward(Graph<float>& g, int x, BnMode mode) {
  const bool tr = mode == BnMode::train;
  auto reg = [&](Parameter<float>& p) { return tr ? g.param(p) : g.frozen(p.value); };
  int h = dense(g, x, reg(fc1.w), reg(fc1.b));
  h = batchnorm(g, h, reg(fc1_bn.gamma), reg(fc1_bn.beta), fc1_bn.state, mode);
  h = relu(g, h);
  int e = dense(g, h, reg(emb.w), reg(emb.b));
  e = batchnorm(g, e, reg(emb_bn.gamma), reg(emb_bn.beta), emb_bn.state, mode);
  e = relu(g, e);
  int logits = dense(g, e, reg(head.w), reg(head.b));
  return {e, logits};
}

void JointNet::collect_params(std::vector<Parameter<float>*>& out) {
  out.push_back(&fc1.w);
  out.push_back(&fc1.b);
  out.push_back(&fc1_bn.gamma);
  out.push_back(&fc1_bn.beta);
  out.push_back(&emb.w);
  out.push_back(&emb.b);
  out.push_back(&emb_bn.gamma);
  out.push_back(&emb_bn.beta);
  out.push_back(&head.w);
  out.push_back(&head.b);
}

void JointNet::collect_tensors(std::vector<std::pair<std::string, Tensorf*>>& out, const std::string& prefix) {
  out.emplace_back(prefix + ".fc1.w", &fc1.w.value);
  out.emplace_back(prefix + ".fc1.b", &fc1.b.value);
  collect_bn(fc1_bn, prefix + ".fc1_bn", out);
  out.emplace_back(prefix + ".emb.w", &emb.w.value);
  out.emplace_back(prefix + ".emb.b", &emb.b.value);
  collect_bn(emb_bn, prefix + ".emb_bn", out);
  out.emplace_back(prefix + ".head.w", &head.w.value);
  out.emplace_back(prefix + ".head.b", &head.b.value);
}

int ModelBundle::class_index(const std::string& label) const {
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return static_cast<int>(i);
  return -1;
}

std::vector<std::pair<std::string, Tensorf*>> ModelBundle::named_tensors() {
  std::vector<std::pair<std::string, Tensorf*>> out;
  slow.collect_tensors(out, "slow");
  fast.collect_tensors(out, "fast");
  joint.collect_tensors(out, "joint");
  return out;
}

std::vector<std::pair<std::string, Tensorf*>> ModelBundle::subnet_tensors() {
  std::vector<std::pair<std::string, Tensorf*>> out;
  slow.collect_tensors(out, "slow");
  fast.collect_tensors(out, "fast");
  return out;
}

ModelBundle build_model(const SubnetConfig& slow_cfg, const SubnetConfig& fast_cfg,
                        std::vector<std::string> labels, const signal::TransformConfig& transform,
                        const signal::ZScoreStats<float>& zstats, Index window_length, std::uint64_t seed,
                        bool init_weights) {
  if (labels.size() < 2) throw Error(ErrorCode::validation, "model: needs at least two identities");
  transform.validate();
  zstats.validate();
  ModelBundle b;
  b.transform = transform;
  b.zstats = zstats;
  b.window_length = window_length;
  b.labels = std::move(labels);
  const Index classes = static_cast<Index>(b.labels.size());
  Rng rng(substream_seed(seed, 0x6d6f64656cull));
  b.slow = build_subnet(slow_cfg, window_length, 2, classes, "slow", rng, init_weights);
  b.fast = build_subnet(fast_cfg, window_length, 2, classes, "fast", rng, init_weights);
  b.joint = build_joint(slow_cfg.embedding_size + fast_cfg.embedding_size, slow_cfg.fc1_size,
                        slow_cfg.embedding_size, classes, rng, init_weights);
  b.train_meta["seed"] = seed;
  return b;
}

std::string subnet_parameter_hash(ModelBundle& bundle) {
  Sha256 h;
  for (auto& [name, t] : bundle.subnet_tensors()) {
    h.update(name.data(), name.size());
    h.update(t->data.data(), static_cast<size_t>(t->size()) * sizeof(float));
  }
  return Sha256::hex(h.finish());
}

// ---------------------------------------------------------------------------
// Window batching

namespace {

Tensorf stack_view(std::span<const signal::InputWindow<float>> ws, const std::vector<size_t>& idx,
                   Branch branch) {
  if (idx.empty()) throw Error(ErrorCode::shape, "model: empty window batch");
  const Index L = branch == Branch::slow ? ws[idx[0]].slow.rows() : ws[idx[0]].fast.rows();
  Tensorf t({static_cast<Index>(idx.size()), L, 2});
  for (size_t i = 0; i < idx.size(); ++i) {
    const auto& m = branch == Branch::slow ? ws[idx[i]].slow : ws[idx[i]].fast;
    if (m.rows() != L) throw Error(ErrorCode::shape, "model: windows in one batch must share their length");
    float* base = t.data.data() + static_cast<Index>(i) * L * 2;
    for (Index r = 0; r < L; ++r) {
      base[r * 2] = m(r, 0);
      base[r * 2 + 1] = m(r, 1);
    }
  }
  return t;
}

std::vector<size_t> iota_indices(size_t n) {
  std::vector<size_t> v(n);
  for (size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

constexpr size_t kInferBatch = 64;

}  // namespace

// ---------------------------------------------------------------------------
// Training

namespace {

std::vector<int> window_labels(const ModelBundle& bundle, std::span<const signal::InputWindow<float>> ws) {
  std::vector<int> labels(ws.size());
  for (size_t i = 0; i < ws.size(); ++i) {
    if (!ws[i].label)
      throw Error(ErrorCode::validation, "training window " + std::to_string(i) + " carries no label");
    const int c = bundle.class_index(*ws[i].label);
    if (c < 0)
      throw Error(ErrorCode::validation, "training window label '" + *ws[i].label + "' is not a model class");
    labels[static_cast<size_t>(i)] = c;
  }
  return labels;
}

void require_class_coverage(const ModelBundle& bundle, const std::vector<int>& labels) {
  std::vector<long> counts(bundle.labels.size(), 0);
  for (int c : labels) counts[static_cast<size_t>(c)]++;
  for (size_t c = 0; c < counts.size(); ++c)
    if (counts[c] == 0)
      throw Error(ErrorCode::validation, "class '" + bundle.labels[c] + "' has no training window");
}

using TensorRefs = std::vector<std::pair<std::string, Tensorf*>>;

std::vector<autograd::ArrayX<float>> save_state(const TensorRefs& refs) {
  std::vector<autograd::ArrayX<float>> s;
  s.reserve(refs.size());
  for (const auto& [name, t] : refs) s.push_back(t->data);
  return s;
}

void restore_state(const TensorRefs& refs, const std::vector<autograd::ArrayX<float>>& s) {
  for (size_t i = 0; i < refs.size(); ++i) refs[i].second->data = s[i];
}

struct StageIo {
  // Returns the logits node for the given window indices.
  std::function<int(Graph<float>&, const std::vector<size_t>&, BnMode)> forward_logits;
  std::vector<Parameter<float>*> params;
  TensorRefs snapshot_tensors;
  const char* name;
  std::uint64_t substream;
};

constexpr size_t kRefreshCap = 384;

/// Deterministic evenly-strided subset used for batch-norm re-estimation.
std::vector<size_t> strided_subset(const std::vector<size_t>& idx, size_t cap) {
  if (idx.size() <= cap) return idx;
  std::vector<size_t> out;
  out.reserve(cap);
  const double step = static_cast<double>(idx.size()) / static_cast<double>(cap);
  for (size_t i = 0; i < cap; ++i) out.push_back(idx[static_cast<size_t>(static_cast<double>(i) * step)]);
  return out;
}

/// Re-estimate batch-norm running statistics under the current weights with
/// one forward pass over (a strided subset of) the training windows. Keeps
/// inference honest after short trainings, where momentum-averaged statistics
/// lag far behind the weights.
void refresh_bn_stats(const StageIo& io, const std::vector<size_t>& train_idx) {
  std::vector<size_t> subset = strided_subset(train_idx, kRefreshCap);
  if (subset.size() < 2) return;
  Graph<float> g;
  io.forward_logits(g, subset, BnMode::refresh);
}

double eval_accuracy(const StageIo& io, const std::vector<size_t>& idx, const std::vector<int>& labels) {
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  long correct = 0;
  for (size_t off = 0; off < idx.size(); off += kInferBatch) {
    std::vector<size_t> chunk(idx.begin() + static_cast<long>(off),
                              idx.begin() + static_cast<long>(std::min(idx.size(), off + kInferBatch)));
    Graph<float> g;
    int logits = io.forward_logits(g, chunk, BnMode::infer);
    Tensorf probs = autograd::softmax_rows(g.value(logits));
    auto pm = probs.mat2d();
    for (size_t i = 0; i < chunk.size(); ++i) {
      Index arg = 0;
      pm.row(static_cast<Index>(i)).maxCoeff(&arg);
      if (static_cast<int>(arg) == labels[chunk[i]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

StageResult run_stage(const StageIo& io, size_t n, const std::vector<int>& labels,
                      const TrainSchedule& schedule) {
  if (schedule.batch_size < 2)
    throw Error(ErrorCode::validation, "training: batch size must be at least 2 (batch norm)");
  Rng rng(substream_seed(schedule.seed, io.substream));

  // Hold out a validation split, keeping at least one window per class in
  // the training portion.
  std::vector<size_t> order = iota_indices(n);
  std::shuffle(order.begin(), order.end(), rng);
  const size_t val_target = static_cast<size_t>(std::floor(schedule.holdout_fraction * static_cast<double>(n)));
  std::vector<long> train_class_counts(*std::max_element(labels.begin(), labels.end()) + 1, 0);
  for (int c : labels) train_class_counts[static_cast<size_t>(c)]++;
  std::vector<size_t> val_idx, train_idx;
  for (size_t i : order) {
    const int c = labels[i];
    if (val_idx.size() < val_target && train_class_counts[static_cast<size_t>(c)] > 1) {
      val_idx.push_back(i);
      train_class_counts[static_cast<size_t>(c)]--;
    } else {
      train_idx.push_back(i);
    }
  }

  autograd::AdamConfig<float> adam_cfg;
  adam_cfg.lr = static_cast<float>(schedule.lr);
  adam_cfg.amsgrad = schedule.amsgrad;
  std::vector<autograd::AdamState<float>> adam_states;
  adam_states.reserve(io.params.size());
  for (auto* p : io.params) adam_states.emplace_back(p->value.shape);

  StageResult result;
  std::vector<autograd::ArrayX<float>> best_state;
  int since_best = 0;
  bool stopped_on_target = false;

  for (int epoch = 0; epoch < schedule.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double loss_sum = 0;
    long correct = 0, seen = 0;
    for (size_t off = 0; off < train_idx.size(); off += static_cast<size_t>(schedule.batch_size)) {
      std::vector<size_t> batch(
          train_idx.begin() + static_cast<long>(off),
          train_idx.begin() +
              static_cast<long>(std::min(train_idx.size(), off + static_cast<size_t>(schedule.batch_size))));
      if (batch.size() < 2) continue;  // batch norm needs two rows
      std::vector<int> batch_labels(batch.size());
      for (size_t i = 0; i < batch.size(); ++i) batch_labels[i] = labels[batch[i]];

      Graph<float> g;
      int logits = io.forward_logits(g, batch, BnMode::train);
      auto xent = autograd::softmax_xent(g, logits, batch_labels);
      const float loss = g.value(xent.loss).data[0];
      if (!std::isfinite(loss))
        throw Error(ErrorCode::divergence, std::string("stage ") + io.name + ": non-finite loss at epoch " +
                                               std::to_string(epoch) + ", batch " +
                                               std::to_string(off / static_cast<size_t>(schedule.batch_size)));
      for (auto* p : io.params) p->zero_grad();
      g.backward(xent.loss);
      for (size_t i = 0; i < io.params.size(); ++i) adam_step(*io.params[i], adam_states[i], adam_cfg);

      loss_sum += static_cast<double>(loss) * static_cast<double>(batch.size());
      auto pm = xent.probs.mat2d();
      for (size_t i = 0; i < batch.size(); ++i) {
        Index arg = 0;
        pm.row(static_cast<Index>(i)).maxCoeff(&arg);
        if (static_cast<int>(arg) == batch_labels[i]) ++correct;
      }
      seen += static_cast<long>(batch.size());
    }

    refresh_bn_stats(io, train_idx);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    rec.train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    rec.val_accuracy = eval_accuracy(io, val_idx, labels);
    result.epochs.push_back(rec);
    result.final_train_accuracy = rec.train_accuracy;

    if (!val_idx.empty()) {
      if (result.best_epoch < 0 || rec.val_accuracy > result.best_val_accuracy + 1e-12) {
        result.best_val_accuracy = rec.val_accuracy;
        result.best_epoch = epoch;
        best_state = save_state(io.snapshot_tensors);
        since_best = 0;
      } else if (++since_best >= schedule.patience) {
        break;
      }
    }
    if (schedule.stop_at_train_accuracy <= 1.0 && rec.train_accuracy >= schedule.stop_at_train_accuracy) {
      stopped_on_target = true;
      break;
    }
  }

  if (!stopped_on_target && !best_state.empty()) restore_state(io.snapshot_tensors, best_state);
  if (!result.epochs.empty()) refresh_bn_stats(io, train_idx);
  return result;
}

nlohmann::json stage_to_json(const StageResult& r, double lr) {
  nlohmann::json j;
  j["lr"] = lr;
  j["best_epoch"] = r.best_epoch;
  j["best_val_accuracy"] = r.best_val_accuracy;
  j["final_train_accuracy"] = r.final_train_accuracy;
  for (const auto& e : r.epochs)
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"train_accuracy", e.train_accuracy},
                           {"val_accuracy", e.val_accuracy}});
  return j;
}

}  // namespace

StageResult pretrain_subnet(ModelBundle& bundle, Branch branch,
                            std::span<const signal::InputWindow<float>> windows, const TrainSchedule& schedule) {
  if (windows.empty()) throw Error(ErrorCode::validation, "pretrain: no training windows");
  std::vector<int> labels = window_labels(bundle, windows);
  require_class_coverage(bundle, labels);

  Subnet& net = branch == Branch::slow ? bundle.slow : bundle.fast;
  StageIo io;
  io.name = branch == Branch::slow ? "slow" : "fast";
  io.substream = branch == Branch::slow ? 0xa1 : 0xa2;
  net.collect_params(io.params);
  net.collect_tensors(io.snapshot_tensors, io.name);
  io.forward_logits = [&bundle, &net, branch, windows](Graph<float>& g, const std::vector<size_t>& idx,
                                                       BnMode mode) {
    (void)bundle;
    int x = g.variable(stack_view(windows, idx, branch));
    return net.forward(g, x, mode).logits;
  };

  StageResult r = run_stage(io, windows.size(), labels, schedule);
  (branch == Branch::slow ? bundle.slow_trained : bundle.fast_trained) = true;
  bundle.train_meta["stages"][io.name] = stage_to_json(r, schedule.lr);
  return r;
}

StageResult train_joint(ModelBundle& bundle, std::span<const signal::InputWindow<float>> windows,
                        const TrainSchedule& schedule) {
  if (!bundle.slow_trained || !bundle.fast_trained)
    throw Error(ErrorCode::validation, "joint training requires both pretrained subnets");
  if (windows.empty()) throw Error(ErrorCode::validation, "joint training: no training windows");
  std::vector<int> labels = window_labels(bundle, windows);
  require_class_coverage(bundle, labels);

  const std::string hash_before = subnet_parameter_hash(bundle);

  // Subnets are frozen; their embeddings per window are constants we can
  // compute once up front.
  const Index emb_dim = bundle.slow.cfg.embedding_size + bundle.fast.cfg.embedding_size;
  MatXf cache(static_cast<Index>(windows.size()), emb_dim);
  auto all = iota_indices(windows.size());
  for (size_t off = 0; off < all.size(); off += kInferBatch) {
    std::vector<size_t> chunk(all.begin() + static_cast<long>(off),
                              all.begin() + static_cast<long>(std::min(all.size(), off + kInferBatch)));
    Graph<float> g;
    auto so = bundle.slow.forward(g, g.variable(stack_view(windows, chunk, Branch::slow)), BnMode::infer);
    auto fo = bundle.fast.forward(g, g.variable(stack_view(windows, chunk, Branch::fast)), BnMode::infer);
    const Tensorf& se = g.value(so.embedding);
    const Tensorf& fe = g.value(fo.embedding);
    for (size_t i = 0; i < chunk.size(); ++i) {
      cache.row(static_cast<Index>(chunk[i])).leftCols(bundle.slow.cfg.embedding_size) =
          se.mat2d().row(static_cast<Index>(i));
      cache.row(static_cast<Index>(chunk[i])).rightCols(bundle.fast.cfg.embedding_size) =
          fe.mat2d().row(static_cast<Index>(i));
    }
  }

  StageIo io;
  io.name = "joint";
  io.substream = 0xa3;
  bundle.joint.collect_params(io.params);
  bundle.joint.collect_tensors(io.snapshot_tensors, "joint");
  io.forward_logits = [&bundle, &cache, emb_dim](Graph<float>& g, const std::vector<size_t>& idx, BnMode mode) {
    Tensorf x({static_cast<Index>(idx.size()), emb_dim});
    for (size_t i = 0; i < idx.size(); ++i)
      x.mat2d().row(static_cast<Index>(i)) = cache.row(static_cast<Index>(idx[i]));
    return bundle.joint.forward(g, g.variable(std::move(x)), mode).logits;
  };

  StageResult r = run_stage(io, windows.size(), labels, schedule);

  const std::string hash_after = subnet_parameter_hash(bundle);
  if (hash_before != hash_after)
    throw Error(ErrorCode::validation, "joint training modified frozen subnet parameters");
  bundle.joint_trained = true;
  bundle.train_meta["stages"]["joint"] = stage_to_json(r, schedule.lr);
  bundle.train_meta["frozen_subnet_sha256"] = hash_after;
  return r;
}

// ---------------------------------------------------------------------------
// Inference

namespace {

void require_trained(const ModelBundle& b) {
  if (!b.fully_trained())
    throw Error(ErrorCode::untrained, "bundle has not completed all three training stages");
}

struct FullForward {
  Tensorf joint_emb;
  Tensorf fast_emb;
  Tensorf slow_emb;
  Tensorf joint_probs;
};

FullForward full_forward(ModelBundle& b, std::span<const signal::InputWindow<float>> ws,
                         const std::vector<size_t>& idx) {
  Graph<float> g;
  auto so = b.slow.forward(g, g.variable(stack_view(ws, idx, Branch::slow)), BnMode::infer);
  auto fo = b.fast.forward(g, g.variable(stack_view(ws, idx, Branch::fast)), BnMode::infer);
  int cat = autograd::concat(g, {so.embedding, fo.embedding});
  auto jo = b.joint.forward(g, cat, BnMode::infer);
  FullForward out;
  out.joint_emb = g.value(jo.embedding);
  out.fast_emb = g.value(fo.embedding);
  out.slow_emb = g.value(so.embedding);
  out.joint_probs = autograd::softmax_rows(g.value(jo.logits));
  return out;
}

}  // namespace

MatXf classify_batch(ModelBundle& bundle, std::span<const signal::InputWindow<float>> windows) {
  require_trained(bundle);
  MatXf out(static_cast<Index>(windows.size()), static_cast<Index>(bundle.labels.size()));
  auto all = iota_indices(windows.size());
  for (size_t off = 0; off < all.size(); off += kInferBatch) {
    std::vector<size_t> chunk(all.begin() + static_cast<long>(off),
                              all.begin() + static_cast<long>(std::min(all.size(), off + kInferBatch)));
    FullForward f = full_forward(bundle, windows, chunk);
    for (size_t i = 0; i < chunk.size(); ++i)
      out.row(static_cast<Index>(chunk[i])) = f.joint_probs.mat2d().row(static_cast<Index>(i));
  }
  return out;
}

Eigen::VectorXf classify(ModelBundle& bundle, const signal::InputWindow<float>& window) {
  return classify_batch(bundle, std::span(&window, 1)).row(0);
}

MatXf classify_subnet_batch(ModelBundle& bundle, Branch branch,
                            std::span<const signal::InputWindow<float>> windows) {
  if (!(branch == Branch::slow ? bundle.slow_trained : bundle.fast_trained))
    throw Error(ErrorCode::untrained, "subnet has not been pretrained");
  Subnet& net = branch == Branch::slow ? bundle.slow : bundle.fast;
  MatXf out(static_cast<Index>(windows.size()), static_cast<Index>(bundle.labels.size()));
  auto all = iota_indices(windows.size());
  for (size_t off = 0; off < all.size(); off += kInferBatch) {
    std::vector<size_t> chunk(all.begin() + static_cast<long>(off),
                              all.begin() + static_cast<long>(std::min(all.size(), off + kInferBatch)));
    Graph<float> g;
    auto fwd = net.forward(g, g.variable(stack_view(windows, chunk, branch)), BnMode::infer);
    Tensorf probs = autograd::softmax_rows(g.value(fwd.logits));
    for (size_t i = 0; i < chunk.size(); ++i)
      out.row(static_cast<Index>(chunk[i])) = probs.mat2d().row(static_cast<Index>(i));
  }
  return out;
}

std::vector<EmbeddingVector> embed_batch(ModelBundle& bundle,
                                         std::span<const signal::InputWindow<float>> windows) {
  require_trained(bundle);
  const Index dj = bundle.slow.cfg.embedding_size;  // joint embedding width
  const Index df = bundle.fast.cfg.embedding_size;
  const Index ds = bundle.slow.cfg.embedding_size;
  std::vector<EmbeddingVector> out(windows.size());
  auto all = iota_indices(windows.size());
  for (size_t off = 0; off < all.size(); off += kInferBatch) {
    std::vector<size_t> chunk(all.begin() + static_cast<long>(off),
                              all.begin() + static_cast<long>(std::min(all.size(), off + kInferBatch)));
    FullForward f = full_forward(bundle, windows, chunk);
    for (size_t i = 0; i < chunk.size(); ++i) {
      EmbeddingVector& e = out[chunk[i]];
      e.values.resize(dj + df + ds);
      e.values.segment(0, dj) = f.joint_emb.mat2d().row(static_cast<Index>(i));
      e.values.segment(dj, df) = f.fast_emb.mat2d().row(static_cast<Index>(i));
      e.values.segment(dj + df, ds) = f.slow_emb.mat2d().row(static_cast<Index>(i));
      e.norm = e.values.norm();
    }
  }
  return out;
}

EmbeddingVector embed(ModelBundle& bundle, const signal::InputWindow<float>& window) {
  return embed_batch(bundle, std::span(&window, 1))[0];
}

}  // namespace eyedent::model
