// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over a dynamic tape, with exactly the operator
// set the dual-subnet architecture needs. Ops are free functions over a Graph;
// every reduction runs in a fixed sequential order per tensor, and inference
// paths process each batch row independently so that a row's result does not
// depend on what else is in the batch.
#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "eyedent/tensor.hpp"

namespace eyedent::autograd {

/// A named trainable tensor. Gradients accumulate into `grad` when a graph
/// that references the parameter is differentiated.
template <class Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<Scalar> v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() {
    if (grad.size() != value.size()) grad = Tensor<Scalar>(value.shape);
    else grad.data.setZero();
  }
};

template <class Scalar>
class Graph {
 public:
  struct Node {
    Tensor<Scalar> store;                 // owned value (leaves may alias instead)
    const Tensor<Scalar>* alias = nullptr;
    Tensor<Scalar> grad;
    Parameter<Scalar>* param = nullptr;   // external gradient sink for parameter leaves
    bool needs_grad = false;
    std::function<void(Graph&)> backprop; // empty for leaves
  };

  /// Leaf holding data; set `requires_grad` to differentiate w.r.t. it.
  int variable(Tensor<Scalar> value, bool requires_grad = false) {
    Node n;
    n.store = std::move(value);
    n.needs_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  /// Leaf aliasing a parameter's current value; no copy is made. Gradients
  /// flush into `p.grad` at the end of backward().
  int param(Parameter<Scalar>& p) {
    Node n;
    n.alias = &p.value;
    n.param = &p;
    n.needs_grad = p.trainable;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  /// Leaf aliasing an external tensor that never receives gradients.
  int frozen(const Tensor<Scalar>& t) {
    Node n;
    n.alias = &t;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int add_value(Tensor<Scalar> value, bool needs_grad) {
    Node n;
    n.store = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void set_backprop(int id, std::function<void(Graph&)> f) { nodes_[static_cast<size_t>(id)].backprop = std::move(f); }

  const Tensor<Scalar>& value(int id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.alias ? *n.alias : n.store;
  }
  const Tensor<Scalar>& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
  /// Gradient buffer of `id`, or nullptr when the node does not require one.
  Tensor<Scalar>* grad_if(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    return n.needs_grad ? &n.grad : nullptr;
  }

  /// Reverse sweep from a scalar node. The tape order is a topological order
  /// by construction, so a single reverse pass suffices.
  void backward(int root) {
    if (value(root).size() != 1)
      throw Error(ErrorCode::shape, "backward root must be a scalar, got shape " + shape_str(value(root).shape));
    for (Node& n : nodes_) {
      if (!n.needs_grad) continue;
      const Tensor<Scalar>& v = n.alias ? *n.alias : n.store;
      n.grad = Tensor<Scalar>(v.shape);
    }
    Node& root_node = nodes_[static_cast<size_t>(root)];
    if (root_node.grad.size() != 1) root_node.grad = Tensor<Scalar>({1});
    root_node.grad.data[0] = Scalar(1);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.needs_grad && n.backprop) n.backprop(*this);
    }
    for (Node& n : nodes_) {
      if (n.param && n.needs_grad) {
        if (n.param->grad.size() != n.param->value.size()) n.param->zero_grad();
        n.param->grad.data += n.grad.data;
      }
    }
  }

  const std::vector<int>& relu_input_ids() const { return relu_inputs_; }
  void note_relu_input(int id) { relu_inputs_.push_back(id); }

  size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  std::vector<int> relu_inputs_;
};

namespace detail {

template <class Scalar>
void require_rank(const Tensor<Scalar>& t, int rank, const char* op) {
  if (t.rank() != rank)
    throw Error(ErrorCode::shape,
                std::string(op) + ": expected rank " + std::to_string(rank) + " tensor, got " + shape_str(t.shape));
}

}  // namespace detail

/// Valid (unpadded) 1-d convolution.
///   x: [batch, length, in_ch], w: [k, in_ch, filters], b: [filters]
///   -> [batch, (length-k)/stride + 1, filters]
/// The weight's row-major flattening doubles as the [k*in_ch, filters] GEMM
/// operand; each batch row is one GEMM over a strided map of the input, so a
/// row's output never depends on the rest of the batch.
template <class Scalar>
int conv1d(Graph<Scalar>& g, int x, int w, int b, Index stride = 1) {
  const Tensor<Scalar>& xv = g.value(x);
  const Tensor<Scalar>& wv = g.value(w);
  const Tensor<Scalar>& bv = g.value(b);
  detail::require_rank(xv, 3, "conv1d input");
  detail::require_rank(wv, 3, "conv1d kernel");
  if (stride < 1) throw Error(ErrorCode::shape, "conv1d: stride must be >= 1");
  const Index B = xv.dim(0), L = xv.dim(1), C = xv.dim(2);
  const Index k = wv.dim(0), F = wv.dim(2);
  if (wv.dim(1) != C)
    throw Error(ErrorCode::shape, "conv1d: kernel expects " + std::to_string(wv.dim(1)) +
                                      " input channels, input has " + std::to_string(C));
  if (bv.size() != F) throw Error(ErrorCode::shape, "conv1d: bias length does not match filter count");
  if (L < k)
    throw Error(ErrorCode::shape, "conv1d: input length " + std::to_string(L) + " shorter than kernel size " +
                                      std::to_string(k));
  const Index T = (L - k) / stride + 1;

  using StridedMap = Eigen::Map<const MatX<Scalar>, 0, Eigen::OuterStride<>>;
  auto window_view = [L, C, T, k, stride](const Tensor<Scalar>& t, Index batch_row) {
    return StridedMap(t.data.data() + batch_row * L * C, T, k * C, Eigen::OuterStride<>(stride * C));
  };

  Tensor<Scalar> out({B, T, F});
  auto kmat = wv.mat(k * C, F);
  for (Index i = 0; i < B; ++i) {
    MatMap<Scalar> o(out.data.data() + i * T * F, T, F);
    o.noalias() = window_view(xv, i) * kmat;
    o.rowwise() += bv.mat(1, F).row(0);
  }

  const bool needs = g.needs_grad(x) || g.needs_grad(w) || g.needs_grad(b);
  int outid = g.add_value(std::move(out), needs);
  g.set_backprop(outid, [=](Graph<Scalar>& gg) {
    const Tensor<Scalar>& go = gg.grad(outid);
    const Tensor<Scalar>& xval = gg.value(x);
    const Tensor<Scalar>& wval = gg.value(w);
    if (Tensor<Scalar>* gw = gg.grad_if(w)) {
      auto gwm = gw->mat(k * C, F);
      for (Index i = 0; i < B; ++i) {
        ConstMatMap<Scalar> go_i(go.data.data() + i * T * F, T, F);
        gwm.noalias() += window_view(xval, i).transpose() * go_i;
      }
    }
    if (Tensor<Scalar>* gb = gg.grad_if(b)) {
      auto gom = go.mat(B * T, F);
      gb->mat(1, F).row(0) += gom.colwise().sum();
    }
    if (Tensor<Scalar>* gx = gg.grad_if(x)) {
      auto kmat2 = wval.mat(k * C, F);
      MatX<Scalar> cols(T, k * C);
      for (Index i = 0; i < B; ++i) {
        ConstMatMap<Scalar> go_i(go.data.data() + i * T * F, T, F);
        cols.noalias() = go_i * kmat2.transpose();
        for (Index t = 0; t < T; ++t)
          gx->data.segment((i * L + t * stride) * C, k * C) += cols.row(t).array().transpose();
      }
    }
  });
  return outid;
}

/// Mean pooling along the temporal axis: [batch, length, ch] -> [batch, T, ch]
/// with T = (length-size)/stride + 1.
template <class Scalar>
int avgpool1d(Graph<Scalar>& g, int x, Index size = 2, Index stride = 1) {
  const Tensor<Scalar>& xv = g.value(x);
  detail::require_rank(xv, 3, "avgpool1d input");
  if (size < 1 || stride < 1) throw Error(ErrorCode::shape, "avgpool1d: size and stride must be >= 1");
  const Index B = xv.dim(0), L = xv.dim(1), C = xv.dim(2);
  if (L < size)
    throw Error(ErrorCode::shape, "avgpool1d: input length " + std::to_string(L) + " shorter than pool size " +
                                      std::to_string(size));
  const Index T = (L - size) / stride + 1;
  const Scalar inv = Scalar(1) / static_cast<Scalar>(size);

  Tensor<Scalar> out({B, T, C});
  for (Index i = 0; i < B; ++i)
    for (Index t = 0; t < T; ++t) {
      auto acc = out.data.segment((i * T + t) * C, C);
      acc = xv.data.segment((i * L + t * stride) * C, C);
      for (Index a = 1; a < size; ++a) acc += xv.data.segment((i * L + t * stride + a) * C, C);
      acc *= inv;
    }

  int outid = g.add_value(std::move(out), g.needs_grad(x));
  g.set_backprop(outid, [=](Graph<Scalar>& gg) {
    Tensor<Scalar>* gx = gg.grad_if(x);
    if (!gx) return;
    const Tensor<Scalar>& go = gg.grad(outid);
    for (Index i = 0; i < B; ++i)
      for (Index t = 0; t < T; ++t)
        for (Index a = 0; a < size; ++a)
          gx->data.segment((i * L + t * stride + a) * C, C) += inv * go.data.segment((i * T + t) * C, C);
  });
  return outid;
}

/// Elementwise max(0, x). The subgradient at exactly 0 is 0.
template <class Scalar>
int relu(Graph<Scalar>& g, int x) {
  const Tensor<Scalar>& xv = g.value(x);
  Tensor<Scalar> out(xv.shape);
  out.data = xv.data.max(Scalar(0));
  g.note_relu_input(x);
  int outid = g.add_value(std::move(out), g.needs_grad(x));
  g.set_backprop(outid, [=](Graph<Scalar>& gg) {
    Tensor<Scalar>* gx = gg.grad_if(x);
    if (!gx) return;
    const Tensor<Scalar>& go = gg.grad(outid);
    gx->data += (gg.value(x).data > Scalar(0)).template cast<Scalar>() * go.data;
  });
  return outid;
}

/// Affine map x.W + b with x: [batch, m_in], w: [m_in, m_out], b: [m_out].
/// Forward is computed row by row (batch-composition invariant); the batched
/// GEMMs live only in the backward pass.
template <class Scalar>
int dense(Graph<Scalar>& g, int x, int w, int b) {
  const Tensor<Scalar>& xv = g.value(x);
  const Tensor<Scalar>& wv = g.value(w);
  const Tensor<Scalar>& bv = g.value(b);
  detail::require_rank(xv, 2, "dense input");
  detail::require_rank(wv, 2, "dense weights");
  const Index B = xv.dim(0), M = xv.dim(1), K = wv.dim(1);
  if (wv.dim(0) != M)
    throw Error(ErrorCode::shape, "dense: input width " + std::to_string(M) + " does not match weight rows " +
                                      std::to_string(wv.dim(0)));
  if (bv.size() != K) throw Error(ErrorCode::shape, "dense: bias length does not match output width");

  Tensor<Scalar> out({B, K});
  auto xm = xv.mat(B, M);
  auto wm = wv.mat(M, K);
  auto om = out.mat(B, K);
  for (Index i = 0; i < B; ++i) {
    om.row(i).noalias() = xm.row(i) * wm;
    om.row(i) += bv.mat(1, K).row(0);
  }

  const bool needs = g.needs_grad(x) || g.needs_grad(w) || g.needs_grad(b);
  int outid = g.add_value(std::move(out), needs);
  g.set_backprop(outid, [=](Graph<Scalar>& gg) {
    const Tensor<Scalar>& go = gg.grad(outid);
    auto gom = go.mat(B, K);
    if (Tensor<Scalar>* gw = gg.grad_if(w))
      gw->mat(M, K).noalias() += gg.value(x).mat(B, M).transpose() * gom;
    if (Tensor<Scalar>* gb = gg.grad_if(b)) gb->mat(1, K).row(0) += gom.colwise().sum();
    if (Tensor<Scalar>* gx = gg.grad_if(x))
      gx->mat(B, M).noalias() += gom * gg.value(w).mat(M, K).transpose();
  });
  return outid;
}

/// [batch, t, c] -> [batch, t*c]. The flat row-major layout is unchanged, so
/// this is shape bookkeeping only.
template <class Scalar>
int flatten(Graph<Scalar>& g, int x) {
  const Tensor<Scalar>& xv = g.value(x);
  detail::require_rank(xv, 3, "flatten input");
  Tensor<Scalar> out({xv.dim(0), xv.dim(1) * xv.dim(2)});
  out.data = xv.data;
  int outid = g.add_value(std::move(out), g.needs_grad(x));
  g.set_backprop(outid, [=](Graph<Scalar>& gg) {
    if (Tensor<Scalar>* gx = gg.grad_if(x)) gx->data += gg.grad(outid).data;
  });
  return outid;
}

/// Concatenate [batch, m_i] tensors along the feature axis. A single input is
/// returned unchanged.
template <class Scalar>
int concat(Graph<Scalar>& g, const std::vector<int>& xs) {
  if (xs.empty()) throw Error(ErrorCode::shape, "concat: no inputs");
  if (xs.size() == 1) return xs[0];
  const Index B = g.value(xs[0]).dim(0);
  Index total = 0;
  bool needs = false;
  for (int id : xs) {
    const Tensor<Scalar>& v = g.value(id);
    detail::require_rank(v, 2, "concat input");
    if (v.dim(0) != B)
      throw Error(ErrorCode::shape, "concat: batch dimensions disagree (" + std::to_string(v.dim(0)) + " vs " +
                                        std::to_string(B) + ")");
    total += v.dim(1);
    needs = needs || g.needs_grad(id);
  }
  Tensor<Scalar> out({B, total});
  auto om = out.mat(B, total);
  Index off = 0;
  for (int id : xs) {
    const Tensor<Scalar>& v = g.value(id);
    om.middleCols(off, v.dim(1)) = v.mat2d();
    off += v.dim(1);
  }
  int outid = g.add_value(std::move(out), needs);
  std::vector<int> inputs = xs;
  g.set_backprop(outid, [=](Graph<Scalar>& gg) {
    const Tensor<Scalar>& go = gg.grad(outid);
    auto gom = go.mat(B, total);
    Index o = 0;
    for (int id : inputs) {
      const Index m = gg.value(id).dim(1);
      if (Tensor<Scalar>* gx = gg.grad_if(id)) gx->mat2d() += gom.middleCols(o, m);
      o += m;
    }
  });
  return outid;
}

/// `train` normalizes by batch statistics and nudges the running estimates by
/// momentum; `refresh` normalizes by batch statistics and overwrites the
/// running estimates with them (statistics re-estimation at stage end);
/// `infer` normalizes by the running estimates.
enum class BnMode { train, refresh, infer };

/// Running statistics and constants of one batch-normalization layer. The
/// running estimates update only in train or refresh mode:
///   train:   running <- momentum * running + (1 - momentum) * batch
///   refresh: running <- batch
template <class Scalar>
struct BatchNormState {
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  Scalar momentum = Scalar(0.99);
  Scalar eps = Scalar(1e-5);

  BatchNormState() = default;
  explicit BatchNormState(Index channels)
      : running_mean(Tensor<Scalar>({channels})),
        running_var(Tensor<Scalar>::constant({channels}, Scalar(1))) {}
};

/// Normalize per trailing-axis feature over all leading axes, then scale and
/// shift by gamma/beta. Train mode uses batch statistics (population variance)
/// and updates the running estimates; infer mode uses the running estimates
/// and reduces to a per-sample affine map.
template <class Scalar>
int batchnorm(Graph<Scalar>& g, int x, int gamma, int beta, BatchNormState<Scalar>& state, BnMode mode) {
  const Tensor<Scalar>& xv = g.value(x);
  const Index C = xv.cols2d();
  const Index N = xv.rows2d();
  if (g.value(gamma).size() != C || g.value(beta).size() != C)
    throw Error(ErrorCode::shape, "batchnorm: gamma/beta length does not match feature count");
  if (state.running_mean.size() != C || state.running_var.size() != C)
    throw Error(ErrorCode::shape, "batchnorm: running statistics length does not match feature count");
  const bool needs = g.needs_grad(x) || g.needs_grad(gamma) || g.needs_grad(beta);

  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  auto gm = g.value(gamma).mat(1, C);
  auto bm = g.value(beta).mat(1, C);

  if (mode == BnMode::infer) {
    RowVec inv_std = (state.running_var.data.transpose().array() + state.eps).sqrt().inverse();
    RowVec mean = state.running_mean.data.transpose();
    Tensor<Scalar> out(xv.shape);
    auto om = out.mat(N, C);
    auto xm = xv.mat(N, C);
    for (Index i = 0; i < N; ++i)
      om.row(i) = ((xm.row(i) - mean).cwiseProduct(inv_std)).cwiseProduct(gm.row(0)) + bm.row(0);
    int outid = g.add_value(std::move(out), needs);
    g.set_backprop(outid, [=](Graph<Scalar>& gg) {
      const Tensor<Scalar>& go = gg.grad(outid);
      auto gom = go.mat(N, C);
      if (Tensor<Scalar>* gx = gg.grad_if(x)) {
        RowVec scale = gg.value(gamma).mat(1, C).row(0).cwiseProduct(inv_std);
        auto gxm = gx->mat(N, C);
        for (Index i = 0; i < N; ++i) gxm.row(i) += gom.row(i).cwiseProduct(scale);
      }
      if (Tensor<Scalar>* ggam = gg.grad_if(gamma)) {
        auto xm2 = gg.value(x).mat(N, C);
        RowVec acc = RowVec::Zero(C);
        for (Index i = 0; i < N; ++i) acc += gom.row(i).cwiseProduct((xm2.row(i) - mean).cwiseProduct(inv_std));
        ggam->mat(1, C).row(0) += acc;
      }
      if (Tensor<Scalar>* gbet = gg.grad_if(beta)) gbet->mat(1, C).row(0) += gom.colwise().sum();
    });
    return outid;
  }

  if (N < 2) throw Error(ErrorCode::validation, "batchnorm: batch statistics need at least 2 rows per feature");

  auto xm = xv.mat(N, C);
  RowVec mean = xm.colwise().sum() / static_cast<Scalar>(N);
  RowVec var = RowVec::Zero(C);
  for (Index i = 0; i < N; ++i) var += (xm.row(i) - mean).cwiseAbs2();
  var /= static_cast<Scalar>(N);
  RowVec inv_std = (var.array() + state.eps).sqrt().inverse().matrix();

  if (mode == BnMode::refresh) {
    state.running_mean.data = mean.transpose().array();
    state.running_var.data = var.transpose().array();
  } else {
    state.running_mean.data =
        state.momentum * state.running_mean.data + (Scalar(1) - state.momentum) * mean.transpose().array();
    state.running_var.data =
        state.momentum * state.running_var.data + (Scalar(1) - state.momentum) * var.transpose().array();
  }

  // x_hat is kept for the backward pass and the gamma gradient.
  auto xhat = std::make_shared<MatX<Scalar>>(N, C);
  for (Index i = 0; i < N; ++i) xhat->row(i) = (xm.row(i) - mean).cwiseProduct(inv_std);

  Tensor<Scalar> out(xv.shape);
  auto om = out.mat(N, C);
  for (Index i = 0; i < N; ++i) om.row(i) = xhat->row(i).cwiseProduct(gm.row(0)) + bm.row(0);

  int outid = g.add_value(std::move(out), needs);
  g.set_backprop(outid, [=](Graph<Scalar>& gg) {
    const Tensor<Scalar>& go = gg.grad(outid);
    auto gom = go.mat(N, C);
    if (Tensor<Scalar>* ggam = gg.grad_if(gamma)) {
      RowVec acc = RowVec::Zero(C);
      for (Index i = 0; i < N; ++i) acc += gom.row(i).cwiseProduct(xhat->row(i));
      ggam->mat(1, C).row(0) += acc;
    }
    if (Tensor<Scalar>* gbet = gg.grad_if(beta)) gbet->mat(1, C).row(0) += gom.colwise().sum();
    if (Tensor<Scalar>* gx = gg.grad_if(x)) {
      RowVec gam = gg.value(gamma).mat(1, C).row(0);
      RowVec sum_dxhat = RowVec::Zero(C);
      RowVec sum_dxhat_xhat = RowVec::Zero(C);
      MatX<Scalar> dxhat(N, C);
      for (Index i = 0; i < N; ++i) {
        dxhat.row(i) = gom.row(i).cwiseProduct(gam);
        sum_dxhat += dxhat.row(i);
        sum_dxhat_xhat += dxhat.row(i).cwiseProduct(xhat->row(i));
      }
      const Scalar invN = Scalar(1) / static_cast<Scalar>(N);
      auto gxm = gx->mat(N, C);
      for (Index i = 0; i < N; ++i)
        gxm.row(i) += ((dxhat.row(i) - invN * sum_dxhat - invN * xhat->row(i).cwiseProduct(sum_dxhat_xhat))
                           .cwiseProduct(inv_std));
    }
  });
  return outid;
}

/// Row-wise softmax as a graph op (used where gradients must flow; inference
/// code can call softmax_rows directly).
template <class Scalar>
int softmax(Graph<Scalar>& g, int x) {
  const Tensor<Scalar>& xv = g.value(x);
  Tensor<Scalar> out = softmax_rows(xv);
  int outid = g.add_value(std::move(out), g.needs_grad(x));
  g.set_backprop(outid, [=](Graph<Scalar>& gg) {
    Tensor<Scalar>* gx = gg.grad_if(x);
    if (!gx) return;
    const Tensor<Scalar>& sv = gg.value(outid);
    const Tensor<Scalar>& go = gg.grad(outid);
    auto sm = sv.mat2d();
    auto gom = go.mat(sv.rows2d(), sv.cols2d());
    auto gxm = gx->mat(sv.rows2d(), sv.cols2d());
    for (Index i = 0; i < sm.rows(); ++i) {
      const Scalar dot = gom.row(i).cwiseProduct(sm.row(i)).sum();
      gxm.row(i) += sm.row(i).cwiseProduct((gom.row(i).array() - dot).matrix());
    }
  });
  return outid;
}

template <class Scalar>
struct SoftmaxXent {
  int loss;                ///< scalar node: mean cross-entropy over the batch
  Tensor<Scalar> probs;    ///< [batch, classes] softmax probabilities
};

/// Numerically stabilized softmax + categorical cross-entropy, averaged over
/// the batch.
template <class Scalar>
SoftmaxXent<Scalar> softmax_xent(Graph<Scalar>& g, int logits, const std::vector<int>& labels) {
  const Tensor<Scalar>& lv = g.value(logits);
  detail::require_rank(lv, 2, "softmax_xent logits");
  const Index B = lv.dim(0), K = lv.dim(1);
  if (K < 2) throw Error(ErrorCode::shape, "softmax_xent: needs at least 2 classes");
  if (static_cast<Index>(labels.size()) != B)
    throw Error(ErrorCode::shape, "softmax_xent: label count does not match batch size");
  for (int y : labels)
    if (y < 0 || y >= K)
      throw Error(ErrorCode::validation, "softmax_xent: label " + std::to_string(y) + " outside [0," +
                                             std::to_string(K) + ")");

  auto lm = lv.mat(B, K);
  Tensor<Scalar> probs({B, K});
  auto pm = probs.mat(B, K);
  Scalar loss = 0;
  for (Index i = 0; i < B; ++i) {
    const Scalar m = lm.row(i).maxCoeff();
    pm.row(i) = (lm.row(i).array() - m).exp();
    const Scalar z = pm.row(i).sum();
    pm.row(i) /= z;
    loss -= (lm(i, labels[static_cast<size_t>(i)]) - m) - std::log(z);
  }
  loss /= static_cast<Scalar>(B);

  int outid = g.add_value(Tensor<Scalar>::scalar(loss), g.needs_grad(logits));
  Tensor<Scalar> probs_copy = probs;
  std::vector<int> labels_copy = labels;
  g.set_backprop(outid, [=](Graph<Scalar>& gg) {
    Tensor<Scalar>* gl = gg.grad_if(logits);
    if (!gl) return;
    const Scalar upstream = gg.grad(outid).data[0];
    auto glm = gl->mat(B, K);
    auto pm2 = probs_copy.mat(B, K);
    const Scalar scale = upstream / static_cast<Scalar>(B);
    for (Index i = 0; i < B; ++i) {
      glm.row(i) += scale * pm2.row(i);
      glm(i, labels_copy[static_cast<size_t>(i)]) -= scale;
    }
  });
  return {outid, std::move(probs)};
}

/// Mean over every element (test and grad-check helper).
template <class Scalar>
int mean_all(Graph<Scalar>& g, int x) {
  const Tensor<Scalar>& xv = g.value(x);
  const Index n = xv.size();
  Tensor<Scalar> out = Tensor<Scalar>::scalar(xv.data.sum() / static_cast<Scalar>(n));
  int outid = g.add_value(std::move(out), g.needs_grad(x));
  g.set_backprop(outid, [=](Graph<Scalar>& gg) {
    if (Tensor<Scalar>* gx = gg.grad_if(x))
      gx->data += gg.grad(outid).data[0] / static_cast<Scalar>(n);
  });
  return outid;
}

/// Sum of squares (test and grad-check helper; gives non-uniform gradients).
template <class Scalar>
int sum_squares(Graph<Scalar>& g, int x) {
  const Tensor<Scalar>& xv = g.value(x);
  Tensor<Scalar> out = Tensor<Scalar>::scalar(xv.data.square().sum());
  int outid = g.add_value(std::move(out), g.needs_grad(x));
  g.set_backprop(outid, [=](Graph<Scalar>& gg) {
    if (Tensor<Scalar>* gx = gg.grad_if(x))
      gx->data += Scalar(2) * gg.grad(outid).data[0] * gg.value(x).data;
  });
  return outid;
}

}  // namespace eyedent::autograd
