#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "viewuq/autodiff/tensor.hpp"
#include "viewuq/core/error.hpp"
#include "viewuq/core/rng.hpp"

namespace viewuq {

enum class OpKind {
  Input,
  Parameter,
  Identity,
  Affine,
  Dense,
  Conv2d,
  Upsample2x,
  BatchNorm2d,
  Relu,
  Tanh,
  Reshape,
  Add,
  Dropout2d,
  Sum,
  MseLoss,
  L1Norm,
};

constexpr std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Parameter: return "parameter";
    case OpKind::Identity: return "identity";
    case OpKind::Affine: return "affine";
    case OpKind::Dense: return "dense";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Upsample2x: return "upsample2x";
    case OpKind::BatchNorm2d: return "batch_norm2d";
    case OpKind::Relu: return "relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::Reshape: return "reshape";
    case OpKind::Add: return "add";
    case OpKind::Dropout2d: return "dropout2d";
    case OpKind::Sum: return "sum";
    case OpKind::MseLoss: return "mse_loss";
    case OpKind::L1Norm: return "l1_norm";
  }
  return "?";
}

/// Train and McEval both draw fresh channel masks; Off is the identity.
enum class DropoutMode { Train, McEval, Off };

using NodeId = std::size_t;

/// Define-then-run reverse-mode graph. Nodes are appended in topological
/// order, so node k only ever reads nodes with smaller ids. The first axis of
/// every activation is the batch axis.
///
/// Dropout masks are keyed by a per-sample seed: mask bits for batch item n at
/// dropout layer d come from CounterRng(mix_seed(sample_seed[n], d)), one draw
/// per channel. A stochastic pass is therefore the same whether it runs alone
/// or inside a batch.
template <typename T>
class BasicGraph {
 public:
  using TensorT = BasicTensor<T>;

  struct Node {
    OpKind kind = OpKind::Identity;
    std::string name;
    std::vector<NodeId> inputs;
    TensorT value;
    bool computed = false;
    bool trainable = false;     // parameters
    T alpha = T(1);             // affine scale, dropout p, batch-norm momentum
    T beta = T(0);              // affine shift, batch-norm eps
    Shape target_shape;         // reshape, per sample
    std::size_t ordinal = 0;    // dropout layer index
    std::vector<T> running_mean;
    std::vector<T> running_var;
    std::vector<T> saved;       // op context for backward
    std::vector<T> saved_aux;
    bool saved_train = false;
  };

  // ---- construction --------------------------------------------------------

  NodeId input(std::string name, bool requires_grad = false) {
    for (NodeId id : input_ids_) {
      if (nodes_[id].name == name) throw InvalidArgument("duplicate graph input '" + name + "'");
    }
    Node n;
    n.kind = OpKind::Input;
    n.name = std::move(name);
    n.value.requires_grad = requires_grad;
    const NodeId id = push(std::move(n));
    input_ids_.push_back(id);
    return id;
  }

  NodeId parameter(std::string name, TensorT init, bool trainable = true) {
    Node n;
    n.kind = OpKind::Parameter;
    n.name = std::move(name);
    n.value = std::move(init);
    n.value.requires_grad = trainable;
    n.trainable = trainable;
    n.computed = true;
    const NodeId id = push(std::move(n));
    param_ids_.push_back(id);
    return id;
  }

  NodeId identity(NodeId x, std::string name = {}) { return unary(OpKind::Identity, x, std::move(name)); }
  NodeId relu(NodeId x, std::string name = {}) { return unary(OpKind::Relu, x, std::move(name)); }
  NodeId tanh(NodeId x, std::string name = {}) { return unary(OpKind::Tanh, x, std::move(name)); }
  NodeId upsample2x(NodeId x, std::string name = {}) { return unary(OpKind::Upsample2x, x, std::move(name)); }
  NodeId sum(NodeId x, std::string name = {}) { return unary(OpKind::Sum, x, std::move(name)); }
  NodeId l1_norm(NodeId x, std::string name = {}) { return unary(OpKind::L1Norm, x, std::move(name)); }

  NodeId affine(NodeId x, T scale, T shift, std::string name = {}) {
    const NodeId id = unary(OpKind::Affine, x, std::move(name));
    nodes_[id].alpha = scale;
    nodes_[id].beta = shift;
    return id;
  }

  /// y = x W^T + b with x [N, in], W [out, in], b [out].
  NodeId dense(NodeId x, NodeId weight, NodeId bias, std::string name = {}) {
    return op(OpKind::Dense, {x, weight, bias}, std::move(name));
  }

  /// Stride 1, zero "same" padding, odd square kernel W [Co, Ci, k, k], b [Co].
  NodeId conv2d(NodeId x, NodeId weight, NodeId bias, std::string name = {}) {
    return op(OpKind::Conv2d, {x, weight, bias}, std::move(name));
  }

  NodeId batch_norm2d(NodeId x, NodeId gamma, NodeId beta, std::string name = {},
                      T momentum = T(0.1), T eps = T(1e-5)) {
    const NodeId id = op(OpKind::BatchNorm2d, {x, gamma, beta}, std::move(name));
    Node& n = nodes_[id];
    n.alpha = momentum;
    n.beta = eps;
    const std::size_t channels = nodes_[gamma].value.numel();
    n.running_mean.assign(channels, T(0));
    n.running_var.assign(channels, T(1));
    return id;
  }

  /// Keeps the batch axis and reshapes each sample to `per_sample`.
  NodeId reshape(NodeId x, Shape per_sample, std::string name = {}) {
    const NodeId id = unary(OpKind::Reshape, x, std::move(name));
    nodes_[id].target_shape = std::move(per_sample);
    return id;
  }

  NodeId add(NodeId a, NodeId b, std::string name = {}) { return op(OpKind::Add, {a, b}, std::move(name)); }

  /// Channel dropout on [N, C, H, W]; on [N, C] each feature is a channel.
  NodeId dropout2d(NodeId x, T p, std::string name = {}) {
    if (!(p >= T(0) && p < T(1))) {
      throw InvalidArgument("dropout probability must lie in [0, 1), got " + std::to_string(p));
    }
    const NodeId id = unary(OpKind::Dropout2d, x, std::move(name));
    nodes_[id].alpha = p;
    nodes_[id].ordinal = dropout_count_++;
    return id;
  }

  NodeId mse_loss(NodeId pred, NodeId target, std::string name = {}) {
    return op(OpKind::MseLoss, {pred, target}, std::move(name));
  }

  void mark_output(std::string name, NodeId id) {
    check_id(id);
    outputs_[std::move(name)] = id;
  }

  // ---- execution state -----------------------------------------------------

  void set_dropout_mode(DropoutMode mode) { dropout_mode_ = mode; }
  DropoutMode dropout_mode() const { return dropout_mode_; }
  void set_batch_norm_training(bool training) { bn_training_ = training; }
  bool batch_norm_training() const { return bn_training_; }

  /// Seeds for the batch items of subsequent forward passes. When empty, seeds
  /// are derived as mix_seed(mix_seed(base_seed, forward_index), n).
  void set_sample_seeds(std::vector<std::uint64_t> seeds) { sample_seeds_ = std::move(seeds); }
  void clear_sample_seeds() { sample_seeds_.clear(); }
  void set_base_seed(std::uint64_t seed) {
    base_seed_ = seed;
    forward_count_ = 0;
  }

  void set_check_numerics(bool on) { check_numerics_ = on; }

  /// Frees activations and backward context; parameters and statistics stay.
  void release_activations() {
    for (auto& n : nodes_) {
      if (n.kind == OpKind::Parameter) {
        n.value.grad = {};
        continue;
      }
      n.value.data = {};
      n.value.grad = {};
      n.saved = {};
      n.saved_aux = {};
      n.computed = false;
    }
    scratch_ = {};
    out_scratch_ = {};
    forward_done_ = false;
  }

  void set_trainable(NodeId id, bool on) {
    Node& n = nodes_.at(id);
    if (n.kind != OpKind::Parameter) throw InvalidArgument(describe(id) + " is not a parameter");
    n.trainable = on;
    n.value.requires_grad = on;
  }

  // ---- forward / backward ---------------------------------------------------

  /// Binds `inputs` by name and evaluates the ancestors of `targets` (all nodes
  /// when empty). Returns every marked output that was evaluated.
  std::map<std::string, TensorT> forward(const std::map<std::string, TensorT>& inputs,
                                         std::span<const NodeId> targets = {}) {
    const std::vector<char> needed = ancestors(targets);
    for (auto& n : nodes_) {
      if (n.kind != OpKind::Parameter) n.computed = false;
    }
    forward_done_ = false;
    batch_seeds_.clear();
    const std::uint64_t pass_index = forward_count_++;

    for (NodeId id = 0; id < nodes_.size(); ++id) {
      if (!needed[id]) continue;
      Node& n = nodes_[id];
      if (n.kind == OpKind::Parameter) continue;
      if (n.kind == OpKind::Input) {
        auto it = inputs.find(n.name);
        if (it == inputs.end()) throw InvalidArgument("graph input '" + n.name + "' is not bound");
        const bool rg = n.value.requires_grad;
        n.value.shape = it->second.shape;
        n.value.data = it->second.data;
        n.value.grad.clear();
        n.value.requires_grad = rg;
        if (shape_numel(n.value.shape) != n.value.data.size()) {
          throw ShapeError(describe(id) + ": bound tensor has inconsistent shape " +
                           shape_str(n.value.shape));
        }
      } else {
        if (n.kind == OpKind::Dropout2d) prepare_batch_seeds(id, pass_index);
        n.value.grad.clear();
        eval(id);
      }
      n.computed = true;
      if (check_numerics_) verify_finite(id);
    }
    forward_done_ = true;

    std::map<std::string, TensorT> out;
    for (const auto& [name, id] : outputs_) {
      if (nodes_[id].computed) out.emplace(name, nodes_[id].value);
    }
    return out;
  }

  /// Fills value.grad of every trainable parameter and every requires_grad
  /// input with d(loss)/d(value). Parameter gradients are reset first.
  void backward(NodeId loss) {
    check_id(loss);
    if (!forward_done_ || !nodes_[loss].computed) {
      throw Error("backward called before forward evaluated '" + nodes_[loss].name + "'");
    }
    if (nodes_[loss].value.numel() != 1) {
      throw ShapeError("backward needs a scalar loss; " + describe(loss) + " has shape " +
                       shape_str(nodes_[loss].value.shape));
    }
    needs_grad_.assign(nodes_.size(), 0);
    for (NodeId id = 0; id < nodes_.size(); ++id) {
      Node& n = nodes_[id];
      n.value.grad.clear();
      if (n.kind == OpKind::Parameter) {
        needs_grad_[id] = n.trainable;
        if (n.trainable) n.value.zero_grad();
      } else if (n.kind == OpKind::Input) {
        needs_grad_[id] = n.value.requires_grad && n.computed;
        if (needs_grad_[id]) n.value.zero_grad();
      } else {
        needs_grad_[id] = std::any_of(n.inputs.begin(), n.inputs.end(),
                                      [&](NodeId in) { return needs_grad_[in] != 0; });
      }
    }
    nodes_[loss].value.grad.assign(1, T(1));
    for (NodeId id = loss + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!needs_grad_[id] || !n.computed || n.value.grad.empty()) continue;
      if (n.kind == OpKind::Input || n.kind == OpKind::Parameter) continue;
      eval_backward(id);
    }
  }

  // ---- access --------------------------------------------------------------

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  const TensorT& value(NodeId id) const { return nodes_.at(id).value; }
  TensorT& mutable_value(NodeId id) { return nodes_.at(id).value; }
  NodeId output_id(const std::string& name) const {
    auto it = outputs_.find(name);
    if (it == outputs_.end()) throw InvalidArgument("no graph output named '" + name + "'");
    return it->second;
  }
  const std::vector<NodeId>& parameter_ids() const { return param_ids_; }
  const std::vector<NodeId>& input_ids() const { return input_ids_; }

  NodeId find(const std::string& name) const {
    for (NodeId id = 0; id < nodes_.size(); ++id) {
      if (nodes_[id].name == name) return id;
    }
    throw InvalidArgument("no graph node named '" + name + "'");
  }

  std::vector<TensorT*> trainable_parameters() {
    std::vector<TensorT*> out;
    for (NodeId id : param_ids_) {
      if (nodes_[id].trainable) out.push_back(&nodes_[id].value);
    }
    return out;
  }

  /// Gradient of a requires_grad input after backward.
  const std::vector<T>& input_grad(const std::string& name) const {
    for (NodeId id : input_ids_) {
      if (nodes_[id].name == name) return nodes_[id].value.grad;
    }
    throw InvalidArgument("no graph input named '" + name + "'");
  }

  /// Batch-norm running statistics, named "<node>.running_mean" / ".running_var".
  std::vector<std::pair<std::string, std::vector<T>*>> buffers() {
    std::vector<std::pair<std::string, std::vector<T>*>> out;
    for (auto& n : nodes_) {
      if (n.kind != OpKind::BatchNorm2d) continue;
      out.emplace_back(n.name + ".running_mean", &n.running_mean);
      out.emplace_back(n.name + ".running_var", &n.running_var);
    }
    return out;
  }

 private:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapMat = Eigen::Map<Mat>;
  using ConstMapMat = Eigen::Map<const Mat>;

  NodeId push(Node n) {
    const NodeId id = nodes_.size();
    if (n.name.empty()) n.name = std::string(op_name(n.kind)) + "#" + std::to_string(id);
    nodes_.push_back(std::move(n));
    return id;
  }

  void check_id(NodeId id) const {
    if (id >= nodes_.size()) throw InvalidArgument("node id " + std::to_string(id) + " out of range");
  }

  NodeId op(OpKind kind, std::vector<NodeId> inputs, std::string name) {
    for (NodeId in : inputs) check_id(in);
    Node n;
    n.kind = kind;
    n.name = std::move(name);
    n.inputs = std::move(inputs);
    return push(std::move(n));
  }

  NodeId unary(OpKind kind, NodeId x, std::string name) { return op(kind, {x}, std::move(name)); }

  std::string describe(NodeId id) const {
    return "node " + std::to_string(id) + " '" + nodes_[id].name + "' (" +
           std::string(op_name(nodes_[id].kind)) + ")";
  }

  std::vector<char> ancestors(std::span<const NodeId> targets) const {
    std::vector<char> needed(nodes_.size(), targets.empty() ? 1 : 0);
    for (NodeId t : targets) {
      check_id(t);
      needed[t] = 1;
    }
    for (NodeId id = nodes_.size(); id-- > 0;) {
      if (!needed[id]) continue;
      for (NodeId in : nodes_[id].inputs) needed[in] = 1;
    }
    return needed;
  }

  void verify_finite(NodeId id) const {
    for (T v : nodes_[id].value.data) {
      if (!std::isfinite(v)) throw NumericFault("non-finite value produced by " + describe(id));
    }
  }

  void prepare_batch_seeds(NodeId id, std::uint64_t pass_index) {
    const std::size_t batch = nodes_[nodes_[id].inputs[0]].value.dim(0);
    if (!batch_seeds_.empty()) return;
    if (!sample_seeds_.empty()) {
      if (sample_seeds_.size() != batch) {
        throw ShapeError(describe(id) + ": " + std::to_string(sample_seeds_.size()) +
                         " sample seeds for a batch of " + std::to_string(batch));
      }
      batch_seeds_ = sample_seeds_;
      return;
    }
    batch_seeds_.resize(batch);
    const std::uint64_t pass_seed = mix_seed(base_seed_, pass_index);
    for (std::size_t i = 0; i < batch; ++i) batch_seeds_[i] = mix_seed(pass_seed, i);
  }

  std::vector<T>& grad_of(NodeId id) {
    TensorT& v = nodes_[id].value;
    if (v.grad.empty()) v.grad.assign(v.numel(), T(0));
    return v.grad;
  }

  const TensorT& in(const Node& n, std::size_t k) const { return nodes_[n.inputs[k]].value; }

  void require_rank(NodeId id, const TensorT& t, std::size_t rank, std::string_view what) const {
    if (t.rank() != rank) {
      throw ShapeError(describe(id) + ": " + std::string(what) + " must have rank " +
                       std::to_string(rank) + ", got " + shape_str(t.shape));
    }
  }

  // ---- forward kernels -----------------------------------------------------

  void eval(NodeId id) {
    Node& n = nodes_[id];
    switch (n.kind) {
      case OpKind::Identity:
        n.value.shape = in(n, 0).shape;
        n.value.data = in(n, 0).data;
        break;
      case OpKind::Affine: {
        const TensorT& x = in(n, 0);
        n.value.shape = x.shape;
        n.value.data.resize(x.numel());
        for (std::size_t i = 0; i < x.numel(); ++i) n.value.data[i] = n.alpha * x.data[i] + n.beta;
        break;
      }
      case OpKind::Relu: {
        const TensorT& x = in(n, 0);
        n.value.shape = x.shape;
        n.value.data.resize(x.numel());
        for (std::size_t i = 0; i < x.numel(); ++i) n.value.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
        break;
      }
      case OpKind::Tanh: {
        const TensorT& x = in(n, 0);
        n.value.shape = x.shape;
        n.value.data.resize(x.numel());
        for (std::size_t i = 0; i < x.numel(); ++i) n.value.data[i] = std::tanh(x.data[i]);
        break;
      }
      case OpKind::Reshape: {
        const TensorT& x = in(n, 0);
        if (x.rank() == 0) throw ShapeError(describe(id) + ": cannot reshape a rank-0 tensor");
        Shape s{x.dim(0)};
        s.insert(s.end(), n.target_shape.begin(), n.target_shape.end());
        if (shape_numel(s) != x.numel()) {
          throw ShapeError(describe(id) + ": cannot reshape " + shape_str(x.shape) + " to " + shape_str(s));
        }
        n.value.shape = std::move(s);
        n.value.data = x.data;
        break;
      }
      case OpKind::Add: {
        const TensorT& a = in(n, 0);
        const TensorT& b = in(n, 1);
        if (a.shape != b.shape) {
          throw ShapeError(describe(id) + ": operand shapes " + shape_str(a.shape) + " and " +
                           shape_str(b.shape) + " differ");
        }
        n.value.shape = a.shape;
        n.value.data.resize(a.numel());
        for (std::size_t i = 0; i < a.numel(); ++i) n.value.data[i] = a.data[i] + b.data[i];
        break;
      }
      case OpKind::Sum: {
        double acc = 0.0;
        for (T v : in(n, 0).data) acc += static_cast<double>(v);
        n.value.shape = {1};
        n.value.data.assign(1, static_cast<T>(acc));
        break;
      }
      case OpKind::L1Norm: {
        double acc = 0.0;
        for (T v : in(n, 0).data) acc += std::abs(static_cast<double>(v));
        n.value.shape = {1};
        n.value.data.assign(1, static_cast<T>(acc));
        break;
      }
      case OpKind::MseLoss: {
        const TensorT& p = in(n, 0);
        const TensorT& t = in(n, 1);
        if (p.shape != t.shape) {
          throw ShapeError(describe(id) + ": prediction " + shape_str(p.shape) + " vs target " +
                           shape_str(t.shape));
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < p.numel(); ++i) {
          const double d = static_cast<double>(p.data[i]) - static_cast<double>(t.data[i]);
          acc += d * d;
        }
        n.value.shape = {1};
        n.value.data.assign(1, static_cast<T>(acc / static_cast<double>(p.numel())));
        break;
      }
      case OpKind::Dense: forward_dense(id); break;
      case OpKind::Conv2d: forward_conv(id); break;
      case OpKind::Upsample2x: forward_upsample(id); break;
      case OpKind::BatchNorm2d: forward_batch_norm(id); break;
      case OpKind::Dropout2d: forward_dropout(id); break;
      case OpKind::Input:
      case OpKind::Parameter: break;
    }
  }

  void forward_dense(NodeId id) {
    Node& n = nodes_[id];
    const TensorT& x = in(n, 0);
    const TensorT& w = in(n, 1);
    const TensorT& b = in(n, 2);
    require_rank(id, x, 2, "input");
    require_rank(id, w, 2, "weight");
    const std::size_t batch = x.dim(0), fan_in = x.dim(1), fan_out = w.dim(0);
    if (w.dim(1) != fan_in || b.numel() != fan_out) {
      throw ShapeError(describe(id) + ": input " + shape_str(x.shape) + " incompatible with weight " +
                       shape_str(w.shape) + " and bias " + shape_str(b.shape));
    }
    n.value.shape = {batch, fan_out};
    n.value.data.resize(batch * fan_out);
    ConstMapMat X(x.data.data(), batch, fan_in);
    ConstMapMat W(w.data.data(), fan_out, fan_in);
    MapMat Y(n.value.data.data(), batch, fan_out);
    // Per row: a sample's output is independent of the batch size.
    for (std::size_t r = 0; r < batch; ++r) Y.row(r).noalias() = X.row(r) * W.transpose();
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t c = 0; c < fan_out; ++c) Y(r, c) += b.data[c];
    }
  }

  struct ConvDims {
    std::size_t batch, cin, height, width, cout, k, pad;
    std::size_t rows() const { return cin * k * k; }
    std::size_t cols() const { return batch * height * width; }
  };

  ConvDims conv_dims(NodeId id) const {
    const Node& n = nodes_[id];
    const TensorT& x = in(n, 0);
    const TensorT& w = in(n, 1);
    const TensorT& b = in(n, 2);
    require_rank(id, x, 4, "input");
    require_rank(id, w, 4, "weight");
    ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(2) / 2};
    if (w.dim(1) != d.cin) {
      throw ShapeError(describe(id) + ": input has " + std::to_string(d.cin) +
                       " channels but kernel expects " + std::to_string(w.dim(1)));
    }
    if (w.dim(2) != w.dim(3) || d.k % 2 == 0) {
      throw ShapeError(describe(id) + ": kernel must be square and odd, got " + shape_str(w.shape));
    }
    if (b.numel() != d.cout) {
      throw ShapeError(describe(id) + ": bias " + shape_str(b.shape) + " for " +
                       std::to_string(d.cout) + " output channels");
    }
    return d;
  }

  // col[(ci*k + ky)*k + kx][n*H*W + y*W + x] = input[n][ci][y+ky-pad][x+kx-pad] (zero outside)
  static void im2col(const T* src, const ConvDims& d, std::vector<T>& col) {
    const std::size_t hw = d.height * d.width, cols = d.cols();
    col.assign(d.rows() * cols, T(0));
    for (std::size_t ci = 0; ci < d.cin; ++ci) {
      for (std::size_t ky = 0; ky < d.k; ++ky) {
        for (std::size_t kx = 0; kx < d.k; ++kx) {
          T* row = col.data() + ((ci * d.k + ky) * d.k + kx) * cols;
          const long dy = static_cast<long>(ky) - static_cast<long>(d.pad);
          const long dx = static_cast<long>(kx) - static_cast<long>(d.pad);
          for (std::size_t b = 0; b < d.batch; ++b) {
            const T* plane = src + (b * d.cin + ci) * hw;
            T* out = row + b * hw;
            for (std::size_t y = 0; y < d.height; ++y) {
              const long sy = static_cast<long>(y) + dy;
              if (sy < 0 || sy >= static_cast<long>(d.height)) continue;
              const std::size_t x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
              const std::size_t x1 = dx > 0 ? d.width - static_cast<std::size_t>(dx) : d.width;
              const T* s = plane + static_cast<std::size_t>(sy) * d.width;
              T* o = out + y * d.width;
              for (std::size_t x = x0; x < x1; ++x) o[x] = s[static_cast<long>(x) + dx];
            }
          }
        }
      }
    }
  }

  static void col2im_add(const std::vector<T>& col, const ConvDims& d, T* dst) {
    const std::size_t hw = d.height * d.width, cols = d.cols();
    for (std::size_t ci = 0; ci < d.cin; ++ci) {
      for (std::size_t ky = 0; ky < d.k; ++ky) {
        for (std::size_t kx = 0; kx < d.k; ++kx) {
          const T* row = col.data() + ((ci * d.k + ky) * d.k + kx) * cols;
          const long dy = static_cast<long>(ky) - static_cast<long>(d.pad);
          const long dx = static_cast<long>(kx) - static_cast<long>(d.pad);
          for (std::size_t b = 0; b < d.batch; ++b) {
            T* plane = dst + (b * d.cin + ci) * hw;
            const T* src = row + b * hw;
            for (std::size_t y = 0; y < d.height; ++y) {
              const long sy = static_cast<long>(y) + dy;
              if (sy < 0 || sy >= static_cast<long>(d.height)) continue;
              const std::size_t x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
              const std::size_t x1 = dx > 0 ? d.width - static_cast<std::size_t>(dx) : d.width;
              T* o = plane + static_cast<std::size_t>(sy) * d.width;
              const T* s = src + y * d.width;
              for (std::size_t x = x0; x < x1; ++x) o[static_cast<long>(x) + dx] += s[x];
            }
          }
        }
      }
    }
  }

  void forward_conv(NodeId id) {
    const ConvDims d = conv_dims(id);
    Node& n = nodes_[id];
    const TensorT& x = in(n, 0);
    const TensorT& w = in(n, 1);
    const TensorT& b = in(n, 2);
    const std::size_t hw = d.height * d.width;
    ConvDims one = d;
    one.batch = 1;
    ConstMapMat W(w.data.data(), d.cout, d.rows());
    n.value.shape = {d.batch, d.cout, d.height, d.width};
    n.value.data.resize(d.batch * d.cout * hw);
    // One GEMM per sample, same shape for any batch size.
    for (std::size_t bi = 0; bi < d.batch; ++bi) {
      im2col(x.data.data() + bi * d.cin * hw, one, scratch_);
      MapMat O(n.value.data.data() + bi * d.cout * hw, d.cout, hw);
      O.noalias() = W * ConstMapMat(scratch_.data(), d.rows(), hw);
      for (std::size_t co = 0; co < d.cout; ++co) {
        T* dst = n.value.data.data() + (bi * d.cout + co) * hw;
        const T bias = b.data[co];
        for (std::size_t p = 0; p < hw; ++p) dst[p] += bias;
      }
    }
  }

  void forward_upsample(NodeId id) {
    Node& n = nodes_[id];
    const TensorT& x = in(n, 0);
    require_rank(id, x, 4, "input");
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    n.value.shape = {x.dim(0), x.dim(1), 2 * h, 2 * w};
    n.value.data.resize(planes * 4 * h * w);
    for (std::size_t p = 0; p < planes; ++p) {
      const T* src = x.data.data() + p * h * w;
      T* dst = n.value.data.data() + p * 4 * h * w;
      for (std::size_t y = 0; y < 2 * h; ++y) {
        for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
      }
    }
  }

  void forward_batch_norm(NodeId id) {
    Node& n = nodes_[id];
    const TensorT& x = in(n, 0);
    const TensorT& gamma = in(n, 1);
    const TensorT& beta = in(n, 2);
    require_rank(id, x, 4, "input");
    const std::size_t batch = x.dim(0), channels = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (gamma.numel() != channels || beta.numel() != channels || n.running_mean.size() != channels) {
      throw ShapeError(describe(id) + ": input has " + std::to_string(channels) +
                       " channels but statistics are sized " + std::to_string(gamma.numel()));
    }
    n.value.shape = x.shape;
    n.value.data.resize(x.numel());
    n.saved.resize(x.numel());   // normalized input
    n.saved_aux.resize(channels);  // 1 / sqrt(var + eps)
    n.saved_train = bn_training_;
    const std::size_t count = batch * hw;
    for (std::size_t c = 0; c < channels; ++c) {
      double mean, var;
      if (bn_training_) {
        double acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
          const T* p = x.data.data() + (b * channels + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) acc += static_cast<double>(p[i]);
        }
        mean = acc / static_cast<double>(count);
        double sq = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
          const T* p = x.data.data() + (b * channels + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            const double dlt = static_cast<double>(p[i]) - mean;
            sq += dlt * dlt;
          }
        }
        var = sq / static_cast<double>(count);
        const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
        const double m = static_cast<double>(n.alpha);
        n.running_mean[c] = static_cast<T>((1.0 - m) * n.running_mean[c] + m * mean);
        n.running_var[c] = static_cast<T>((1.0 - m) * n.running_var[c] + m * unbiased);
      } else {
        mean = static_cast<double>(n.running_mean[c]);
        var = static_cast<double>(n.running_var[c]);
      }
      const T inv_std = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(n.beta)));
      const T mu = static_cast<T>(mean);
      n.saved_aux[c] = inv_std;
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = (b * channels + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const T xhat = (x.data[off + i] - mu) * inv_std;
          n.saved[off + i] = xhat;
          n.value.data[off + i] = gamma.data[c] * xhat + beta.data[c];
        }
      }
    }
  }

  void forward_dropout(NodeId id) {
    Node& n = nodes_[id];
    const TensorT& x = in(n, 0);
    if (x.rank() != 2 && x.rank() != 4) {
      throw ShapeError(describe(id) + ": expects [N,C] or [N,C,H,W], got " + shape_str(x.shape));
    }
    n.value.shape = x.shape;
    n.value.data = x.data;
    n.saved.clear();
    if (dropout_mode_ == DropoutMode::Off || n.alpha == T(0)) return;
    const std::size_t batch = x.dim(0), channels = x.dim(1);
    const std::size_t inner = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
    const T scale = T(1) / (T(1) - n.alpha);
    n.saved.resize(batch * channels);
    for (std::size_t b = 0; b < batch; ++b) {
      CounterRng rng(mix_seed(batch_seeds_[b], n.ordinal));
      for (std::size_t c = 0; c < channels; ++c) {
        const bool keep = rng.uniform() >= static_cast<double>(n.alpha);
        const T factor = keep ? scale : T(0);
        n.saved[b * channels + c] = factor;
        T* p = n.value.data.data() + (b * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) p[i] *= factor;
      }
    }
  }

  // ---- backward kernels ----------------------------------------------------

  void eval_backward(NodeId id) {
    Node& n = nodes_[id];
    const std::vector<T>& gy = n.value.grad;
    auto wants = [&](std::size_t k) { return needs_grad_[n.inputs[k]] != 0; };
    switch (n.kind) {
      case OpKind::Identity:
      case OpKind::Reshape:
        if (wants(0)) {
          auto& gx = grad_of(n.inputs[0]);
          for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
        }
        break;
      case OpKind::Affine:
        if (wants(0)) {
          auto& gx = grad_of(n.inputs[0]);
          for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += n.alpha * gy[i];
        }
        break;
      case OpKind::Relu:
        if (wants(0)) {
          const TensorT& x = in(n, 0);
          auto& gx = grad_of(n.inputs[0]);
          for (std::size_t i = 0; i < gy.size(); ++i) {
            if (x.data[i] > T(0)) gx[i] += gy[i];
          }
        }
        break;
      case OpKind::Tanh:
        if (wants(0)) {
          auto& gx = grad_of(n.inputs[0]);
          for (std::size_t i = 0; i < gy.size(); ++i) {
            const T y = n.value.data[i];
            gx[i] += gy[i] * (T(1) - y * y);
          }
        }
        break;
      case OpKind::Add:
        for (std::size_t k = 0; k < 2; ++k) {
          if (!wants(k)) continue;
          auto& gx = grad_of(n.inputs[k]);
          for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
        }
        break;
      case OpKind::Sum:
        if (wants(0)) {
          auto& gx = grad_of(n.inputs[0]);
          for (auto& g : gx) g += gy[0];
        }
        break;
      case OpKind::L1Norm:
        if (wants(0)) {
          const TensorT& x = in(n, 0);
          auto& gx = grad_of(n.inputs[0]);
          for (std::size_t i = 0; i < gx.size(); ++i) {
            const T v = x.data[i];
            gx[i] += v > T(0) ? gy[0] : (v < T(0) ? -gy[0] : T(0));
          }
        }
        break;
      case OpKind::MseLoss: {
        const TensorT& p = in(n, 0);
        const TensorT& t = in(n, 1);
        const T coef = T(2) * gy[0] / static_cast<T>(p.numel());
        if (wants(0)) {
          auto& gp = grad_of(n.inputs[0]);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += coef * (p.data[i] - t.data[i]);
        }
        if (wants(1)) {
          auto& gt = grad_of(n.inputs[1]);
          for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= coef * (p.data[i] - t.data[i]);
        }
        break;
      }
      case OpKind::Dropout2d:
        if (wants(0)) {
          auto& gx = grad_of(n.inputs[0]);
          if (n.saved.empty()) {
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
          } else {
            const std::size_t inner = gy.size() / n.saved.size();
            for (std::size_t u = 0; u < n.saved.size(); ++u) {
              const T f = n.saved[u];
              for (std::size_t i = 0; i < inner; ++i) gx[u * inner + i] += f * gy[u * inner + i];
            }
          }
        }
        break;
      case OpKind::Upsample2x:
        if (wants(0)) {
          const TensorT& x = in(n, 0);
          auto& gx = grad_of(n.inputs[0]);
          const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
          for (std::size_t p = 0; p < planes; ++p) {
            T* dst = gx.data() + p * h * w;
            const T* src = gy.data() + p * 4 * h * w;
            for (std::size_t y = 0; y < 2 * h; ++y) {
              for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
            }
          }
        }
        break;
      case OpKind::Dense: backward_dense(id); break;
      case OpKind::Conv2d: backward_conv(id); break;
      case OpKind::BatchNorm2d: backward_batch_norm(id); break;
      case OpKind::Input:
      case OpKind::Parameter: break;
    }
  }

  void backward_dense(NodeId id) {
    Node& n = nodes_[id];
    const TensorT& x = in(n, 0);
    const TensorT& w = in(n, 1);
    const std::size_t batch = x.dim(0), fan_in = x.dim(1), fan_out = w.dim(0);
    ConstMapMat GY(n.value.grad.data(), batch, fan_out);
    if (needs_grad_[n.inputs[0]]) {
      MapMat GX(grad_of(n.inputs[0]).data(), batch, fan_in);
      ConstMapMat W(w.data.data(), fan_out, fan_in);
      for (std::size_t r = 0; r < batch; ++r) GX.row(r).noalias() += GY.row(r) * W;
    }
    if (needs_grad_[n.inputs[1]]) {
      MapMat GW(grad_of(n.inputs[1]).data(), fan_out, fan_in);
      GW.noalias() += GY.transpose() * ConstMapMat(x.data.data(), batch, fan_in);
    }
    if (needs_grad_[n.inputs[2]]) {
      auto& gb = grad_of(n.inputs[2]);
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t c = 0; c < fan_out; ++c) gb[c] += GY(r, c);
      }
    }
  }

  void backward_conv(NodeId id) {
    const ConvDims d = conv_dims(id);
    Node& n = nodes_[id];
    const std::size_t hw = d.height * d.width;
    // dO laid out [Co, N*H*W] to match the forward GEMM.
    out_scratch_.resize(d.cout * d.cols());
    for (std::size_t bi = 0; bi < d.batch; ++bi) {
      for (std::size_t co = 0; co < d.cout; ++co) {
        const T* src = n.value.grad.data() + (bi * d.cout + co) * hw;
        std::copy(src, src + hw, out_scratch_.data() + co * d.cols() + bi * hw);
      }
    }
    ConstMapMat GO(out_scratch_.data(), d.cout, d.cols());
    if (needs_grad_[n.inputs[2]]) {
      auto& gb = grad_of(n.inputs[2]);
      for (std::size_t co = 0; co < d.cout; ++co) {
        const T* row = out_scratch_.data() + co * d.cols();
        double acc = 0.0;
        for (std::size_t p = 0; p < d.cols(); ++p) acc += static_cast<double>(row[p]);
        gb[co] += static_cast<T>(acc);
      }
    }
    if (needs_grad_[n.inputs[1]]) {
      im2col(in(n, 0).data.data(), d, scratch_);
      MapMat GW(grad_of(n.inputs[1]).data(), d.cout, d.rows());
      GW.noalias() += GO * ConstMapMat(scratch_.data(), d.rows(), d.cols()).transpose();
    }
    if (needs_grad_[n.inputs[0]]) {
      ConvDims one = d;
      one.batch = 1;
      scratch_.resize(d.rows() * hw);
      MapMat GC(scratch_.data(), d.rows(), hw);
      ConstMapMat W(in(n, 1).data.data(), d.cout, d.rows());
      T* gx = grad_of(n.inputs[0]).data();
      for (std::size_t bi = 0; bi < d.batch; ++bi) {
        GC.noalias() = W.transpose() * ConstMapMat(n.value.grad.data() + bi * d.cout * hw, d.cout, hw);
        col2im_add(scratch_, one, gx + bi * d.cin * hw);
      }
    }
  }

  void backward_batch_norm(NodeId id) {
    Node& n = nodes_[id];
    const TensorT& x = in(n, 0);
    const TensorT& gamma = in(n, 1);
    const std::vector<T>& gy = n.value.grad;
    const std::size_t batch = x.dim(0), channels = x.dim(1), hw = x.dim(2) * x.dim(3);
    const std::size_t count = batch * hw;
    const bool want_x = needs_grad_[n.inputs[0]] != 0;
    const bool want_g = needs_grad_[n.inputs[1]] != 0;
    const bool want_b = needs_grad_[n.inputs[2]] != 0;
    std::vector<T>* gx = want_x ? &grad_of(n.inputs[0]) : nullptr;
    std::vector<T>* gg = want_g ? &grad_of(n.inputs[1]) : nullptr;
    std::vector<T>* gbeta = want_b ? &grad_of(n.inputs[2]) : nullptr;
    for (std::size_t c = 0; c < channels; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = (b * channels + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sum_dy += static_cast<double>(gy[off + i]);
          sum_dy_xhat += static_cast<double>(gy[off + i]) * static_cast<double>(n.saved[off + i]);
        }
      }
      if (gg) (*gg)[c] += static_cast<T>(sum_dy_xhat);
      if (gbeta) (*gbeta)[c] += static_cast<T>(sum_dy);
      if (!gx) continue;
      const T scale = gamma.data[c] * n.saved_aux[c];
      if (n.saved_train) {
        const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(count));
        const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / static_cast<double>(count));
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t off = (b * channels + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            (*gx)[off + i] += scale * (gy[off + i] - mean_dy - n.saved[off + i] * mean_dy_xhat);
          }
        }
      } else {
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t off = (b * channels + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) (*gx)[off + i] += scale * gy[off + i];
        }
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<NodeId> input_ids_;
  std::vector<NodeId> param_ids_;
  std::map<std::string, NodeId> outputs_;
  std::size_t dropout_count_ = 0;

  DropoutMode dropout_mode_ = DropoutMode::Off;
  bool bn_training_ = false;
  std::vector<std::uint64_t> sample_seeds_;
  std::vector<std::uint64_t> batch_seeds_;
  std::uint64_t base_seed_ = 0;
  std::uint64_t forward_count_ = 0;
  bool forward_done_ = false;
#ifdef NDEBUG
  bool check_numerics_ = false;
#else
  bool check_numerics_ = true;
#endif
  std::vector<char> needs_grad_;
  std::vector<T> scratch_;
  std::vector<T> out_scratch_;
};

using Graph = BasicGraph<float>;

}  // namespace viewuq
