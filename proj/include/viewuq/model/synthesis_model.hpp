#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewuq/autodiff/graph.hpp"
#include "viewuq/core/error.hpp"
#include "viewuq/core/rng.hpp"
#include "viewuq/render/image.hpp"
#include "viewuq/render/view.hpp"

namespace viewuq {

struct ModelConfig {
  std::size_t image_resolution = 32;
  std::size_t n_res_blocks = 3;
  std::vector<std::size_t> fc_widths = {64, 512};
  std::size_t base_channels = 64;
  std::size_t channel_floor = 16;
  float dropout_p = 0.1f;
  std::uint64_t seed = 0;

  void validate() const {
    if (image_resolution < 16 || (image_resolution & (image_resolution - 1)) != 0) {
      throw InvalidArgument("image_resolution must be a power of two >= 16, got " + std::to_string(image_resolution));
    }
    if ((std::size_t{4} << n_res_blocks) != image_resolution) {
      throw InvalidArgument("4 * 2^n_res_blocks must equal image_resolution (" + std::to_string(n_res_blocks) +
                            " blocks for " + std::to_string(image_resolution) + " px)");
    }
    if (base_channels < 1 || channel_floor < 1) throw InvalidArgument("channel counts must be positive");
    for (std::size_t w : fc_widths) {
      if (w < 1) throw InvalidArgument("fully connected widths must be positive");
    }
    if (!(dropout_p >= 0.0f && dropout_p < 1.0f)) throw InvalidArgument("dropout_p must lie in [0, 1)");
  }

  /// Channel count entering each block plus the final one: c0 = base,
  /// c_{b+1} = max(floor, c_b / 2).
  std::vector<std::size_t> block_channels() const {
    std::vector<std::size_t> c{base_channels};
    for (std::size_t b = 0; b < n_res_blocks; ++b) c.push_back(std::max(channel_floor, c.back() / 2));
    return c;
  }

  std::size_t latent_size() const { return base_channels * 16; }

  /// Trainable parameter count (batch-norm running statistics excluded).
  std::size_t parameter_count() const {
    std::size_t n = 0, prev = 2;
    for (std::size_t w : fc_widths) {
      n += prev * w + w;
      prev = w;
    }
    n += prev * latent_size() + latent_size();
    const auto ch = block_channels();
    for (std::size_t b = 0; b < n_res_blocks; ++b) {
      const std::size_t ci = ch[b], co = ch[b + 1];
      n += ci * co * 9 + co;  // conv1
      n += 2 * co;            // bn1
      n += co * co * 9 + co;  // conv2
      n += 2 * co;            // bn2
      n += ci * co + co;      // skip 1x1
    }
    n += ch.back() * 3 * 9 + 3;
    return n;
  }

  nlohmann::json to_json() const {
    return {{"image_resolution", image_resolution}, {"n_res_blocks", n_res_blocks}, {"fc_widths", fc_widths},
            {"base_channels", base_channels},       {"channel_floor", channel_floor}, {"dropout_p", dropout_p},
            {"seed", seed}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.image_resolution = j.at("image_resolution").get<std::size_t>();
    c.n_res_blocks = j.at("n_res_blocks").get<std::size_t>();
    c.fc_widths = j.at("fc_widths").get<std::vector<std::size_t>>();
    c.base_channels = j.at("base_channels").get<std::size_t>();
    c.channel_floor = j.value("channel_floor", std::size_t{16});
    c.dropout_p = j.at("dropout_p").get<float>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  }

  /// Configuration of the full-scale network: 128 px, five blocks.
  static ModelConfig full_scale() {
    ModelConfig c;
    c.image_resolution = 128;
    c.n_res_blocks = 5;
    return c;
  }
};

/// Node handles of a built synthesis network.
template <typename T>
struct SynthesisNetwork {
  BasicGraph<T> graph;
  NodeId view = 0;    // [N, 2] normalized (theta, phi)
  NodeId target = 0;  // [N, 3, R, R]
  NodeId image = 0;   // tanh output
  NodeId loss = 0;    // mse(image, target)
  NodeId l1 = 0;      // sum |image|
};

namespace model_detail {

enum class Init { He, Xavier };

template <typename T>
BasicTensor<T> init_weights(Shape shape, std::size_t fan_in, std::size_t fan_out, Init init, CounterRng& rng) {
  const double bound = init == Init::He ? std::sqrt(6.0 / static_cast<double>(fan_in))
                                        : std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  auto t = BasicTensor<T>::zeros(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace model_detail

/// FC stack (ReLU after every layer) -> reshape to (base, 4, 4) -> residual
/// upsampling blocks -> 3x3 conv to RGB -> tanh. Each block:
///   u = upsample2x(h)
///   main = bn(conv3x3(dropout2d(relu(bn(conv3x3(u))))))
///   skip = conv1x1(u)
///   h' = relu(main + skip)
/// Weights are He-uniform except the output conv (Xavier-uniform, feeds tanh);
/// biases start at zero, batch-norm at gamma = 1, beta = 0. All draws come from
/// CounterRng(mix_seed(seed, 0x1417)) in construction order, computed in double
/// so that float and double instantiations start from the same point.
template <typename T>
SynthesisNetwork<T> build_synthesis_network(const ModelConfig& cfg) {
  using model_detail::Init;
  using model_detail::init_weights;
  cfg.validate();
  CounterRng rng(mix_seed(cfg.seed, 0x1417));
  SynthesisNetwork<T> net;
  auto& g = net.graph;
  net.view = g.input("view", false);
  net.target = g.input("target", false);

  NodeId h = net.view;
  std::size_t prev = 2;
  std::vector<std::size_t> widths = cfg.fc_widths;
  widths.push_back(cfg.latent_size());
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string p = "fc" + std::to_string(i);
    const NodeId w = g.parameter(p + ".weight", init_weights<T>({widths[i], prev}, prev, widths[i], Init::He, rng));
    const NodeId b = g.parameter(p + ".bias", BasicTensor<T>::zeros({widths[i]}));
    h = g.relu(g.dense(h, w, b, p), p + ".relu");
    prev = widths[i];
  }
  h = g.reshape(h, {cfg.base_channels, 4, 4}, "latent");

  const auto ch = cfg.block_channels();
  auto conv = [&](NodeId x, const std::string& p, std::size_t ci, std::size_t co, std::size_t k, Init init) {
    const NodeId w = g.parameter(p + ".weight", init_weights<T>({co, ci, k, k}, ci * k * k, co * k * k, init, rng));
    const NodeId b = g.parameter(p + ".bias", BasicTensor<T>::zeros({co}));
    return g.conv2d(x, w, b, p);
  };
  auto bn = [&](NodeId x, const std::string& p, std::size_t c) {
    const NodeId gamma = g.parameter(p + ".gamma", BasicTensor<T>::filled({c}, T(1)));
    const NodeId beta = g.parameter(p + ".beta", BasicTensor<T>::zeros({c}));
    return g.batch_norm2d(x, gamma, beta, p);
  };
  for (std::size_t b = 0; b < cfg.n_res_blocks; ++b) {
    const std::string p = "block" + std::to_string(b);
    const std::size_t ci = ch[b], co = ch[b + 1];
    const NodeId up = g.upsample2x(h, p + ".up");
    NodeId main = conv(up, p + ".conv1", ci, co, 3, Init::He);
    main = g.relu(bn(main, p + ".bn1", co), p + ".relu1");
    main = g.dropout2d(main, static_cast<T>(cfg.dropout_p), p + ".dropout");
    main = bn(conv(main, p + ".conv2", co, co, 3, Init::He), p + ".bn2", co);
    const NodeId skip = conv(up, p + ".skip", ci, co, 1, Init::He);
    h = g.relu(g.add(main, skip, p + ".sum"), p + ".out");
  }
  net.image = g.tanh(conv(h, "out", ch.back(), 3, 3, Init::Xavier), "image");
  net.loss = g.mse_loss(net.image, net.target, "mse");
  net.l1 = g.l1_norm(net.image, "l1");
  g.mark_output("image", net.image);
  g.mark_output("loss", net.loss);
  g.mark_output("l1", net.l1);
  return net;
}

using Normalized2 = std::array<float, 2>;

/// The view-conditioned image synthesis network in f32.
class SynthesisModel {
 public:
  explicit SynthesisModel(ModelConfig cfg) : config_(std::move(cfg)), net_(build_synthesis_network<float>(config_)) {}

  const ModelConfig& config() const { return config_; }
  std::size_t resolution() const { return config_.image_resolution; }
  SynthesisNetwork<float>& network() { return net_; }
  Graph& graph() { return net_.graph; }

  /// Images for already-normalized inputs. In McEval mode `seeds` holds one
  /// pass seed per input; Off ignores it. Batch norm runs in eval mode.
  std::vector<RgbImage> predict_normalized(std::span<const Normalized2> inputs, DropoutMode mode,
                                           std::span<const std::uint64_t> seeds = {}) {
    if (inputs.empty()) return {};
    prepare_inference(mode, inputs.size(), seeds);
    const NodeId target[] = {net_.image};
    net_.graph.forward({{"view", view_tensor(inputs)}}, target);
    return split_images(net_.graph.value(net_.image));
  }

  std::vector<RgbImage> predict_batch(std::span<const ViewPoint> views, DropoutMode mode,
                                      std::span<const std::uint64_t> seeds = {}) {
    std::vector<Normalized2> in;
    in.reserve(views.size());
    for (const auto& v : views) in.push_back(normalize_view(v));
    return predict_normalized(in, mode, seeds);
  }

  RgbImage predict(const ViewPoint& view, DropoutMode mode = DropoutMode::Off, std::uint64_t seed = 0) {
    const std::uint64_t s[] = {seed};
    return predict_batch(std::span<const ViewPoint>(&view, 1), mode, s).front();
  }

  /// Per-input d(sum |image|)/d(normalized input), evaluated in one batch.
  /// Parameter gradients are not accumulated.
  std::vector<Normalized2> l1_input_gradients(std::span<const Normalized2> inputs, DropoutMode mode,
                                              std::span<const std::uint64_t> seeds = {}) {
    if (inputs.empty()) return {};
    prepare_inference(mode, inputs.size(), seeds);
    auto& g = net_.graph;
    GradientScope scope(g, net_.view);
    const NodeId target[] = {net_.l1};
    g.forward({{"view", view_tensor(inputs)}}, target);
    g.backward(net_.l1);
    const auto& grad = g.input_grad("view");
    std::vector<Normalized2> out(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) out[i] = {grad[2 * i], grad[2 * i + 1]};
    return out;
  }

  /// Named trainable parameters followed by batch-norm running statistics.
  std::vector<std::pair<std::string, std::vector<float>*>> state_arrays() {
    std::vector<std::pair<std::string, std::vector<float>*>> out;
    for (NodeId id : net_.graph.parameter_ids()) {
      out.emplace_back(net_.graph.node(id).name, &net_.graph.mutable_value(id).data);
    }
    for (auto& b : net_.graph.buffers()) out.push_back(b);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (NodeId id : net_.graph.parameter_ids()) n += net_.graph.value(id).numel();
    return n;
  }

  static Tensor view_tensor(std::span<const Normalized2> inputs) {
    Tensor t = Tensor::zeros({inputs.size(), 2});
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      t.data[2 * i] = inputs[i][0];
      t.data[2 * i + 1] = inputs[i][1];
    }
    return t;
  }

  std::vector<RgbImage> split_images(const Tensor& batch) const {
    const std::size_t r = resolution(), per = 3 * r * r;
    std::vector<RgbImage> out(batch.dim(0), RgbImage(r, r));
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::copy(batch.data.begin() + static_cast<long>(i * per), batch.data.begin() + static_cast<long>((i + 1) * per),
                out[i].data.begin());
    }
    return out;
  }

 private:
  // Marks the view input as requiring grad and freezes parameters for the
  // lifetime of the scope.
  class GradientScope {
   public:
    GradientScope(Graph& g, NodeId view) : g_(g), view_(view) {
      g_.mutable_value(view_).requires_grad = true;
      for (NodeId id : g_.parameter_ids()) {
        was_trainable_.push_back(g_.node(id).trainable);
        g_.set_trainable(id, false);
      }
    }
    ~GradientScope() {
      g_.mutable_value(view_).requires_grad = false;
      std::size_t k = 0;
      for (NodeId id : g_.parameter_ids()) g_.set_trainable(id, was_trainable_[k++]);
    }
    GradientScope(const GradientScope&) = delete;
    GradientScope& operator=(const GradientScope&) = delete;

   private:
    Graph& g_;
    NodeId view_;
    std::vector<bool> was_trainable_;
  };

  void prepare_inference(DropoutMode mode, std::size_t batch, std::span<const std::uint64_t> seeds) {
    if (mode == DropoutMode::Train) throw InvalidArgument("inference dropout mode must be off or mc_eval");
    auto& g = net_.graph;
    g.set_batch_norm_training(false);
    g.set_dropout_mode(mode);
    if (mode == DropoutMode::McEval) {
      if (seeds.size() != batch) {
        throw InvalidArgument("mc_eval prediction needs one seed per input (" + std::to_string(seeds.size()) +
                              " for " + std::to_string(batch) + ")");
      }
      g.set_sample_seeds(std::vector<std::uint64_t>(seeds.begin(), seeds.end()));
    } else {
      g.clear_sample_seeds();
    }
  }

  ModelConfig config_;
  SynthesisNetwork<float> net_;
};

}  // namespace viewuq
