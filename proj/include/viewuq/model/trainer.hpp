#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "viewuq/autodiff/adam.hpp"
#include "viewuq/core/error.hpp"
#include "viewuq/core/rng.hpp"
#include "viewuq/model/synthesis_model.hpp"
#include "viewuq/render/dataset.hpp"

namespace viewuq {

struct TrainConfig {
  std::size_t epochs = 1500;
  std::size_t batch_size = 64;
  AdamConfig adam{};
  std::uint64_t seed = 0;
  DropoutMode dropout_mode = DropoutMode::Train;

  nlohmann::json to_json() const {
    return {{"epochs", epochs}, {"batch_size", batch_size}, {"lr", adam.lr}, {"beta1", adam.beta1},
            {"beta2", adam.beta2}, {"eps", adam.eps}, {"seed", seed},
            {"dropout_mode", dropout_mode == DropoutMode::Off ? "off" : "train"}};
  }
};

struct TrainResult {
  std::vector<float> loss_history;  // mean per-sample MSE of each epoch
  AdamState optimizer;
};

using EpochCallback = std::function<void(std::size_t epoch, float loss)>;

/// Mini-batch Adam on the MSE loss. Epoch e visits samples in the order of
/// shuffle(CounterRng(mix_seed(seed, e))); dropout masks of step s, item n use
/// mix_seed(mix_seed(seed ^ 0xD50, s), n). Batch norm uses batch statistics.
inline TrainResult train(SynthesisModel& model, const Dataset& data, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  if (data.empty()) throw InvalidArgument("cannot train on an empty dataset");
  if (data.resolution != model.resolution()) {
    throw InvalidArgument("dataset resolution " + std::to_string(data.resolution) + " does not match model resolution " +
                          std::to_string(model.resolution()));
  }
  if (cfg.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  cfg.adam.validate();

  auto& net = model.network();
  auto& g = net.graph;
  g.set_batch_norm_training(true);
  g.set_dropout_mode(cfg.dropout_mode);

  TrainResult result;
  result.optimizer = AdamState(cfg.adam);
  auto params = g.trainable_parameters();
  result.optimizer.allocate(params);

  const std::size_t n = data.size(), r = model.resolution(), per = 3 * r * r;
  std::vector<std::size_t> order(n);
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng(mix_seed(cfg.seed, epoch));
    shuffle(std::span<std::size_t>(order), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      Tensor views = Tensor::zeros({count, 2});
      Tensor target = Tensor::zeros({count, 3, r, r});
      std::vector<std::uint64_t> seeds(count);
      const std::uint64_t step_seed = mix_seed(cfg.seed ^ 0xD50ULL, step);
      for (std::size_t i = 0; i < count; ++i) {
        const auto& e = data.entries[order[start + i]];
        const auto nv = normalize_view(e.view);
        views.data[2 * i] = nv[0];
        views.data[2 * i + 1] = nv[1];
        std::copy(e.image.data.begin(), e.image.data.end(), target.data.begin() + static_cast<long>(i * per));
        seeds[i] = mix_seed(step_seed, i);
      }
      g.set_sample_seeds(std::move(seeds));
      const NodeId loss_target[] = {net.loss};
      g.forward({{"view", std::move(views)}, {"target", std::move(target)}}, loss_target);
      g.backward(net.loss);
      adam_step(params, result.optimizer);
      epoch_loss += static_cast<double>(g.value(net.loss).data[0]) * static_cast<double>(count);
      ++step;
    }
    const float mean_loss = static_cast<float>(epoch_loss / static_cast<double>(n));
    result.loss_history.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  g.set_batch_norm_training(false);
  g.set_dropout_mode(DropoutMode::Off);
  g.clear_sample_seeds();
  g.release_activations();
  return result;
}

}  // namespace viewuq
