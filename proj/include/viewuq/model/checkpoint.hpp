#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "viewuq/autodiff/adam.hpp"
#include "viewuq/autodiff/tensor_io.hpp"
#include "viewuq/model/synthesis_model.hpp"

namespace viewuq {

struct TrainingMeta {
  std::size_t epochs = 0;
  float final_loss = 0.0f;
  std::uint64_t data_seed = 0;
  std::uint64_t train_seed = 0;

  nlohmann::json to_json() const {
    return {{"epochs", epochs}, {"final_loss", final_loss}, {"data_seed", data_seed}, {"train_seed", train_seed}};
  }
  static TrainingMeta from_json(const nlohmann::json& j) {
    TrainingMeta m;
    m.epochs = j.value("epochs", std::size_t{0});
    m.final_loss = j.value("final_loss", 0.0f);
    m.data_seed = j.value("data_seed", std::uint64_t{0});
    m.train_seed = j.value("train_seed", std::uint64_t{0});
    return m;
  }
};

struct LoadedCheckpoint {
  SynthesisModel model;
  TrainingMeta training;
  std::optional<AdamState> optimizer;
};

/// Parameters and batch-norm statistics under their graph names; optional Adam
/// moments as "adam.m.<name>" / "adam.v.<name>". The header meta carries the
/// model config, training metadata and the config-derived parameter count.
inline void save_checkpoint(const std::filesystem::path& path, SynthesisModel& model, const TrainingMeta& meta,
                            const AdamState* optimizer = nullptr) {
  TensorFile file;
  file.seed = model.config().seed;
  file.meta = {{"kind", "viewuq-synthesis-checkpoint"},
               {"config", model.config().to_json()},
               {"training", meta.to_json()},
               {"parameter_count", model.config().parameter_count()}};
  auto& g = model.graph();
  for (NodeId id : g.parameter_ids()) {
    const auto& v = g.value(id);
    file.arrays.push_back({g.node(id).name, v.shape, v.data});
  }
  for (auto& [name, buf] : g.buffers()) file.arrays.push_back({name, {buf->size()}, *buf});
  if (optimizer) {
    file.meta["adam"] = {{"lr", optimizer->config.lr},       {"beta1", optimizer->config.beta1},
                         {"beta2", optimizer->config.beta2}, {"eps", optimizer->config.eps},
                         {"step_count", optimizer->step_count}};
    std::size_t k = 0;
    for (NodeId id : g.parameter_ids()) {
      if (!g.node(id).trainable) continue;
      const auto& name = g.node(id).name;
      file.arrays.push_back({"adam.m." + name, {optimizer->first_moment[k].size()}, optimizer->first_moment[k]});
      file.arrays.push_back({"adam.v." + name, {optimizer->second_moment[k].size()}, optimizer->second_moment[k]});
      ++k;
    }
  }
  save_tensor_file(path, file);
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const TensorFile file = load_tensor_file(path);
  if (file.meta.value("kind", "") != "viewuq-synthesis-checkpoint") {
    throw IoError(path.string() + ": not a synthesis-model checkpoint");
  }
  const ModelConfig cfg = ModelConfig::from_json(file.meta.at("config"));
  LoadedCheckpoint out{SynthesisModel(cfg), TrainingMeta::from_json(file.meta.value("training", nlohmann::json{})),
                       std::nullopt};
  if (file.meta.at("parameter_count").get<std::size_t>() != cfg.parameter_count()) {
    throw IoError(path.string() + ": header parameter count disagrees with its config");
  }
  auto& g = out.model.graph();
  std::size_t loaded = 0;
  for (NodeId id : g.parameter_ids()) {
    auto& v = g.mutable_value(id);
    const NamedArray& a = file.at(g.node(id).name);
    if (a.shape != v.shape) {
      throw IoError(path.string() + ": '" + a.name + "' has shape " + shape_str(a.shape) + ", model expects " +
                    shape_str(v.shape));
    }
    v.data = a.data;
    loaded += a.data.size();
  }
  if (loaded != cfg.parameter_count()) throw IoError(path.string() + ": parameter count mismatch");
  for (auto& [name, buf] : g.buffers()) {
    const NamedArray& a = file.at(name);
    if (a.data.size() != buf->size()) throw IoError(path.string() + ": buffer '" + name + "' has wrong size");
    *buf = a.data;
  }
  if (file.meta.contains("adam")) {
    const auto& j = file.meta["adam"];
    AdamState st(AdamConfig{j.at("lr").get<float>(), j.at("beta1").get<float>(), j.at("beta2").get<float>(),
                            j.at("eps").get<float>()});
    st.step_count = j.at("step_count").get<std::uint64_t>();
    for (NodeId id : g.parameter_ids()) {
      if (!g.node(id).trainable) continue;
      st.first_moment.push_back(file.at("adam.m." + g.node(id).name).data);
      st.second_moment.push_back(file.at("adam.v." + g.node(id).name).data);
    }
    out.optimizer = std::move(st);
  }
  return out;
}

}  // namespace viewuq
