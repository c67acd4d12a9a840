#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewuq/core/binary_io.hpp"
#include "viewuq/core/rng.hpp"
#include "viewuq/model/checkpoint.hpp"
#include "viewuq/model/trainer.hpp"
#include "viewuq/uq/uncertainty.hpp"

namespace viewuq {

/// Member k of an ensemble rooted at `root` uses mix_seed(root, k) both for
/// its weight initialization and for its data order.
inline std::uint64_t member_seed(std::uint64_t root, std::size_t k) { return mix_seed(root, k); }

inline std::string member_file_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "member_%03zu.ckpt", k);
  return buf;
}

struct EnsembleTrainOptions {
  ModelConfig model;  // dropout_p is forced to 0; seed is replaced per member
  TrainConfig train;  // seed is replaced per member
  std::uint64_t root_seed = 0;
  std::size_t members = 8;
};

/// Trains `opts.members` dropout-free members and writes them, plus an
/// ensemble.json index, into `dir`. Members already on disk with matching
/// seeds are loaded instead of retrained.
inline EnsembleSet train_ensemble(const std::filesystem::path& dir, const Dataset& data,
                                  const EnsembleTrainOptions& opts,
                                  const std::function<void(std::size_t member, std::size_t epoch, float loss)>& on_epoch = {}) {
  if (opts.members < 1) throw InvalidArgument("ensemble needs at least one member");
  EnsembleSet set;
  nlohmann::json index{{"format", "viewuq-ensemble-1"},
                       {"root_seed", opts.root_seed},
                       {"data_seed", data.seed},
                       {"train", opts.train.to_json()},
                       {"members", nlohmann::json::array()}};
  for (std::size_t k = 0; k < opts.members; ++k) {
    const std::uint64_t s = member_seed(opts.root_seed, k);
    const auto path = dir / member_file_name(k);
    bool reused = false;
    if (std::filesystem::exists(path)) {
      LoadedCheckpoint ck = load_checkpoint(path);
      if (ck.model.config().seed == s && ck.training.train_seed == s && ck.training.epochs == opts.train.epochs &&
          ck.training.data_seed == data.seed) {
        set.members.push_back(std::move(ck.model));
        reused = true;
      }
    }
    if (!reused) {
      ModelConfig mc = opts.model;
      mc.dropout_p = 0.0f;
      mc.seed = s;
      TrainConfig tc = opts.train;
      tc.seed = s;
      SynthesisModel model(mc);
      const auto res = train(model, data, tc, [&](std::size_t e, float l) {
        if (on_epoch) on_epoch(k, e, l);
      });
      save_checkpoint(path, model, {tc.epochs, res.loss_history.back(), data.seed, s});
      set.members.push_back(std::move(model));
    }
    index["members"].push_back({{"file", member_file_name(k)}, {"seed", s}});
  }
  write_text_atomic(dir / "ensemble.json", index.dump(1) + "\n");
  return set;
}

inline EnsembleSet load_ensemble(const std::filesystem::path& dir) {
  const auto path = dir / "ensemble.json";
  if (!std::filesystem::exists(path)) throw IoError(dir.string() + ": no ensemble.json");
  const auto index = nlohmann::json::parse(read_text_file(path));
  EnsembleSet set;
  for (const auto& m : index.at("members")) {
    set.members.push_back(load_checkpoint(dir / m.at("file").get<std::string>()).model);
  }
  set.validate();
  return set;
}

}  // namespace viewuq
