#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewuq/core/binary_io.hpp"
#include "viewuq/core/error.hpp"
#include "viewuq/core/rng.hpp"
#include "viewuq/render/dataset.hpp"
#include "viewuq/render/png.hpp"
#include "viewuq/render/renderer.hpp"
#include "viewuq/sweep/grid.hpp"
#include "viewuq/sweep/records.hpp"
#include "viewuq/uq/sensitivity.hpp"
#include "viewuq/uq/uncertainty.hpp"

namespace viewuq {

struct SweepConfig {
  GridSpec grid;
  std::size_t m = 50;
  std::uint64_t seed = 0;
  std::size_t sensitivity_reps = 0;  // MC gradient passes per view; 0 means m
  bool write_images = true;
  std::size_t chunk = 50;

  std::size_t mc_sensitivity_reps() const { return sensitivity_reps == 0 ? m : sensitivity_reps; }
};

struct SweepInputs {
  SynthesisModel* mc_model = nullptr;
  EnsembleSet* ensemble = nullptr;
  VolumeSource volume;
  std::string tf_id = "default";
};

/// Everything a cell computes, before aggregation.
struct CellResult {
  RgbImage ground_truth;
  PredictionBundle mc;
  PredictionBundle ens;
  SensitivityResult mc_sensitivity;
  SensitivityResult ens_sensitivity;
  SweepRecord record;
};

inline const std::vector<std::string>& sweep_image_names() {
  static const std::vector<std::string> names{"gt",     "mc_mean", "ens_mean",   "mc_unc",    "ens_unc",
                                              "mc_err", "ens_err", "mc_errstd", "ens_errstd"};
  return names;
}

/// Per-channel map artifacts: {mc,ens}_{unc,err,errstd}_{R,G,B}.
inline const std::vector<std::string>& sweep_channel_image_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const char* m : {"mc", "ens"}) {
      for (const char* q : {"unc", "err", "errstd"}) {
        for (const char* c : {"R", "G", "B"}) n.push_back(std::string(m) + "_" + q + "_" + c);
      }
    }
    return n;
  }();
  return names;
}

inline std::string cell_dir_name(std::size_t i, std::size_t j) { return std::to_string(i) + "_" + std::to_string(j); }

/// FNV-1a over the model state; ties a sweep directory to the exact weights.
inline std::string model_digest(SynthesisModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= b[k];
      h *= 0x100000001b3ULL;
    }
  };
  for (auto& [name, data] : model.state_arrays()) {
    mix(name.data(), name.size());
    std::vector<char> bytes;
    append_f32_le(bytes, *data);
    mix(bytes.data(), bytes.size());
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::uint64_t cell_seed(std::uint64_t seed, std::size_t index) { return mix_seed(seed, index); }

/// Evaluates one grid cell: ground truth, both sample stacks, bundles and
/// sensitivities. Cell seeds depend only on the flat cell index.
inline CellResult evaluate_cell(const SweepInputs& in, const ScalarVolume& volume, const TransferFunction& tf,
                                const SweepConfig& cfg, std::size_t i, std::size_t j) {
  const ViewPoint view = cfg.grid.view(i, j);
  const std::uint64_t seed = cell_seed(cfg.seed, cfg.grid.index(i, j));
  CellResult r;
  r.ground_truth = render(volume, tf, view, in.mc_model->resolution());
  r.mc = compute_bundle(mc_sample(*in.mc_model, view, cfg.m, seed, cfg.chunk), r.ground_truth);
  r.ens = compute_bundle(ensemble_sample(*in.ensemble, view), r.ground_truth);
  r.mc_sensitivity = sensitivity(*in.mc_model, view, SensitivityMode::McDropout, cfg.mc_sensitivity_reps(), seed,
                                 cfg.chunk);
  r.ens_sensitivity = ensemble_sensitivity(*in.ensemble, view);
  r.record.theta = static_cast<float>(view.theta());
  r.record.phi = static_cast<float>(view.phi());
  r.record.mc = MethodAggregates::from(r.mc, r.mc_sensitivity.mean, r.mc_sensitivity.std);
  r.record.ens = MethodAggregates::from(r.ens, r.ens_sensitivity.mean, r.ens_sensitivity.std);
  return r;
}

namespace sweep_detail {

inline void write_cell_images(const std::filesystem::path& dir, const CellResult& r) {
  std::filesystem::create_directories(dir);
  write_png(dir / "gt.png", to_raster(r.ground_truth));
  for (const auto& [prefix, b] : {std::pair<std::string, const PredictionBundle*>{"mc", &r.mc}, {"ens", &r.ens}}) {
    write_png(dir / (prefix + "_mean.png"), to_raster(b->mean_image));
    write_png(dir / (prefix + "_unc.png"), colorize(b->combined_uncertainty));
    write_png(dir / (prefix + "_err.png"), colorize(b->combined_error));
    write_png(dir / (prefix + "_errstd.png"), colorize(b->combined_error_std));
    static constexpr const char* kCh[3] = {"R", "G", "B"};
    for (std::size_t c = 0; c < 3; ++c) {
      write_png(dir / (prefix + "_unc_" + kCh[c] + ".png"), colorize(b->channel_uncertainty[c]));
      write_png(dir / (prefix + "_err_" + kCh[c] + ".png"), colorize(b->channel_error[c]));
      write_png(dir / (prefix + "_errstd_" + kCh[c] + ".png"), colorize(b->channel_error_std[c]));
    }
  }
}

}  // namespace sweep_detail

/// The part of the manifest that must match for a directory to be resumed.
inline nlohmann::json sweep_fingerprint(const SweepInputs& in, const SweepConfig& cfg) {
  nlohmann::json f;
  f["grid"] = cfg.grid.to_json();
  f["volume"] = in.volume.to_json();
  f["volume_id"] = in.volume.id();
  f["tf_id"] = in.tf_id;
  f["resolution"] = in.mc_model->resolution();
  f["write_images"] = cfg.write_images;
  nlohmann::json members = nlohmann::json::array();
  for (auto& m : in.ensemble->members) members.push_back(model_digest(m));
  f["methods"] = {
      {"mc_dropout",
       {{"m", cfg.m},
        {"eta", in.mc_model->config().dropout_p},
        {"seed", cfg.seed},
        {"sensitivity_reps", cfg.mc_sensitivity_reps()},
        {"model", model_digest(*in.mc_model)}}},
      {"ensemble", {{"K", in.ensemble->size()}, {"members", members}}},
  };
  return f;
}

struct SweepProgress {
  std::size_t done = 0;
  std::size_t total = 0;
  std::size_t i = 0, j = 0;
  bool resumed = false;  // cell was already on disk
};

using SweepCallback = std::function<void(const SweepProgress&)>;

struct SweepOutcome {
  std::size_t computed = 0;
  std::size_t reused = 0;
  bool already_complete = false;
};

/// Runs (or resumes) a sweep into `dir`:
///   manifest.json   fingerprint, record layout, per-cell offsets and artifact dirs
///   records.bin     grid-order f32 records (written at completion)
///   img/{i}_{j}/    display PNGs
/// Finished cells are kept in cells/{index}.rec until the sweep completes, so
/// an interrupted run picks up where it stopped. A complete directory is left
/// untouched.
inline SweepOutcome run_sweep(const std::filesystem::path& dir, const SweepInputs& in, const SweepConfig& cfg,
                              const SweepCallback& on_cell = {}) {
  if (in.mc_model == nullptr) throw InvalidArgument("sweep needs an MC-Dropout model");
  if (in.ensemble == nullptr || in.ensemble->empty()) throw InvalidArgument("sweep needs a non-empty ensemble");
  in.ensemble->validate();
  if (in.ensemble->members.front().resolution() != in.mc_model->resolution()) {
    throw InvalidArgument("ensemble and MC model disagree on image resolution");
  }
  cfg.grid.validate();
  if (cfg.m < 2) throw InvalidArgument("sweep needs m >= 2");

  namespace fs = std::filesystem;
  const nlohmann::json fingerprint = sweep_fingerprint(in, cfg);
  const fs::path manifest_path = dir / "manifest.json";
  SweepOutcome outcome;
  if (fs::exists(manifest_path)) {
    const auto old = nlohmann::json::parse(read_text_file(manifest_path));
    if (old.value("fingerprint", nlohmann::json()) != fingerprint) {
      throw InvalidArgument(dir.string() + " holds a sweep with different inputs; use another --out directory");
    }
    if (old.value("complete", false)) {
      outcome.already_complete = true;
      return outcome;
    }
  }

  nlohmann::json manifest;
  manifest["format"] = "viewuq-sweep-1";
  manifest["complete"] = false;
  manifest["fingerprint"] = fingerprint;
  write_text_atomic(manifest_path, manifest.dump(1) + "\n");

  const ScalarVolume volume = in.volume.materialize();
  const TransferFunction tf = builtin_transfer_function(in.tf_id);
  const std::size_t total = cfg.grid.size();
  std::vector<SweepRecord> records(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    const auto [i, j] = cfg.grid.cell(idx);
    const fs::path rec_path = dir / "cells" / (std::to_string(idx) + ".rec");
    bool resumed = false;
    if (fs::exists(rec_path)) {
      const auto bytes = read_file_bytes(rec_path);
      if (bytes.size() == kRecordBytes) {
        records[idx] = decode_records(bytes).front();
        resumed = true;
      }
    }
    if (!resumed) {
      const CellResult r = evaluate_cell(in, volume, tf, cfg, i, j);
      if (cfg.write_images) sweep_detail::write_cell_images(dir / "img" / cell_dir_name(i, j), r);
      records[idx] = r.record;
      const SweepRecord one[] = {r.record};
      write_file_atomic(rec_path, encode_records(one));
      ++outcome.computed;
    } else {
      ++outcome.reused;
    }
    if (on_cell) on_cell({idx + 1, total, i, j, resumed});
  }

  write_file_atomic(dir / "records.bin", encode_records(records));
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t idx = 0; idx < total; ++idx) {
    const auto [i, j] = cfg.grid.cell(idx);
    nlohmann::json c{{"i", i}, {"j", j}, {"index", idx}, {"offset", idx * kRecordBytes}};
    if (cfg.write_images) c["artifacts"] = "img/" + cell_dir_name(i, j);
    cells.push_back(std::move(c));
  }
  manifest["complete"] = true;
  manifest["record_count"] = total;
  manifest["records"] = "records.bin";
  manifest["record_layout"] = {{"dtype", "f32"},
                               {"byte_order", "little"},
                               {"record_bytes", kRecordBytes},
                               {"order", "grid index j * n_theta + i"},
                               {"fields", record_fields()}};
  manifest["images"] = cfg.write_images ? nlohmann::json{{"maps", sweep_image_names()},
                                                         {"channel_maps", sweep_channel_image_names()}}
                                        : nlohmann::json();
  manifest["cells"] = std::move(cells);
  write_text_atomic(manifest_path, manifest.dump(1) + "\n");
  fs::remove_all(dir / "cells");
  return outcome;
}

struct LoadedSweep {
  std::filesystem::path dir;
  nlohmann::json manifest;
  GridSpec grid;
  bool complete = false;
  std::vector<SweepRecord> records;  // empty unless complete

  const SweepRecord& record(std::size_t i, std::size_t j) const {
    if (!grid.contains(i, j)) {
      throw InvalidArgument("cell (" + std::to_string(i) + "," + std::to_string(j) + ") is outside the " +
                            std::to_string(grid.n_theta) + "x" + std::to_string(grid.n_phi) + " grid");
    }
    return records.at(grid.index(i, j));
  }
  bool has_images() const { return manifest.contains("images") && !manifest["images"].is_null(); }
};

inline LoadedSweep load_sweep(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw IoError(dir.string() + ": no manifest.json");
  LoadedSweep s;
  s.dir = dir;
  s.manifest = nlohmann::json::parse(read_text_file(path));
  if (s.manifest.value("format", "") != "viewuq-sweep-1") throw IoError(dir.string() + ": not a sweep directory");
  s.grid = GridSpec::from_json(s.manifest.at("fingerprint").at("grid"));
  s.complete = s.manifest.value("complete", false);
  if (s.complete) {
    s.records = decode_records(read_file_bytes(dir / s.manifest.at("records").get<std::string>()));
    if (s.records.size() != s.grid.size()) {
      throw IoError(dir.string() + ": records.bin holds " + std::to_string(s.records.size()) + " records, grid has " +
                    std::to_string(s.grid.size()));
    }
  }
  return s;
}

}  // namespace viewuq
