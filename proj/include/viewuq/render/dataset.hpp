#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewuq/core/binary_io.hpp"
#include "viewuq/core/error.hpp"
#include "viewuq/core/rng.hpp"
#include "viewuq/render/image.hpp"
#include "viewuq/render/renderer.hpp"
#include "viewuq/render/transfer_function.hpp"
#include "viewuq/render/view.hpp"
#include "viewuq/render/volume.hpp"

namespace viewuq {

/// Where a volume comes from; enough to rebuild it bit-identically.
struct VolumeSource {
  bool raw = false;
  VolumeKind kind = VolumeKind::Blobs;
  std::array<std::size_t, 3> dims{64, 64, 64};
  std::uint64_t seed = 0;
  std::string path;  // raw only
  RawDtype dtype = RawDtype::F32;

  std::string id() const {
    const std::string d =
        std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + "x" + std::to_string(dims[2]);
    if (raw) return "raw-" + std::filesystem::path(path).stem().string() + "-" + d;
    return to_string(kind) + "-" + d + "-s" + std::to_string(seed);
  }

  ScalarVolume materialize() const {
    return raw ? load_raw_volume(path, dims, dtype) : builtin_volume(kind, dims, seed);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["dims"] = dims;
    if (raw) {
      j["source"] = "raw";
      j["path"] = path;
      j["dtype"] = dtype == RawDtype::F32 ? "f32" : "u8";
    } else {
      j["source"] = "builtin";
      j["kind"] = to_string(kind);
      j["seed"] = seed;
    }
    return j;
  }

  static VolumeSource from_json(const nlohmann::json& j) {
    VolumeSource s;
    s.dims = j.at("dims").get<std::array<std::size_t, 3>>();
    s.raw = j.at("source").get<std::string>() == "raw";
    if (s.raw) {
      s.path = j.at("path").get<std::string>();
      s.dtype = raw_dtype_from_string(j.at("dtype").get<std::string>());
    } else {
      s.kind = volume_kind_from_string(j.at("kind").get<std::string>());
      s.seed = j.at("seed").get<std::uint64_t>();
    }
    return s;
  }
};

struct DatasetEntry {
  ViewPoint view;
  RgbImage image;
};

struct Dataset {
  std::vector<DatasetEntry> entries;
  std::uint64_t seed = 0;
  std::size_t resolution = 0;
  VolumeSource volume;
  std::string tf_id = "default";

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

/// Views are drawn as theta = 360 u, phi = -90 + 180 u' from
/// CounterRng(mix_seed(seed, 1)), shuffled with CounterRng(mix_seed(seed, 2)),
/// then rendered in the shuffled order.
inline Dataset generate_dataset(const VolumeSource& source, const ScalarVolume& volume, const std::string& tf_id,
                                std::size_t n, std::size_t resolution, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("dataset needs at least one view");
  const TransferFunction tf = builtin_transfer_function(tf_id);
  CounterRng rng(mix_seed(seed, 1));
  std::vector<ViewPoint> views;
  views.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = 360.0 * rng.uniform();
    const double phi = -90.0 + 180.0 * rng.uniform();
    views.emplace_back(theta, phi);
  }
  CounterRng order_rng(mix_seed(seed, 2));
  shuffle(std::span<ViewPoint>(views), order_rng);

  Dataset ds;
  ds.seed = seed;
  ds.resolution = resolution;
  ds.volume = source;
  ds.tf_id = tf_id;
  ds.entries.reserve(n);
  for (const auto& v : views) ds.entries.push_back({v, render(volume, tf, v, resolution)});
  return ds;
}

inline Dataset generate_dataset(const VolumeSource& source, const std::string& tf_id, std::size_t n,
                                std::size_t resolution, std::uint64_t seed) {
  return generate_dataset(source, source.materialize(), tf_id, n, resolution, seed);
}

/// Directory layout: manifest.json plus images.f32 holding N x 3 x H x W
/// little-endian floats in entry order.
inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["format"] = "viewuq-dataset-1";
  m["seed"] = ds.seed;
  m["resolution"] = ds.resolution;
  m["count"] = ds.entries.size();
  m["volume"] = ds.volume.to_json();
  m["volume_id"] = ds.volume.id();
  m["tf_id"] = ds.tf_id;
  m["images"] = "images.f32";
  m["image_layout"] = "N x 3 x H x W, channel-planar, f32 little-endian, model space [-1,1]";
  nlohmann::json views = nlohmann::json::array();
  std::vector<char> blob;
  blob.reserve(ds.entries.size() * 3 * ds.resolution * ds.resolution * 4);
  for (const auto& e : ds.entries) {
    views.push_back({e.view.theta(), e.view.phi()});
    append_f32_le(blob, e.image.data);
  }
  m["views"] = std::move(views);
  write_file_atomic(dir / "images.f32", blob);
  write_text_atomic(dir / "manifest.json", m.dump(1) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto m = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  if (m.value("format", "") != "viewuq-dataset-1") throw IoError(dir.string() + ": not a dataset directory");
  Dataset ds;
  ds.seed = m.at("seed").get<std::uint64_t>();
  ds.resolution = m.at("resolution").get<std::size_t>();
  ds.volume = VolumeSource::from_json(m.at("volume"));
  ds.tf_id = m.at("tf_id").get<std::string>();
  const std::size_t count = m.at("count").get<std::size_t>();
  const std::size_t per = 3 * ds.resolution * ds.resolution;
  const auto blob = read_file_bytes(dir / m.at("images").get<std::string>());
  if (blob.size() != count * per * 4) {
    throw IoError(dir.string() + ": image blob holds " + std::to_string(blob.size()) + " bytes, expected " +
                  std::to_string(count * per * 4));
  }
  const auto& views = m.at("views");
  if (views.size() != count) throw IoError(dir.string() + ": view count does not match manifest count");
  ds.entries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    RgbImage img(ds.resolution, ds.resolution);
    img.data = parse_f32_le(blob.data() + i * per * 4, per);
    ds.entries.push_back({ViewPoint(views[i][0].get<double>(), views[i][1].get<double>()), std::move(img)});
  }
  return ds;
}

}  // namespace viewuq
