#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewuq/core/binary_io.hpp"
#include "viewuq/render/colormap.hpp"
#include "viewuq/render/png.hpp"
#include "viewuq/sweep/sweep.hpp"

namespace viewuq {

struct HeatmapGrid {
  GridSpec grid;
  UqMethod method = UqMethod::McDropout;
  Quantity quantity = Quantity::Uncertainty;
  Channel channel = Channel::Combined;
  std::vector<float> values;  // phi-major: values[j * n_theta + i]
  float min = 0.0f;
  float max = 0.0f;

  std::string name() const {
    return std::string(method == UqMethod::McDropout ? "mc" : "ens") + "_" + to_string(quantity) + "_" +
           to_string(channel);
  }
};

inline HeatmapGrid heatmap_grid(const GridSpec& grid, std::span<const SweepRecord> records, UqMethod method,
                                Quantity quantity, Channel channel) {
  if (records.size() != grid.size()) {
    throw InvalidArgument("heatmap needs " + std::to_string(grid.size()) + " records, got " +
                          std::to_string(records.size()));
  }
  HeatmapGrid h{grid, method, quantity, channel, {}, 0.0f, 0.0f};
  h.values.reserve(records.size());
  for (const auto& r : records) h.values.push_back(r.method(method).value(quantity, channel));
  const auto [lo, hi] = std::minmax_element(h.values.begin(), h.values.end());
  h.min = *lo;
  h.max = *hi;
  return h;
}

inline HeatmapGrid heatmap_grid(const LoadedSweep& sweep, UqMethod method, Quantity quantity, Channel channel) {
  if (!sweep.complete) throw InvalidArgument(sweep.dir.string() + ": sweep is not complete");
  return heatmap_grid(sweep.grid, sweep.records, method, quantity, channel);
}

/// One pixel per cell; image row r shows j = n_phi - 1 - r so elevation grows
/// upward. Values are normalized to [min, max] before the viridis lookup.
inline Raster heatmap_raster(const HeatmapGrid& h) {
  Raster r(h.grid.n_phi, h.grid.n_theta);
  for (std::size_t j = 0; j < h.grid.n_phi; ++j) {
    for (std::size_t i = 0; i < h.grid.n_theta; ++i) {
      r.set(h.grid.n_phi - 1 - j, i, viridis(normalize_to_unit(h.values[h.grid.index(i, j)], h.min, h.max)));
    }
  }
  return r;
}

struct HeatmapFiles {
  std::filesystem::path blob, png, sidecar;
};

/// Writes heatmaps/{name}.f32 (row-major, phi-major), .png and .json.
inline HeatmapFiles export_heatmap(const std::filesystem::path& sweep_dir, const HeatmapGrid& h) {
  const auto base = sweep_dir / "heatmaps" / h.name();
  HeatmapFiles f{base.string() + ".f32", base.string() + ".png", base.string() + ".json"};
  std::vector<char> blob;
  append_f32_le(blob, h.values);
  write_file_atomic(f.blob, blob);
  write_png(f.png, heatmap_raster(h));
  nlohmann::json side{{"method", to_string(h.method)},
                      {"quantity", to_string(h.quantity)},
                      {"channel", to_string(h.channel)},
                      {"n_theta", h.grid.n_theta},
                      {"n_phi", h.grid.n_phi},
                      {"layout", "f32 little-endian, values[j * n_theta + i]"},
                      {"png_rows", "row r holds j = n_phi - 1 - r"},
                      {"colormap", "viridis"},
                      {"min", h.min},
                      {"max", h.max}};
  write_text_atomic(f.sidecar, side.dump(1) + "\n");
  return f;
}

inline std::vector<float> read_heatmap_blob(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() % 4 != 0) throw IoError(path.string() + ": size is not a multiple of 4");
  return parse_f32_le(bytes.data(), bytes.size() / 4);
}

/// Every (method, quantity, channel) combination the records support.
inline std::vector<HeatmapFiles> export_all_heatmaps(const LoadedSweep& sweep) {
  std::vector<HeatmapFiles> out;
  for (UqMethod m : {UqMethod::McDropout, UqMethod::Ensemble}) {
    for (Quantity q : {Quantity::Uncertainty, Quantity::Error, Quantity::ErrorStd}) {
      for (Channel c : {Channel::R, Channel::G, Channel::B, Channel::Combined}) {
        out.push_back(export_heatmap(sweep.dir, heatmap_grid(sweep, m, q, c)));
      }
    }
    for (Quantity q : {Quantity::Sensitivity, Quantity::SensitivityStd}) {
      out.push_back(export_heatmap(sweep.dir, heatmap_grid(sweep, m, q, Channel::Combined)));
    }
  }
  return out;
}

}  // namespace viewuq
