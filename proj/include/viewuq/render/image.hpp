#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "viewuq/core/error.hpp"

namespace viewuq {

/// Three-channel image in model space [-1, 1], stored channel-planar
/// (all of R, then G, then B; each plane row-major, row 0 at the top).
struct RgbImage {
  static constexpr std::size_t kChannels = 3;

  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w, float fill = -1.0f)
      : height(h), width(w), data(kChannels * h * w, fill) {}

  std::size_t pixels() const { return height * width; }
  std::size_t size() const { return data.size(); }

  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }

  std::span<float> channel(std::size_t c) { return {data.data() + c * pixels(), pixels()}; }
  std::span<const float> channel(std::size_t c) const { return {data.data() + c * pixels(), pixels()}; }

  bool same_shape(const RgbImage& o) const { return height == o.height && width == o.width; }
  bool in_model_range() const {
    return std::all_of(data.begin(), data.end(), [](float v) { return v >= -1.0f && v <= 1.0f; });
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Single-channel H x W map (uncertainty, error, ...), row-major.
struct ImageMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  ImageMap() = default;
  ImageMap(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), data(h * w, fill) {}

  float mean() const {
    double acc = 0.0;
    for (float v : data) acc += static_cast<double>(v);
    return data.empty() ? 0.0f : static_cast<float>(acc / static_cast<double>(data.size()));
  }
  float max() const { return data.empty() ? 0.0f : *std::max_element(data.begin(), data.end()); }
  friend bool operator==(const ImageMap&, const ImageMap&) = default;
};

inline void require_same_shape(const RgbImage& a, const RgbImage& b, const std::string& what) {
  if (!a.same_shape(b) || a.data.size() != b.data.size()) {
    throw ShapeError(what + ": image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                     " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

}  // namespace viewuq
