#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "viewuq/core/error.hpp"
#include "viewuq/core/rng.hpp"

namespace viewuq {

/// Scalar field on a regular grid, x fastest: index = x + nx * (y + ny * z).
struct ScalarVolume {
  std::array<std::size_t, 3> dims{};
  std::vector<float> data;
  float min_value = 0.0f;
  float max_value = 0.0f;

  std::size_t nx() const { return dims[0]; }
  std::size_t ny() const { return dims[1]; }
  std::size_t nz() const { return dims[2]; }
  float at(std::size_t x, std::size_t y, std::size_t z) const { return data[x + dims[0] * (y + dims[1] * z)]; }

  void update_range() {
    if (data.empty()) return;
    const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
    min_value = *lo;
    max_value = *hi;
  }
};

enum class VolumeKind { Blobs, Shell, Turbulence };

inline std::string to_string(VolumeKind k) {
  switch (k) {
    case VolumeKind::Blobs: return "blobs";
    case VolumeKind::Shell: return "shell";
    case VolumeKind::Turbulence: return "turbulence";
  }
  return "?";
}

inline VolumeKind volume_kind_from_string(const std::string& s) {
  if (s == "blobs") return VolumeKind::Blobs;
  if (s == "shell") return VolumeKind::Shell;
  if (s == "turbulence" || s == "turbulence-like") return VolumeKind::Turbulence;
  throw InvalidArgument("unknown volume kind '" + s + "' (expected blobs, shell or turbulence)");
}

struct Gaussian3 {
  std::array<double, 3> center;  // normalized coordinates in [0, 1]^3
  double sigma;
  double amplitude;
};

namespace volume_detail {

inline std::array<double, 3> unit_coords(std::size_t x, std::size_t y, std::size_t z,
                                         const std::array<std::size_t, 3>& dims) {
  return {static_cast<double>(x) / static_cast<double>(dims[0] - 1),
          static_cast<double>(y) / static_cast<double>(dims[1] - 1),
          static_cast<double>(z) / static_cast<double>(dims[2] - 1)};
}

template <typename F>
ScalarVolume tabulate(const std::array<std::size_t, 3>& dims, F&& field) {
  ScalarVolume v;
  v.dims = dims;
  v.data.resize(dims[0] * dims[1] * dims[2]);
  std::size_t i = 0;
  for (std::size_t z = 0; z < dims[2]; ++z) {
    for (std::size_t y = 0; y < dims[1]; ++y) {
      for (std::size_t x = 0; x < dims[0]; ++x) v.data[i++] = static_cast<float>(field(unit_coords(x, y, z, dims)));
    }
  }
  v.update_range();
  return v;
}

inline void check_dims(const std::array<std::size_t, 3>& dims, std::size_t minimum) {
  for (std::size_t d : dims) {
    if (d < minimum) throw InvalidArgument("volume dimensions must be >= " + std::to_string(minimum));
  }
}

}  // namespace volume_detail

/// v(p) = sum_k a_k exp(-|p - c_k|^2 / (2 sigma_k^2)) over unit coordinates p.
inline ScalarVolume blobs_volume(const std::array<std::size_t, 3>& dims, const std::vector<Gaussian3>& blobs) {
  volume_detail::check_dims(dims, 2);
  return volume_detail::tabulate(dims, [&](const std::array<double, 3>& p) {
    double v = 0.0;
    for (const auto& g : blobs) {
      double r2 = 0.0;
      for (int a = 0; a < 3; ++a) r2 += (p[a] - g.center[a]) * (p[a] - g.center[a]);
      v += g.amplitude * std::exp(-r2 / (2.0 * g.sigma * g.sigma));
    }
    return v;
  });
}

/// Seeded synthetic volumes. Formulas, with p in unit coordinates:
///  - blobs: six Gaussians, centers U[0.2, 0.8]^3, sigma U[0.06, 0.15],
///    amplitude U[0.5, 1.0], drawn in that order per blob.
///  - shell: exp(-(|p - 0.5| - 0.3)^2 / (2 * 0.05^2)); the seed is unused.
///  - turbulence: sum_j sin(2 pi k_j . p + phase_j) / |k_j| over 24 modes with
///    integer wave vectors k_j, components in [-4, 4], |k_j| in [1, 4].
inline ScalarVolume builtin_volume(VolumeKind kind, const std::array<std::size_t, 3>& dims, std::uint64_t seed) {
  volume_detail::check_dims(dims, 8);
  CounterRng rng(mix_seed(seed, 0x766F6CULL));
  switch (kind) {
    case VolumeKind::Blobs: {
      std::vector<Gaussian3> blobs(6);
      for (auto& g : blobs) {
        for (auto& c : g.center) c = rng.uniform(0.2, 0.8);
        g.sigma = rng.uniform(0.06, 0.15);
        g.amplitude = rng.uniform(0.5, 1.0);
      }
      return blobs_volume(dims, blobs);
    }
    case VolumeKind::Shell:
      return volume_detail::tabulate(dims, [](const std::array<double, 3>& p) {
        const double r = std::sqrt((p[0] - 0.5) * (p[0] - 0.5) + (p[1] - 0.5) * (p[1] - 0.5) +
                                   (p[2] - 0.5) * (p[2] - 0.5));
        return std::exp(-(r - 0.3) * (r - 0.3) / (2.0 * 0.05 * 0.05));
      });
    case VolumeKind::Turbulence: {
      struct Mode {
        std::array<double, 3> k;
        double phase, amp;
      };
      std::vector<Mode> modes;
      while (modes.size() < 24) {
        Mode m{};
        for (auto& c : m.k) c = static_cast<double>(rng.below(9)) - 4.0;
        const double norm = std::sqrt(m.k[0] * m.k[0] + m.k[1] * m.k[1] + m.k[2] * m.k[2]);
        m.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        if (norm < 1.0 || norm > 4.0) continue;
        m.amp = 1.0 / norm;
        modes.push_back(m);
      }
      return volume_detail::tabulate(dims, [&](const std::array<double, 3>& p) {
        double v = 0.0;
        for (const auto& m : modes) {
          v += m.amp * std::sin(2.0 * std::numbers::pi * (m.k[0] * p[0] + m.k[1] * p[1] + m.k[2] * p[2]) + m.phase);
        }
        return v;
      });
    }
  }
  throw InvalidArgument("unknown volume kind");
}

enum class RawDtype { F32, U8 };

inline RawDtype raw_dtype_from_string(const std::string& s) {
  if (s == "f32" || s == "float32") return RawDtype::F32;
  if (s == "u8" || s == "uint8") return RawDtype::U8;
  throw InvalidArgument("unknown raw dtype '" + s + "' (expected f32 or u8)");
}

/// Little-endian raw brick, x fastest. u8 samples are rescaled by 1/255.
inline ScalarVolume load_raw_volume(const std::filesystem::path& path, const std::array<std::size_t, 3>& dims,
                                    RawDtype dtype) {
  const std::size_t count = dims[0] * dims[1] * dims[2];
  const std::size_t width = dtype == RawDtype::F32 ? 4 : 1;
  std::error_code ec;
  const auto actual = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat raw volume " + path.string() + ": " + ec.message());
  if (actual != count * width) {
    throw IoError("raw volume " + path.string() + ": expected " + std::to_string(count * width) +
                  " bytes, found " + std::to_string(actual));
  }
  std::ifstream is(path, std::ios::binary);
  std::vector<unsigned char> bytes(count * width);
  if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw IoError("short read on " + path.string());
  }
  ScalarVolume v;
  v.dims = dims;
  v.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (dtype == RawDtype::U8) {
      v.data[i] = static_cast<float>(bytes[i]) / 255.0f;
    } else {
      const std::uint32_t u = std::uint32_t{bytes[4 * i]} | (std::uint32_t{bytes[4 * i + 1]} << 8) |
                              (std::uint32_t{bytes[4 * i + 2]} << 16) | (std::uint32_t{bytes[4 * i + 3]} << 24);
      std::memcpy(&v.data[i], &u, 4);
    }
  }
  v.update_range();
  return v;
}

}  // namespace viewuq
