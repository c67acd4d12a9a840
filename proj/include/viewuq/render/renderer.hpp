#pragma once

#include <algorithm>
#include <array>
#include <vector>
#include <cmath>
#include <limits>

#include "viewuq/core/error.hpp"
#include "viewuq/render/image.hpp"
#include "viewuq/render/transfer_function.hpp"
#include "viewuq/render/view.hpp"
#include "viewuq/render/volume.hpp"

namespace viewuq {

struct RenderOptions {
  double step = 0.5;                 // voxels
  double early_termination = 0.999;  // accumulated alpha
};

/// Trilinear sample at continuous voxel coordinates; caller guarantees the
/// point lies inside [0, n-1] on each axis.
inline double sample_trilinear(const ScalarVolume& v, double x, double y, double z) {
  const auto split = [](double c, std::size_t n, std::size_t& i0, double& f) {
    i0 = std::min(static_cast<std::size_t>(c), n - 2);
    f = c - static_cast<double>(i0);
  };
  std::size_t x0, y0, z0;
  double fx, fy, fz;
  split(x, v.nx(), x0, fx);
  split(y, v.ny(), y0, fy);
  split(z, v.nz(), z0, fz);
  const auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  const double c00 = lerp(v.at(x0, y0, z0), v.at(x0 + 1, y0, z0), fx);
  const double c10 = lerp(v.at(x0, y0 + 1, z0), v.at(x0 + 1, y0 + 1, z0), fx);
  const double c01 = lerp(v.at(x0, y0, z0 + 1), v.at(x0 + 1, y0, z0 + 1), fx);
  const double c11 = lerp(v.at(x0, y0 + 1, z0 + 1), v.at(x0 + 1, y0 + 1, z0 + 1), fx);
  return lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz);
}

/// Half-extent of the orthographic image plane: radius of the sphere bounding
/// the voxel-centered volume, 0.5 * |(nx-1, ny-1, nz-1)|.
inline double bounding_radius(const ScalarVolume& v) {
  const double a = static_cast<double>(v.nx() - 1), b = static_cast<double>(v.ny() - 1),
               c = static_cast<double>(v.nz() - 1);
  return 0.5 * std::sqrt(a * a + b * b + c * c);
}

/// Premultiplied color and opacity per pixel, row-major, in [0, 1].
struct CompositedPixels {
  std::size_t resolution = 0;
  std::vector<std::array<double, 4>> rgba;
};

/// Orthographic front-to-back ray caster. World space is voxel units with the
/// volume center at the origin; pixel (y, x) looks along the camera forward
/// axis through eye + u*right + v*up where u, v in [-R, R] (row 0 at +v).
/// Per-sample opacity is corrected for step size, alpha' = 1 - (1 - alpha)^step.
inline CompositedPixels composite(const ScalarVolume& volume, const TransferFunction& tf, const ViewPoint& view,
                                  std::size_t resolution, const RenderOptions& opts = {}) {
  if (volume.nx() < 2 || volume.ny() < 2 || volume.nz() < 2) {
    throw InvalidArgument("cannot render a volume with a dimension below 2");
  }
  if (resolution < 4) throw InvalidArgument("render resolution must be >= 4");
  tf.validate();

  const double radius = bounding_radius(volume);
  const Camera cam = camera_from_view(view, radius + 1.0);
  const Vec3 center{0.5 * static_cast<double>(volume.nx() - 1), 0.5 * static_cast<double>(volume.ny() - 1),
                    0.5 * static_cast<double>(volume.nz() - 1)};
  const double range = static_cast<double>(volume.max_value) - static_cast<double>(volume.min_value);
  const double inv_range = range > 0.0 ? 1.0 / range : 0.0;
  const std::size_t max_steps = static_cast<std::size_t>(std::ceil(2.0 * (radius + 1.0) / opts.step)) + 1;
  const double hi[3] = {static_cast<double>(volume.nx() - 1), static_cast<double>(volume.ny() - 1),
                        static_cast<double>(volume.nz() - 1)};

  CompositedPixels out{resolution, std::vector<std::array<double, 4>>(resolution * resolution)};
  const double res = static_cast<double>(resolution);
  for (std::size_t py = 0; py < resolution; ++py) {
    const double v = (1.0 - (2.0 * static_cast<double>(py) + 1.0) / res) * radius;
    for (std::size_t px = 0; px < resolution; ++px) {
      const double u = (-1.0 + (2.0 * static_cast<double>(px) + 1.0) / res) * radius;
      const Vec3 origin = cam.eye + u * cam.right + v * cam.up + center;
      double acc[3] = {0.0, 0.0, 0.0};
      double alpha = 0.0;
      for (std::size_t k = 0; k < max_steps && alpha < opts.early_termination; ++k) {
        const Vec3 p = origin + (static_cast<double>(k) * opts.step) * cam.forward;
        if (p[0] < 0.0 || p[1] < 0.0 || p[2] < 0.0 || p[0] > hi[0] || p[1] > hi[1] || p[2] > hi[2]) continue;
        const double s = sample_trilinear(volume, p[0], p[1], p[2]);
        const auto rgba = tf.sample((s - static_cast<double>(volume.min_value)) * inv_range);
        if (rgba[3] <= 0.0) continue;
        const double a = 1.0 - std::pow(1.0 - rgba[3], opts.step);
        const double w = (1.0 - alpha) * a;
        for (int c = 0; c < 3; ++c) acc[c] += w * rgba[c];
        alpha += w;
      }
      out.rgba[py * resolution + px] = {acc[0], acc[1], acc[2], alpha};
    }
  }
  return out;
}

/// Ground-truth image: composite() over a black background, mapped to [-1, 1].
inline RgbImage render(const ScalarVolume& volume, const TransferFunction& tf, const ViewPoint& view,
                       std::size_t resolution, const RenderOptions& opts = {}) {
  const CompositedPixels px = composite(volume, tf, view, resolution, opts);
  RgbImage img(resolution, resolution, 0.0f);
  for (std::size_t i = 0; i < px.rgba.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      img.data[c * img.pixels() + i] = static_cast<float>(2.0 * std::clamp(px.rgba[i][c], 0.0, 1.0) - 1.0);
    }
  }
  return img;
}

}  // namespace viewuq
