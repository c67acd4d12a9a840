#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace viewuq {

using Rgb8 = std::array<std::uint8_t, 3>;

/// Viridis sampled at 17 evenly spaced stops (t = k/16), 8-bit sRGB.
inline constexpr std::array<Rgb8, 17> kViridisStops = {{
    {68, 1, 84},    {72, 24, 106},  {71, 45, 123},  {66, 64, 134},  {59, 82, 139},  {51, 99, 141},
    {44, 114, 142}, {38, 130, 142}, {33, 145, 140}, {31, 160, 136}, {40, 174, 128}, {63, 188, 115},
    {94, 201, 98},  {132, 212, 75}, {173, 220, 48}, {216, 226, 25}, {253, 231, 37},
}};

/// Piecewise-linear interpolation between viridis stops; t is clamped to
/// [0, 1] (NaN maps to 0) and each component is rounded half-up.
inline Rgb8 viridis(double t) {
  if (!(t > 0.0)) t = 0.0;
  if (t > 1.0) t = 1.0;
  const double pos = t * static_cast<double>(kViridisStops.size() - 1);
  const std::size_t lo = std::min<std::size_t>(static_cast<std::size_t>(pos), kViridisStops.size() - 2);
  const double frac = pos - static_cast<double>(lo);
  Rgb8 out{};
  for (std::size_t c = 0; c < 3; ++c) {
    const double a = kViridisStops[lo][c];
    const double b = kViridisStops[lo + 1][c];
    out[c] = static_cast<std::uint8_t>(std::floor(a + (b - a) * frac + 0.5));
  }
  return out;
}

/// Normalizes v into [0, 1] against [lo, hi]; a degenerate range maps to 0.
inline double normalize_to_unit(double v, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

}  // namespace viewuq
