#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "viewuq/core/error.hpp"
#include "viewuq/render/image.hpp"

namespace viewuq {

/// Pearson product-moment correlation, evaluated in double with centered sums.
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw InvalidArgument("pearson: length mismatch (" + std::to_string(xs.size()) + " vs " +
                          std::to_string(ys.size()) + ")");
  }
  if (xs.size() < 2) throw InvalidArgument("pearson: need at least 2 pairs");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 && syy == 0.0) throw InvalidArgument("pearson: both xs and ys are constant");
  if (sxx == 0.0) throw InvalidArgument("pearson: xs is constant");
  if (syy == 0.0) throw InvalidArgument("pearson: ys is constant");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  return pearson(std::span<const double>(xs), std::span<const double>(ys));
}

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

struct PsnrResult {
  std::array<double, 3> channel_mse{};
  std::array<double, 3> channel_psnr{};
  double mse = 0.0;   // mean of channel MSEs
  double psnr = 0.0;  // mean of channel PSNRs; +inf when any channel is exact
};

/// PSNR in display space: both images are mapped from [-1, 1] to [0, 1] and
/// PSNR = 10 log10(1 / MSE) per channel. Zero MSE yields kInfinitePsnr.
inline PsnrResult psnr(const RgbImage& pred, const RgbImage& gt) {
  require_same_shape(pred, gt, "psnr");
  PsnrResult r;
  const std::size_t hw = gt.pixels();
  for (std::size_t c = 0; c < 3; ++c) {
    double acc = 0.0;
    for (std::size_t p = 0; p < hw; ++p) {
      const double d = 0.5 * (static_cast<double>(pred.data[c * hw + p]) - static_cast<double>(gt.data[c * hw + p]));
      acc += d * d;
    }
    r.channel_mse[c] = acc / static_cast<double>(hw);
    r.channel_psnr[c] = r.channel_mse[c] == 0.0 ? kInfinitePsnr : 10.0 * std::log10(1.0 / r.channel_mse[c]);
  }
  r.mse = (r.channel_mse[0] + r.channel_mse[1] + r.channel_mse[2]) / 3.0;
  r.psnr = (r.channel_psnr[0] + r.channel_psnr[1] + r.channel_psnr[2]) / 3.0;
  return r;
}

}  // namespace viewuq
