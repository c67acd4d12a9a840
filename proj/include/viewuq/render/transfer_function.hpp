#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "viewuq/core/error.hpp"

namespace viewuq {

struct ControlPoint {
  double value;                // normalized scalar in [0, 1]
  std::array<double, 4> rgba;  // each in [0, 1]
};

/// Piecewise-linear color/opacity map over normalized scalar values.
class TransferFunction {
 public:
  TransferFunction() = default;
  explicit TransferFunction(std::vector<ControlPoint> points) : points_(std::move(points)) { validate(); }

  void validate() const {
    if (points_.size() < 2) throw InvalidArgument("transfer function needs at least 2 control points");
    if (points_.front().value != 0.0 || points_.back().value != 1.0) {
      throw InvalidArgument("transfer function endpoints must sit at 0 and 1");
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (i && !(points_[i].value > points_[i - 1].value)) {
        throw InvalidArgument("transfer function values must be strictly increasing");
      }
      for (double c : points_[i].rgba) {
        if (!(c >= 0.0 && c <= 1.0)) throw InvalidArgument("transfer function rgba must lie in [0, 1]");
      }
    }
  }

  std::array<double, 4> sample(double t) const {
    t = std::clamp(t, 0.0, 1.0);
    auto hi = std::upper_bound(points_.begin(), points_.end(), t,
                               [](double v, const ControlPoint& p) { return v < p.value; });
    if (hi == points_.end()) return points_.back().rgba;
    auto lo = hi - 1;
    const double f = (t - lo->value) / (hi->value - lo->value);
    std::array<double, 4> out{};
    for (int c = 0; c < 4; ++c) out[c] = lo->rgba[c] + f * (hi->rgba[c] - lo->rgba[c]);
    return out;
  }

  const std::vector<ControlPoint>& points() const { return points_; }

  /// Copy with every opacity multiplied by `factor` and clamped to 1.
  TransferFunction with_opacity_scale(double factor) const {
    auto pts = points_;
    for (auto& p : pts) p.rgba[3] = std::min(1.0, p.rgba[3] * factor);
    return TransferFunction(std::move(pts));
  }

 private:
  std::vector<ControlPoint> points_;
};

/// Built-in transfer functions: "default" (cool-to-warm ramp with rising
/// opacity) and "transparent" (all opacities zero).
inline TransferFunction builtin_transfer_function(const std::string& id) {
  if (id == "default") {
    return TransferFunction({{0.00, {0.00, 0.00, 0.00, 0.00}},
                             {0.20, {0.10, 0.25, 0.85, 0.02}},
                             {0.45, {0.15, 0.80, 0.55, 0.06}},
                             {0.70, {0.95, 0.80, 0.15, 0.15}},
                             {1.00, {1.00, 0.20, 0.10, 0.45}}});
  }
  if (id == "transparent") {
    return TransferFunction({{0.0, {0.0, 0.0, 0.0, 0.0}}, {1.0, {1.0, 1.0, 1.0, 0.0}}});
  }
  throw InvalidArgument("unknown transfer function '" + id + "' (expected default or transparent)");
}

}  // namespace viewuq
