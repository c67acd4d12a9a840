#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "viewuq/core/error.hpp"

namespace viewuq {

/// Azimuth theta in [0, 360) and elevation phi in [-90, 90], both in degrees.
class ViewPoint {
 public:
  ViewPoint() = default;

  /// Wraps theta into [0, 360); rejects phi outside [-90, 90] and non-finite input.
  ViewPoint(double theta, double phi) {
    if (!std::isfinite(theta) || !std::isfinite(phi)) throw InvalidArgument("view angles must be finite");
    if (phi < -90.0 || phi > 90.0) {
      throw InvalidArgument("elevation " + std::to_string(phi) + " outside [-90, 90]");
    }
    theta = std::fmod(theta, 360.0);
    if (theta < 0.0) theta += 360.0;
    if (theta >= 360.0) theta = 0.0;
    theta_ = theta;
    phi_ = phi;
  }

  double theta() const { return theta_; }
  double phi() const { return phi_; }
  friend bool operator==(const ViewPoint&, const ViewPoint&) = default;

 private:
  double theta_ = 0.0;
  double phi_ = 0.0;
};

/// Network input encoding: theta/180 - 1 in [-1, 1) and phi/90 in [-1, 1].
inline std::array<float, 2> normalize_view(const ViewPoint& v) {
  return {static_cast<float>(v.theta() / 180.0 - 1.0), static_cast<float>(v.phi() / 90.0)};
}

/// Degrees per unit of normalized input: d/dtheta = (1/180) d/dtheta_hat, d/dphi = (1/90) d/dphi_hat.
inline constexpr double kThetaDegreesPerUnit = 180.0;
inline constexpr double kPhiDegreesPerUnit = 90.0;

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline Vec3 normalized(const Vec3& a) { return (1.0 / std::sqrt(dot(a, a))) * a; }

struct Camera {
  Vec3 eye;
  Vec3 forward;
  Vec3 up;
  Vec3 right;
};

/// Camera on a sphere around the origin (the volume center):
///   eye = radius * (cos(phi) sin(theta), sin(phi), cos(phi) cos(theta)).
/// The reference up vector is world +y, or world +z within 1e-6 of a pole.
inline Camera camera_from_view(const ViewPoint& view, double radius) {
  if (!(radius > 0.0)) throw InvalidArgument("camera radius must be positive");
  const double th = view.theta() * std::numbers::pi / 180.0;
  const double ph = view.phi() * std::numbers::pi / 180.0;
  Camera cam;
  cam.eye = {radius * std::cos(ph) * std::sin(th), radius * std::sin(ph), radius * std::cos(ph) * std::cos(th)};
  cam.forward = normalized(Vec3{0, 0, 0} - cam.eye);
  const bool at_pole = std::abs(std::abs(view.phi()) - 90.0) < 1e-6;
  const Vec3 world_up = at_pole ? Vec3{0, 0, 1} : Vec3{0, 1, 0};
  cam.right = normalized(cross(cam.forward, world_up));
  cam.up = cross(cam.right, cam.forward);
  return cam;
}

}  // namespace viewuq
