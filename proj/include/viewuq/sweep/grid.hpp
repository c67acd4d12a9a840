#pragma once

#include <cstdio>
#include <string>
#include <utility>

#include "json.hpp"
#include "viewuq/core/error.hpp"
#include "viewuq/render/view.hpp"

namespace viewuq {

/// Cell-centered view-space grid. Cell (i, j) has azimuth (i + 0.5) * 360 / n_theta
/// and elevation -90 + (j + 0.5) * 180 / n_phi; its flat index is phi-major,
/// j * n_theta + i.
struct GridSpec {
  std::size_t n_theta = 36;
  std::size_t n_phi = 18;

  void validate() const {
    if (n_theta < 1 || n_phi < 1) throw InvalidArgument("grid needs at least one cell per axis");
  }
  std::size_t size() const { return n_theta * n_phi; }
  double theta(std::size_t i) const { return (static_cast<double>(i) + 0.5) * 360.0 / static_cast<double>(n_theta); }
  double phi(std::size_t j) const { return -90.0 + (static_cast<double>(j) + 0.5) * 180.0 / static_cast<double>(n_phi); }
  ViewPoint view(std::size_t i, std::size_t j) const { return ViewPoint(theta(i), phi(j)); }
  std::size_t index(std::size_t i, std::size_t j) const { return j * n_theta + i; }
  std::pair<std::size_t, std::size_t> cell(std::size_t index) const { return {index % n_theta, index / n_theta}; }
  bool contains(std::size_t i, std::size_t j) const { return i < n_theta && j < n_phi; }

  /// "36x18" -> n_theta = 36, n_phi = 18.
  static GridSpec parse(const std::string& text) {
    unsigned long a = 0, b = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%lux%lu%c", &a, &b, &tail) != 2) {
      throw InvalidArgument("grid must look like <n_theta>x<n_phi>, got '" + text + "'");
    }
    GridSpec g{a, b};
    g.validate();
    return g;
  }

  nlohmann::json to_json() const {
    nlohmann::json thetas = nlohmann::json::array(), phis = nlohmann::json::array();
    for (std::size_t i = 0; i < n_theta; ++i) thetas.push_back(theta(i));
    for (std::size_t j = 0; j < n_phi; ++j) phis.push_back(phi(j));
    return {{"n_theta", n_theta}, {"n_phi", n_phi}, {"theta_centers", thetas}, {"phi_centers", phis}};
  }
  static GridSpec from_json(const nlohmann::json& j) {
    GridSpec g{j.at("n_theta").get<std::size_t>(), j.at("n_phi").get<std::size_t>()};
    g.validate();
    return g;
  }
};

}  // namespace viewuq
