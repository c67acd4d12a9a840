#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "viewuq/autodiff/tensor.hpp"
#include "viewuq/core/error.hpp"

namespace viewuq {

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;

  void validate() const {
    if (!(lr > 0.0f)) throw InvalidArgument("adam: learning rate must be positive");
    if (!(beta1 >= 0.0f && beta1 < 1.0f) || !(beta2 >= 0.0f && beta2 < 1.0f)) {
      throw InvalidArgument("adam: betas must lie in [0, 1)");
    }
    if (!(eps > 0.0f)) throw InvalidArgument("adam: eps must be positive");
  }
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step_count = 0;
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;

  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : config(cfg) { config.validate(); }

  /// Allocates zeroed moments matching `params`.
  void allocate(std::span<Tensor* const> params) {
    first_moment.clear();
    second_moment.clear();
    for (const Tensor* p : params) {
      first_moment.emplace_back(p->numel(), 0.0f);
      second_moment.emplace_back(p->numel(), 0.0f);
    }
    step_count = 0;
  }
};

/// One bias-corrected Adam update using the gradients stored in each tensor:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
/// A parameter without a gradient buffer is treated as having zero gradient.
inline void adam_step(std::span<Tensor* const> params, AdamState& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam: state holds " + std::to_string(state.first_moment.size()) +
                     " moment buffers for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor& p = *params[k];
    if (state.first_moment[k].size() != p.numel() || state.second_moment[k].size() != p.numel() ||
        (p.has_grad() && p.grad.size() != p.numel())) {
      throw ShapeError("adam: moment/gradient size mismatch for parameter " + std::to_string(k) +
                       " of shape " + shape_str(p.shape));
    }
  }
  const AdamConfig& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const float bias1 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta1), t));
  const float bias2 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta2), t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    if (!p.has_grad()) p.zero_grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const float g = p.grad[i];
      m[i] = c.beta1 * m[i] + (1.0f - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0f - c.beta2) * g * g;
      const float mhat = m[i] / bias1;
      const float vhat = v[i] / bias2;
      p.data[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace viewuq
