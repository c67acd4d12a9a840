#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "viewuq/core/error.hpp"
#include "viewuq/model/synthesis_model.hpp"
#include "viewuq/uq/uncertainty.hpp"

namespace viewuq {

enum class SensitivityMode { Deterministic, McDropout };

/// Gradient-based view sensitivity. Each repetition computes
///   s = sum |pixel| over the predicted image (model space),
///   sensitivity = |ds/d theta_hat| + |ds/d phi_hat|
/// with respect to the normalized network inputs. Multiply the two partials by
/// 1/180 and 1/90 respectively to express them per degree.
struct SensitivityResult {
  double mean = 0.0;
  double std = 0.0;  // population std over reps; 0 when reps == 1
  std::size_t reps = 0;
  bool std_defined = false;
  std::vector<double> per_rep;
};

namespace uq_detail {

inline SensitivityResult aggregate_sensitivity(std::vector<double> per_rep) {
  SensitivityResult r;
  r.reps = per_rep.size();
  r.per_rep = per_rep;
  const auto [mean, sd] = mean_std_sorted(per_rep);
  r.mean = mean;
  r.std_defined = r.reps > 1;
  r.std = r.std_defined ? sd : 0.0;
  return r;
}

inline double sensitivity_of(const Normalized2& g) {
  return std::abs(static_cast<double>(g[0])) + std::abs(static_cast<double>(g[1]));
}

}  // namespace uq_detail

/// Deterministic mode evaluates the dropout-free network `reps` times (all
/// repetitions agree); McDropout mode uses the MC pass seeds mix_seed(seed, i),
/// the same masks mc_sample draws.
inline SensitivityResult sensitivity(SynthesisModel& model, const ViewPoint& view, SensitivityMode mode,
                                     std::size_t reps, std::uint64_t seed = 0, std::size_t chunk = 50) {
  if (reps < 1) throw InvalidArgument("sensitivity needs reps >= 1");
  const Normalized2 in = normalize_view(view);
  std::vector<double> per_rep;
  per_rep.reserve(reps);
  if (mode == SensitivityMode::Deterministic) {
    const Normalized2 one[] = {in};
    const double s = uq_detail::sensitivity_of(model.l1_input_gradients(one, DropoutMode::Off).front());
    per_rep.assign(reps, s);
  } else {
    if (model.config().dropout_p == 0.0f) throw InvalidArgument("MC-Dropout requires nonzero dropout");
    for (std::size_t start = 0; start < reps; start += chunk) {
      const std::size_t count = std::min(chunk, reps - start);
      std::vector<Normalized2> inputs(count, in);
      std::vector<std::uint64_t> seeds(count);
      for (std::size_t i = 0; i < count; ++i) seeds[i] = mc_pass_seed(seed, start + i);
      for (const auto& g : model.l1_input_gradients(inputs, DropoutMode::McEval, seeds)) {
        per_rep.push_back(uq_detail::sensitivity_of(g));
      }
    }
  }
  return uq_detail::aggregate_sensitivity(std::move(per_rep));
}

/// One deterministic repetition per member, in member order.
inline SensitivityResult ensemble_sensitivity(EnsembleSet& ensemble, const ViewPoint& view) {
  ensemble.validate();
  std::vector<double> per_rep;
  for (auto& m : ensemble.members) per_rep.push_back(sensitivity(m, view, SensitivityMode::Deterministic, 1).mean);
  return uq_detail::aggregate_sensitivity(std::move(per_rep));
}

}  // namespace viewuq
