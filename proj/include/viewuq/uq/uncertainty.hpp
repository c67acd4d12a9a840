#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "viewuq/core/error.hpp"
#include "viewuq/core/rng.hpp"
#include "viewuq/model/synthesis_model.hpp"
#include "viewuq/render/image.hpp"

namespace viewuq {

enum class UqMethod { McDropout, Ensemble };

inline std::string to_string(UqMethod m) { return m == UqMethod::McDropout ? "mc_dropout" : "ensemble"; }

inline UqMethod uq_method_from_string(const std::string& s) {
  if (s == "mc_dropout" || s == "mc") return UqMethod::McDropout;
  if (s == "ensemble" || s == "ens") return UqMethod::Ensemble;
  throw InvalidArgument("unknown method '" + s + "' (expected mc_dropout or ensemble)");
}

struct SampleSource {
  UqMethod method = UqMethod::McDropout;
  std::size_t m = 0;
  float eta = 0.0f;
  std::uint64_t seed = 0;
  std::vector<std::size_t> member_ids;
};

struct SampleStack {
  std::vector<RgbImage> samples;
  SampleSource source;

  std::size_t size() const { return samples.size(); }
};

/// Seed of MC pass i: mix_seed(seed, i). Stacks for m and m' > m share their
/// first m passes.
inline std::uint64_t mc_pass_seed(std::uint64_t seed, std::size_t pass) { return mix_seed(seed, pass); }

/// Passes are evaluated in batches of `chunk`; batching does not change results.
inline SampleStack mc_sample(SynthesisModel& model, const ViewPoint& view, std::size_t m, std::uint64_t seed,
                             std::size_t chunk = 50) {
  if (model.config().dropout_p == 0.0f) throw InvalidArgument("MC-Dropout requires nonzero dropout");
  if (m < 2) throw InvalidArgument("MC-Dropout needs m >= 2 passes, got " + std::to_string(m));
  SampleStack stack;
  stack.source = {UqMethod::McDropout, m, model.config().dropout_p, seed, {}};
  stack.samples.reserve(m);
  const Normalized2 in = normalize_view(view);
  for (std::size_t start = 0; start < m; start += chunk) {
    const std::size_t count = std::min(chunk, m - start);
    std::vector<Normalized2> inputs(count, in);
    std::vector<std::uint64_t> seeds(count);
    for (std::size_t i = 0; i < count; ++i) seeds[i] = mc_pass_seed(seed, start + i);
    for (auto& img : model.predict_normalized(inputs, DropoutMode::McEval, seeds)) stack.samples.push_back(std::move(img));
  }
  return stack;
}

/// K independently trained, dropout-free members sharing one configuration.
struct EnsembleSet {
  std::vector<SynthesisModel> members;

  std::size_t size() const { return members.size(); }
  bool empty() const { return members.empty(); }

  void validate() const {
    if (members.empty()) throw InvalidArgument("ensemble has no members");
    const auto r = members.front().resolution();
    for (const auto& m : members) {
      if (m.resolution() != r) throw InvalidArgument("ensemble members disagree on image resolution");
    }
  }

  /// First k members, in member order.
  EnsembleSet prefix(std::size_t k) const {
    if (k > members.size()) throw InvalidArgument("ensemble prefix larger than the ensemble");
    return EnsembleSet{std::vector<SynthesisModel>(members.begin(), members.begin() + static_cast<long>(k))};
  }
};

/// One deterministic prediction per member, in member order.
inline SampleStack ensemble_sample(EnsembleSet& ensemble, const ViewPoint& view) {
  ensemble.validate();
  SampleStack stack;
  stack.source.method = UqMethod::Ensemble;
  stack.source.m = ensemble.size();
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    stack.samples.push_back(ensemble.members[k].predict(view, DropoutMode::Off));
    stack.source.member_ids.push_back(k);
  }
  return stack;
}

using ChannelMaps = std::array<ImageMap, 3>;

struct UncertaintyMaps {
  RgbImage mean_image;
  ChannelMaps channel_uncertainty;
  ImageMap combined_uncertainty;
};

struct PredictionBundle {
  RgbImage mean_image;
  ChannelMaps channel_uncertainty;
  ImageMap combined_uncertainty;
  ChannelMaps channel_error;
  ImageMap combined_error;
  ChannelMaps channel_error_std;
  ImageMap combined_error_std;
};

namespace uq_detail {

inline void check_stack(const SampleStack& stack) {
  if (stack.samples.size() < 2) {
    throw InvalidArgument("uncertainty needs at least 2 samples, got " + std::to_string(stack.samples.size()));
  }
  for (const auto& s : stack.samples) require_same_shape(stack.samples.front(), s, "sample stack");
}

// Mean and population standard deviation of `v`, accumulated in double over
// the values in ascending order so that the result does not depend on the
// order of the samples.
inline std::pair<double, double> mean_std_sorted(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / static_cast<double>(v.size()))};
}

inline ImageMap channel_sum(const ChannelMaps& maps) {
  ImageMap out(maps[0].height, maps[0].width);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = maps[0].data[i] + maps[1].data[i] + maps[2].data[i];
  return out;
}

inline ChannelMaps empty_maps(std::size_t h, std::size_t w) { return {ImageMap(h, w), ImageMap(h, w), ImageMap(h, w)}; }

}  // namespace uq_detail

/// Per-pixel mean image and population standard deviation per channel; the
/// combined map is R + G + B evaluated in float in that order.
inline UncertaintyMaps uncertainty_only(const SampleStack& stack) {
  uq_detail::check_stack(stack);
  const auto& first = stack.samples.front();
  const std::size_t h = first.height, w = first.width, hw = first.pixels();
  UncertaintyMaps out{RgbImage(h, w, 0.0f), uq_detail::empty_maps(h, w), {}};
  std::vector<double> vals(stack.samples.size());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t k = 0; k < vals.size(); ++k) vals[k] = stack.samples[k].data[c * hw + p];
      const auto [mean, sd] = uq_detail::mean_std_sorted(vals);
      out.mean_image.data[c * hw + p] = static_cast<float>(mean);
      out.channel_uncertainty[c].data[p] = static_cast<float>(sd);
    }
  }
  out.combined_uncertainty = uq_detail::channel_sum(out.channel_uncertainty);
  return out;
}

/// Adds per-channel error |sample - gt| averaged over samples, and the
/// population standard deviation of that absolute error, each summed over
/// channels afterwards.
inline PredictionBundle compute_bundle(const SampleStack& stack, const RgbImage& ground_truth) {
  uq_detail::check_stack(stack);
  require_same_shape(stack.samples.front(), ground_truth, "ground truth");
  UncertaintyMaps u = uncertainty_only(stack);
  const std::size_t h = ground_truth.height, w = ground_truth.width, hw = ground_truth.pixels();
  PredictionBundle b;
  b.mean_image = std::move(u.mean_image);
  b.channel_uncertainty = std::move(u.channel_uncertainty);
  b.combined_uncertainty = std::move(u.combined_uncertainty);
  b.channel_error = uq_detail::empty_maps(h, w);
  b.channel_error_std = uq_detail::empty_maps(h, w);
  std::vector<double> errs(stack.samples.size());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < hw; ++p) {
      const double gt = ground_truth.data[c * hw + p];
      for (std::size_t k = 0; k < errs.size(); ++k) {
        errs[k] = std::abs(static_cast<double>(stack.samples[k].data[c * hw + p]) - gt);
      }
      const auto [mean, sd] = uq_detail::mean_std_sorted(errs);
      b.channel_error[c].data[p] = static_cast<float>(mean);
      b.channel_error_std[c].data[p] = static_cast<float>(sd);
    }
  }
  b.combined_error = uq_detail::channel_sum(b.channel_error);
  b.combined_error_std = uq_detail::channel_sum(b.channel_error_std);
  return b;
}

}  // namespace viewuq
