#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewuq/render/dataset.hpp"
#include "viewuq/sweep/records.hpp"
#include "viewuq/sweep/stats.hpp"
#include "viewuq/uq/uncertainty.hpp"

namespace viewuq {

struct CorrelationReport {
  double mc_un_err = 0;
  double ens_un_err = 0;
  double mc_un_ens_un = 0;
  double mc_err_ens_err = 0;
  double mc_sen_ens_sen = 0;

  nlohmann::json to_json() const {
    return {{"mc_un_vs_mc_err", mc_un_err},       {"ens_un_vs_ens_err", ens_un_err},
            {"mc_un_vs_ens_un", mc_un_ens_un},    {"mc_err_vs_ens_err", mc_err_ens_err},
            {"mc_sen_vs_ens_sen", mc_sen_ens_sen}};
  }
};

/// Pearson r over combined aggregates of all records.
inline CorrelationReport correlation_report(std::span<const SweepRecord> records) {
  const auto col = [&](auto get) {
    std::vector<double> v;
    v.reserve(records.size());
    for (const auto& r : records) v.push_back(static_cast<double>(get(r)));
    return v;
  };
  const auto mc_un = col([](const SweepRecord& r) { return r.mc.uncertainty; });
  const auto mc_err = col([](const SweepRecord& r) { return r.mc.error; });
  const auto ens_un = col([](const SweepRecord& r) { return r.ens.uncertainty; });
  const auto ens_err = col([](const SweepRecord& r) { return r.ens.error; });
  const auto mc_sen = col([](const SweepRecord& r) { return r.mc.sensitivity; });
  const auto ens_sen = col([](const SweepRecord& r) { return r.ens.sensitivity; });
  CorrelationReport c;
  c.mc_un_err = pearson(mc_un, mc_err);
  c.ens_un_err = pearson(ens_un, ens_err);
  c.mc_un_ens_un = pearson(mc_un, ens_un);
  c.mc_err_ens_err = pearson(mc_err, ens_err);
  c.mc_sen_ens_sen = pearson(mc_sen, ens_sen);
  return c;
}

/// Test-set quality of one predictor, averaged over images.
struct EvalRow {
  std::string name;
  std::array<double, 3> channel_psnr{};
  std::array<double, 3> channel_mse{};
  double psnr = 0;
  double mse = 0;
  std::size_t images = 0;

  void add(const PsnrResult& p) {
    for (std::size_t c = 0; c < 3; ++c) {
      channel_psnr[c] += p.channel_psnr[c];
      channel_mse[c] += p.channel_mse[c];
    }
    psnr += p.psnr;
    mse += p.mse;
    ++images;
  }
  void finish() {
    const double n = static_cast<double>(std::max<std::size_t>(images, 1));
    for (std::size_t c = 0; c < 3; ++c) {
      channel_psnr[c] /= n;
      channel_mse[c] /= n;
    }
    psnr /= n;
    mse /= n;
  }
  nlohmann::json to_json() const {
    return {{"name", name}, {"psnr_rgb", channel_psnr}, {"mse_rgb", channel_mse},
            {"psnr", psnr}, {"mse", mse},               {"images", images}};
  }
};

inline EvalRow evaluate_deterministic(SynthesisModel& model, const Dataset& test, const std::string& name) {
  EvalRow row{name};
  for (const auto& e : test.entries) row.add(psnr(model.predict(e.view, DropoutMode::Off), e.image));
  row.finish();
  return row;
}

/// MC-Dropout mean image over m passes; view k uses seed mix_seed(seed, k).
inline EvalRow evaluate_mc_mean(SynthesisModel& model, const Dataset& test, std::size_t m, std::uint64_t seed,
                                const std::string& name = "mc_dropout_mean") {
  EvalRow row{name};
  for (std::size_t k = 0; k < test.size(); ++k) {
    const auto& e = test.entries[k];
    row.add(psnr(uncertainty_only(mc_sample(model, e.view, m, mix_seed(seed, k))).mean_image, e.image));
  }
  row.finish();
  return row;
}

inline RgbImage ensemble_mean_image(EnsembleSet& ensemble, const ViewPoint& view) {
  const auto stack = ensemble_sample(ensemble, view);
  if (stack.size() == 1) return stack.samples.front();
  return uncertainty_only(stack).mean_image;
}

inline EvalRow evaluate_ensemble_mean(EnsembleSet& ensemble, const Dataset& test,
                                      const std::string& name = "ensemble_mean") {
  EvalRow row{name};
  for (const auto& e : test.entries) row.add(psnr(ensemble_mean_image(ensemble, e.view), e.image));
  row.finish();
  return row;
}

struct EvaluationTable {
  std::vector<EvalRow> rows;

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) j.push_back(r.to_json());
    return j;
  }
};

/// Rows: the dropout-free model (when given), the MC-Dropout mean image and
/// the ensemble mean image.
inline EvaluationTable evaluation_table(SynthesisModel* no_dropout, SynthesisModel& mc_model, EnsembleSet& ensemble,
                                        const Dataset& test, std::size_t m, std::uint64_t seed) {
  EvaluationTable t;
  if (no_dropout) t.rows.push_back(evaluate_deterministic(*no_dropout, test, "no_dropout"));
  t.rows.push_back(evaluate_mc_mean(mc_model, test, m, seed));
  t.rows.push_back(evaluate_ensemble_mean(ensemble, test));
  return t;
}

enum class StudyAxis { McSamples, EnsembleSize, DropoutP };

inline std::string to_string(StudyAxis a) {
  switch (a) {
    case StudyAxis::McSamples: return "mc_samples";
    case StudyAxis::EnsembleSize: return "ensemble_size";
    case StudyAxis::DropoutP: return "dropout_p";
  }
  return "?";
}

inline StudyAxis study_axis_from_string(const std::string& s) {
  if (s == "mc_samples") return StudyAxis::McSamples;
  if (s == "ensemble_size") return StudyAxis::EnsembleSize;
  if (s == "dropout_p") return StudyAxis::DropoutP;
  throw InvalidArgument("unknown study axis '" + s + "' (expected mc_samples, ensemble_size or dropout_p)");
}

/// Test-set averages at one axis value. mean_uncertainty is the mean over
/// views of the combined-uncertainty aggregate (sum of channel pixel means).
struct StudyPoint {
  double value = 0;
  double mean_uncertainty = 0;
  double mean_psnr = 0;
  double mean_mse = 0;
};

struct StudyCurve {
  StudyAxis axis = StudyAxis::McSamples;
  std::vector<StudyPoint> points;

  nlohmann::json to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : points) {
      pts.push_back({{"value", p.value}, {"mean_uncertainty", p.mean_uncertainty}, {"mean_psnr", p.mean_psnr},
                     {"mean_mse", p.mean_mse}});
    }
    return {{"axis", to_string(axis)}, {"points", pts}};
  }
};

namespace study_detail {

template <class T>
void check_values(const std::vector<T>& values) {
  if (values.empty()) throw InvalidArgument("parameter study needs at least one value");
  if (!std::is_sorted(values.begin(), values.end())) throw InvalidArgument("parameter study values must be ascending");
}

inline double aggregate_uncertainty(const UncertaintyMaps& u) {
  float s = 0.0f;
  for (const auto& c : u.channel_uncertainty) s += c.mean();
  return s;
}

inline void accumulate(StudyPoint& p, const UncertaintyMaps& u, const RgbImage& gt) {
  const auto q = psnr(u.mean_image, gt);
  p.mean_uncertainty += aggregate_uncertainty(u);
  p.mean_psnr += q.psnr;
  p.mean_mse += q.mse;
}

inline void finish(StudyCurve& c, std::size_t views) {
  for (auto& p : c.points) {
    p.mean_uncertainty /= static_cast<double>(views);
    p.mean_psnr /= static_cast<double>(views);
    p.mean_mse /= static_cast<double>(views);
  }
}

}  // namespace study_detail

/// One stack of max(values) passes per view; smaller m use its prefixes, which
/// are exactly the stacks mc_sample would draw for them. View k uses seed
/// mix_seed(seed, k).
inline StudyCurve mc_samples_study(SynthesisModel& model, const Dataset& test, const std::vector<std::size_t>& values,
                                   std::uint64_t seed) {
  study_detail::check_values(values);
  if (values.front() < 2) throw InvalidArgument("mc_samples values must be >= 2");
  StudyCurve curve{StudyAxis::McSamples, {}};
  for (auto v : values) curve.points.push_back({static_cast<double>(v)});
  for (std::size_t k = 0; k < test.size(); ++k) {
    const auto& e = test.entries[k];
    SampleStack full = mc_sample(model, e.view, values.back(), mix_seed(seed, k));
    for (std::size_t p = 0; p < values.size(); ++p) {
      SampleStack prefix{std::vector<RgbImage>(full.samples.begin(), full.samples.begin() + static_cast<long>(values[p])),
                         full.source};
      study_detail::accumulate(curve.points[p], uncertainty_only(prefix), e.image);
    }
  }
  study_detail::finish(curve, test.size());
  return curve;
}

/// Prefixes of the member list; a single member has zero uncertainty.
inline StudyCurve ensemble_size_study(EnsembleSet& ensemble, const Dataset& test,
                                      const std::vector<std::size_t>& values) {
  study_detail::check_values(values);
  if (values.front() < 1 || values.back() > ensemble.size()) {
    throw InvalidArgument("ensemble_size values must lie in [1, " + std::to_string(ensemble.size()) + "]");
  }
  StudyCurve curve{StudyAxis::EnsembleSize, {}};
  for (auto v : values) curve.points.push_back({static_cast<double>(v)});
  for (const auto& e : test.entries) {
    const SampleStack full = ensemble_sample(ensemble, e.view);
    for (std::size_t p = 0; p < values.size(); ++p) {
      if (values[p] == 1) {
        const RgbImage& only = full.samples.front();
        UncertaintyMaps u{only, uq_detail::empty_maps(only.height, only.width), ImageMap(only.height, only.width)};
        study_detail::accumulate(curve.points[p], u, e.image);
      } else {
        SampleStack prefix{
            std::vector<RgbImage>(full.samples.begin(), full.samples.begin() + static_cast<long>(values[p])),
            full.source};
        study_detail::accumulate(curve.points[p], uncertainty_only(prefix), e.image);
      }
    }
  }
  study_detail::finish(curve, test.size());
  return curve;
}

/// One trained model per dropout probability (models[k] has values[k]);
/// quality is that of the m-pass MC mean image.
inline StudyCurve dropout_p_study(std::span<SynthesisModel* const> models, const Dataset& test,
                                  const std::vector<float>& values, std::size_t m, std::uint64_t seed) {
  study_detail::check_values(values);
  if (models.size() != values.size()) throw InvalidArgument("dropout_p study needs one model per value");
  StudyCurve curve{StudyAxis::DropoutP, {}};
  for (std::size_t p = 0; p < values.size(); ++p) {
    if (models[p]->config().dropout_p != values[p]) {
      throw InvalidArgument("model " + std::to_string(p) + " was built with dropout " +
                            std::to_string(models[p]->config().dropout_p) + ", expected " + std::to_string(values[p]));
    }
    StudyPoint pt{static_cast<double>(values[p])};
    for (std::size_t k = 0; k < test.size(); ++k) {
      const auto& e = test.entries[k];
      if (values[p] == 0.0f) {
        const RgbImage img = models[p]->predict(e.view, DropoutMode::Off);
        study_detail::accumulate(pt, UncertaintyMaps{img, uq_detail::empty_maps(img.height, img.width), {}}, e.image);
      } else {
        study_detail::accumulate(pt, uncertainty_only(mc_sample(*models[p], e.view, m, mix_seed(seed, k))), e.image);
      }
    }
    curve.points.push_back(pt);
  }
  study_detail::finish(curve, test.size());
  return curve;
}

}  // namespace viewuq
