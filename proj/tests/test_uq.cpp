#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"
#include "viewuq/viewuq.hpp"

using namespace viewuq;
using testutil::tiny_config;

namespace {

SampleStack stack_of(std::vector<RgbImage> imgs) {
  SampleStack s;
  s.samples = std::move(imgs);
  return s;
}

RgbImage constant(std::size_t h, std::size_t w, float v) { return RgbImage(h, w, v); }

// Zeroes the final conv so every prediction is tanh(0) = 0.
void zero_output_conv(SynthesisModel& m) {
  auto& g = m.graph();
  g.mutable_value(g.find("out.weight")).data.assign(g.value(g.find("out.weight")).numel(), 0.0f);
  g.mutable_value(g.find("out.bias")).data.assign(3, 0.0f);
}

}  // namespace

TEST(Bundle, OnePixelTwoSamplesByHand) {
  const auto s = stack_of({constant(1, 1, 0.0f), constant(1, 1, 1.0f)});
  const auto b = compute_bundle(s, constant(1, 1, 0.0f));
  for (int c = 0; c < 3; ++c) {
    EXPECT_FLOAT_EQ(b.mean_image.data[c], 0.5f);
    EXPECT_FLOAT_EQ(b.channel_uncertainty[c].data[0], 0.5f);
    EXPECT_FLOAT_EQ(b.channel_error[c].data[0], 0.5f);
    EXPECT_FLOAT_EQ(b.channel_error_std[c].data[0], 0.5f);
  }
  EXPECT_FLOAT_EQ(b.combined_uncertainty.data[0], 1.5f);
  EXPECT_FLOAT_EQ(b.combined_error.data[0], 1.5f);
  EXPECT_FLOAT_EQ(b.combined_error_std.data[0], 1.5f);
}

TEST(Bundle, IdenticalSamplesHaveZeroSpread) {
  CounterRng rng(1);
  const RgbImage img = testutil::random_image(4, 5, rng);
  const auto b = compute_bundle(stack_of({img, img, img, img}), testutil::random_image(4, 5, rng));
  for (int c = 0; c < 3; ++c) {
    for (float v : b.channel_uncertainty[c].data) EXPECT_EQ(v, 0.0f);
    for (float v : b.channel_error_std[c].data) EXPECT_EQ(v, 0.0f);
  }
  for (float v : b.combined_uncertainty.data) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(b.mean_image, img);
}

TEST(Bundle, PerfectPredictionHasZeroError) {
  CounterRng rng(2);
  const RgbImage img = testutil::random_image(3, 3, rng);
  const auto b = compute_bundle(stack_of({img, img}), img);
  for (float v : b.combined_error.data) EXPECT_EQ(v, 0.0f);
  for (float v : b.combined_error_std.data) EXPECT_EQ(v, 0.0f);
}

TEST(Bundle, MatchesFlatLoopOracle) {
  CounterRng rng(3);
  const std::size_t h = 3, w = 4, k = 7;
  std::vector<RgbImage> imgs;
  for (std::size_t i = 0; i < k; ++i) imgs.push_back(testutil::random_image(h, w, rng));
  const RgbImage gt = testutil::random_image(h, w, rng);
  const auto b = compute_bundle(stack_of(imgs), gt);
  const auto o = oracle::bundle(imgs, gt);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < h * w; ++p) {
      EXPECT_NEAR(b.mean_image.data[c * h * w + p], o.mean[c][p], 1e-6);
      EXPECT_NEAR(b.channel_uncertainty[c].data[p], o.unc[c][p], 1e-6);
      EXPECT_NEAR(b.channel_error[c].data[p], o.err[c][p], 1e-6);
      EXPECT_NEAR(b.channel_error_std[c].data[p], o.err_std[c][p], 1e-6);
    }
  }
  for (std::size_t p = 0; p < h * w; ++p) {
    const float sum = b.channel_uncertainty[0].data[p] + b.channel_uncertainty[1].data[p] +
                      b.channel_uncertainty[2].data[p];
    EXPECT_EQ(b.combined_uncertainty.data[p], sum);
  }
}

TEST(Bundle, PermutationInvariantBitForBit) {
  CounterRng rng(4);
  std::vector<RgbImage> imgs;
  for (int i = 0; i < 9; ++i) imgs.push_back(testutil::random_image(4, 4, rng));
  const RgbImage gt = testutil::random_image(4, 4, rng);
  const auto a = compute_bundle(stack_of(imgs), gt);
  for (std::uint64_t s = 1; s <= 3; ++s) {
    auto perm = imgs;
    CounterRng prng(s);
    shuffle(std::span<RgbImage>(perm), prng);
    const auto b = compute_bundle(stack_of(perm), gt);
    EXPECT_EQ(a.mean_image, b.mean_image);
    EXPECT_EQ(a.combined_uncertainty, b.combined_uncertainty);
    EXPECT_EQ(a.combined_error, b.combined_error);
    EXPECT_EQ(a.combined_error_std, b.combined_error_std);
  }
}

TEST(Bundle, Errors) {
  EXPECT_THROW(compute_bundle(stack_of({constant(2, 2, 0)}), constant(2, 2, 0)), InvalidArgument);
  EXPECT_THROW(compute_bundle(stack_of({constant(2, 2, 0), constant(2, 3, 0)}), constant(2, 2, 0)), ShapeError);
  EXPECT_THROW(compute_bundle(stack_of({constant(2, 2, 0), constant(2, 2, 0)}), constant(3, 2, 0)), ShapeError);
}

TEST(McSample, ReproducibleAndPrefixStable) {
  SynthesisModel m(tiny_config(0.3f));
  const ViewPoint v(33, 44);
  const auto a = mc_sample(m, v, 6, 123);
  const auto b = mc_sample(m, v, 6, 123, 4);
  const auto c = mc_sample(m, v, 10, 123, 3);
  ASSERT_EQ(a.size(), 6u);
  EXPECT_EQ(a.source.method, UqMethod::McDropout);
  EXPECT_FLOAT_EQ(a.source.eta, 0.3f);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(a.samples[i], b.samples[i]);
    EXPECT_EQ(a.samples[i], c.samples[i]);
    EXPECT_EQ(a.samples[i], m.predict(v, DropoutMode::McEval, mc_pass_seed(123, i)));
  }
  EXPECT_NE(a.samples[0], a.samples[1]);
  const auto u = uncertainty_only(a);
  float total = 0;
  for (float x : u.combined_uncertainty.data) total += x;
  EXPECT_GT(total, 0.0f);
}

TEST(McSample, Errors) {
  SynthesisModel none(tiny_config(0.0f));
  EXPECT_THROW(mc_sample(none, ViewPoint(), 5, 1), InvalidArgument);
  SynthesisModel m(tiny_config(0.2f));
  EXPECT_THROW(mc_sample(m, ViewPoint(), 1, 1), InvalidArgument);
}

TEST(Ensemble, IdenticalMembersGiveZeroUncertainty) {
  EnsembleSet e;
  for (int k = 0; k < 3; ++k) e.members.emplace_back(tiny_config(0.0f, 5));
  const auto s = ensemble_sample(e, ViewPoint(10, 10));
  EXPECT_EQ(s.source.member_ids, (std::vector<std::size_t>{0, 1, 2}));
  const auto u = uncertainty_only(s);
  for (float x : u.combined_uncertainty.data) EXPECT_EQ(x, 0.0f);
  const auto sens = ensemble_sensitivity(e, ViewPoint(10, 10));
  EXPECT_EQ(sens.reps, 3u);
  EXPECT_EQ(sens.std, 0.0);
}

TEST(Ensemble, DistinctMembersDisagreeAndPrefixWorks) {
  EnsembleSet e;
  for (std::uint64_t k = 0; k < 4; ++k) e.members.emplace_back(tiny_config(0.0f, 100 + k));
  const auto s = ensemble_sample(e, ViewPoint(200, -20));
  EXPECT_NE(s.samples[0], s.samples[1]);
  const EnsembleSet two = e.prefix(2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_THROW(e.prefix(5), InvalidArgument);
  EnsembleSet empty;
  EXPECT_THROW(ensemble_sample(empty, ViewPoint()), InvalidArgument);
}

TEST(Sensitivity, ZeroFinalConvGivesZero) {
  SynthesisModel m(tiny_config(0.2f));
  zero_output_conv(m);
  EXPECT_EQ(sensitivity(m, ViewPoint(50, 5), SensitivityMode::Deterministic, 1).mean, 0.0);
  const auto mc = sensitivity(m, ViewPoint(50, 5), SensitivityMode::McDropout, 4, 9);
  EXPECT_EQ(mc.mean, 0.0);
  EXPECT_EQ(mc.std, 0.0);
}

TEST(Sensitivity, MatchesFiniteDifferenceOfL1) {
  SynthesisModel m(tiny_config(0.0f, 12));
  const ViewPoint v(100, 20);
  const Normalized2 in = normalize_view(v);
  const auto l1 = [&](float a, float b) {
    const Normalized2 x[] = {{a, b}};
    const RgbImage img = m.predict_normalized(x, DropoutMode::Off).front();
    double s = 0;
    for (float p : img.data) s += std::abs(double(p));
    return s;
  };
  const float h = 1e-2f;
  const double gt = (l1(in[0] + h, in[1]) - l1(in[0] - h, in[1])) / (2 * h);
  const double gp = (l1(in[0], in[1] + h) - l1(in[0], in[1] - h)) / (2 * h);
  const Normalized2 one[] = {in};
  const Normalized2 g = m.l1_input_gradients(one, DropoutMode::Off).front();
  EXPECT_NEAR(g[0], gt, 0.05 * std::max(1.0, std::abs(gt)));
  EXPECT_NEAR(g[1], gp, 0.05 * std::max(1.0, std::abs(gp)));
  const auto r = sensitivity(m, v, SensitivityMode::Deterministic, 1);
  EXPECT_NEAR(r.mean, std::abs(double(g[0])) + std::abs(double(g[1])), 1e-9);
}

TEST(Sensitivity, RepsAndStdFlag) {
  SynthesisModel m(tiny_config(0.3f));
  const ViewPoint v(10, -40);
  const auto one = sensitivity(m, v, SensitivityMode::McDropout, 1, 5);
  EXPECT_EQ(one.reps, 1u);
  EXPECT_FALSE(one.std_defined);
  EXPECT_EQ(one.std, 0.0);
  const auto many = sensitivity(m, v, SensitivityMode::McDropout, 6, 5, 4);
  EXPECT_TRUE(many.std_defined);
  EXPECT_EQ(many.per_rep.size(), 6u);
  EXPECT_EQ(many.per_rep[0], one.per_rep[0]);
  EXPECT_GT(many.std, 0.0);
  const auto det = sensitivity(m, v, SensitivityMode::Deterministic, 3);
  EXPECT_EQ(det.per_rep[0], det.per_rep[2]);
  EXPECT_THROW(sensitivity(m, v, SensitivityMode::Deterministic, 0), InvalidArgument);
  SynthesisModel none(tiny_config(0.0f));
  EXPECT_THROW(sensitivity(none, v, SensitivityMode::McDropout, 3), InvalidArgument);
}

TEST(EnsembleIo, TrainSaveLoadAndReuse) {
  testutil::TempDir tmp;
  const Dataset d = generate_dataset(testutil::tiny_volume(), "default", 4, 16, 3);
  EnsembleTrainOptions opts;
  opts.model = tiny_config(0.3f);
  opts.train.epochs = 2;
  opts.train.batch_size = 2;
  opts.root_seed = 77;
  opts.members = 2;
  std::size_t calls = 0;
  EnsembleSet a = train_ensemble(tmp.path(), d, opts, [&](std::size_t, std::size_t, float) { ++calls; });
  EXPECT_EQ(calls, 4u);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a.members[0].config().dropout_p, 0.0f);
  EXPECT_EQ(a.members[1].config().seed, member_seed(77, 1));
  EXPECT_TRUE(std::filesystem::exists(tmp / member_file_name(1)));
  calls = 0;
  EnsembleSet again = train_ensemble(tmp.path(), d, opts, [&](std::size_t, std::size_t, float) { ++calls; });
  EXPECT_EQ(calls, 0u);
  EnsembleSet b = load_ensemble(tmp.path());
  const ViewPoint v(5, 5);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(a.members[k].predict(v), b.members[k].predict(v));
    EXPECT_EQ(again.members[k].predict(v), b.members[k].predict(v));
  }
  EXPECT_THROW(load_ensemble(tmp / "nowhere"), IoError);
}
