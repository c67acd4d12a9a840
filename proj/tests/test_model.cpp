#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "viewuq/viewuq.hpp"

using namespace viewuq;
using testutil::tiny_config;

namespace {

const Dataset& small_dataset() {
  static const Dataset d = generate_dataset(testutil::tiny_volume(), "default", 8, 16, 21);
  return d;
}

TrainConfig quick_train(std::size_t epochs, std::uint64_t seed = 1) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 4;
  t.adam.lr = 1e-3f;
  t.seed = seed;
  return t;
}

}  // namespace

TEST(Config, ValidationAndResolutions) {
  EXPECT_NO_THROW(tiny_config().validate());
  ModelConfig c = tiny_config();
  c.image_resolution = 24;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = tiny_config();
  c.n_res_blocks = 3;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = tiny_config();
  c.dropout_p = 1.0f;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c.dropout_p = -0.01f;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = tiny_config();
  c.fc_widths = {8, 0};
  EXPECT_THROW(c.validate(), InvalidArgument);

  const ModelConfig d;
  EXPECT_EQ(d.image_resolution, 32u);
  EXPECT_EQ(d.n_res_blocks, 3u);
  EXPECT_NO_THROW(d.validate());
  const ModelConfig f = ModelConfig::full_scale();
  EXPECT_EQ(f.image_resolution, 128u);
  EXPECT_NO_THROW(f.validate());
  EXPECT_EQ(f.block_channels(), (std::vector<std::size_t>{64, 32, 16, 16, 16, 16}));
}

TEST(Config, JsonRoundTrip) {
  ModelConfig c = tiny_config(0.25f, 99);
  const ModelConfig back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Config, ParameterCountByHand) {
  // fc: 2*8+8 + 8*16+16 + 16*128+128 = 2344
  // block0 (8->4): 292 + 8 + 148 + 8 + 36 = 492; block1 (4->4): 148 + 8 + 148 + 8 + 20 = 332
  // out: 4*3*9+3 = 111
  EXPECT_EQ(tiny_config().parameter_count(), 3279u);
  SynthesisModel m(tiny_config());
  EXPECT_EQ(m.parameter_count(), 3279u);
}

TEST(Model, OutputsInTanhRange) {
  SynthesisModel m(tiny_config());
  for (double th : {0.0, 90.0, 359.0}) {
    for (double ph : {-90.0, 0.0, 45.0}) {
      const RgbImage img = m.predict(ViewPoint(th, ph));
      EXPECT_EQ(img.height, 16u);
      EXPECT_TRUE(img.in_model_range());
    }
  }
}

TEST(Model, MseLossNodeMatchesDirectMean) {
  SynthesisModel m(tiny_config());
  const auto& e = small_dataset().entries[0];
  const RgbImage pred = m.predict(e.view);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    acc += (double(pred.data[i]) - e.image.data[i]) * (double(pred.data[i]) - e.image.data[i]);
  }
  auto& net = m.network();
  Tensor target({1, 3, 16, 16}, e.image.data);
  const Normalized2 in[] = {normalize_view(e.view)};
  const NodeId t[] = {net.loss};
  net.graph.forward({{"view", SynthesisModel::view_tensor(in)}, {"target", target}}, t);
  EXPECT_NEAR(net.graph.value(net.loss).data[0], acc / double(pred.data.size()), 1e-6);
}

TEST(Model, PredictIsDeterministic) {
  SynthesisModel a(tiny_config()), b(tiny_config());
  const ViewPoint v(12, 34);
  EXPECT_EQ(a.predict(v), a.predict(v));
  EXPECT_EQ(a.predict(v), b.predict(v));
  SynthesisModel c(tiny_config(0.1f, 8));
  EXPECT_NE(a.predict(v), c.predict(v));
}

TEST(Model, BatchPredictionMatchesSingle) {
  SynthesisModel m(tiny_config(0.3f));
  const std::vector<ViewPoint> views{{10, 5}, {200, -30}, {90, 89}};
  const std::vector<std::uint64_t> seeds{4, 5, 6};
  const auto batch = m.predict_batch(views, DropoutMode::McEval, seeds);
  for (std::size_t i = 0; i < views.size(); ++i) {
    EXPECT_EQ(batch[i], m.predict(views[i], DropoutMode::McEval, seeds[i]));
  }
}

TEST(Model, McPassesDifferButReplay) {
  SynthesisModel m(tiny_config(0.3f));
  const ViewPoint v(45, 10);
  const RgbImage a = m.predict(v, DropoutMode::McEval, 1);
  const RgbImage b = m.predict(v, DropoutMode::McEval, 2);
  EXPECT_NE(a, b);
  EXPECT_EQ(a, m.predict(v, DropoutMode::McEval, 1));
  EXPECT_THROW(m.predict(v, DropoutMode::Train, 1), InvalidArgument);
}

TEST(Model, ZeroDropoutMcEvalEqualsOff) {
  SynthesisModel m(tiny_config(0.0f));
  const ViewPoint v(300, -60);
  EXPECT_EQ(m.predict(v, DropoutMode::McEval, 17), m.predict(v, DropoutMode::Off));
}

TEST(Training, OverfitsSingleSample) {
  Dataset one = small_dataset();
  one.entries.resize(1);
  SynthesisModel m(tiny_config(0.0f));
  const auto r = train(m, one, quick_train(300));
  ASSERT_EQ(r.loss_history.size(), 300u);
  EXPECT_LT(r.loss_history.back(), 0.1f * r.loss_history.front());
  const auto p = psnr(m.predict(one.entries[0].view), one.entries[0].image);
  EXPECT_GT(p.psnr, 25.0);
}

TEST(Training, LossTrendsDownAndIsReproducible) {
  SynthesisModel a(tiny_config()), b(tiny_config());
  std::vector<float> seen;
  const auto ra = train(a, small_dataset(), quick_train(40), [&](std::size_t, float l) { seen.push_back(l); });
  const auto rb = train(b, small_dataset(), quick_train(40));
  EXPECT_EQ(seen, ra.loss_history);
  EXPECT_EQ(ra.loss_history, rb.loss_history);
  const ViewPoint v(1, 2);
  EXPECT_EQ(a.predict(v), b.predict(v));
  float head = 0, tail = 0;
  for (int i = 0; i < 5; ++i) {
    head += ra.loss_history[i];
    tail += ra.loss_history[ra.loss_history.size() - 1 - i];
  }
  EXPECT_LT(tail, 0.5f * head);
  EXPECT_EQ(ra.optimizer.step_count, 40u * 2u);
}

TEST(Training, RejectsMismatchedData) {
  SynthesisModel m(tiny_config());
  Dataset empty;
  empty.resolution = 16;
  EXPECT_THROW(train(m, empty, quick_train(1)), InvalidArgument);
  Dataset big = small_dataset();
  big.resolution = 32;
  EXPECT_THROW(train(m, big, quick_train(1)), InvalidArgument);
  TrainConfig bad = quick_train(1);
  bad.batch_size = 0;
  EXPECT_THROW(train(m, small_dataset(), bad), InvalidArgument);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  testutil::TempDir tmp;
  SynthesisModel m(tiny_config(0.2f, 3));
  const auto r = train(m, small_dataset(), quick_train(3));
  const auto path = tmp / "m.ckpt";
  save_checkpoint(path, m, TrainingMeta{3, r.loss_history.back(), 21, 1}, &r.optimizer);
  LoadedCheckpoint back = load_checkpoint(path);
  EXPECT_EQ(back.model.config().to_json(), m.config().to_json());
  EXPECT_EQ(back.training.epochs, 3u);
  EXPECT_EQ(back.training.final_loss, r.loss_history.back());
  auto sa = m.state_arrays(), sb = back.model.state_arrays();
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_EQ(sa[i].first, sb[i].first);
    EXPECT_EQ(*sa[i].second, *sb[i].second) << sa[i].first;
  }
  const ViewPoint v(77, -7);
  EXPECT_EQ(back.model.predict(v), m.predict(v));
  EXPECT_EQ(back.model.predict(v, DropoutMode::McEval, 9), m.predict(v, DropoutMode::McEval, 9));
  ASSERT_TRUE(back.optimizer.has_value());
  EXPECT_EQ(back.optimizer->step_count, r.optimizer.step_count);
  EXPECT_EQ(back.optimizer->first_moment, r.optimizer.first_moment);
  EXPECT_EQ(back.optimizer->second_moment, r.optimizer.second_moment);
}

TEST(Checkpoint, TruncatedFileIsIoError) {
  testutil::TempDir tmp;
  SynthesisModel m(tiny_config());
  const auto path = tmp / "m.ckpt";
  save_checkpoint(path, m, TrainingMeta{});
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 10);
  EXPECT_THROW(load_checkpoint(path), IoError);
  EXPECT_THROW(load_checkpoint(tmp / "missing.ckpt"), IoError);
}
