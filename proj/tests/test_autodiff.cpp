#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <string>

#include "gradcheck.hpp"
#include "test_util.hpp"
#include "viewuq/viewuq.hpp"

using namespace viewuq;
using TensorD = BasicTensor<double>;
using GraphD = BasicGraph<double>;

namespace {

template <typename T>
BasicTensor<T> random_tensor(Shape shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = BasicTensor<T>::zeros(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

Tensor vec(std::vector<float> v) {
  Tensor t = Tensor::zeros({v.size()});
  t.data = std::move(v);
  return t;
}

}  // namespace

TEST(Forward, IdentityNode) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId y = g.identity(x);
  g.mark_output("y", y);
  const auto out = g.forward({{"x", Tensor({1, 3}, {1, 2, 3})}});
  EXPECT_EQ(out.at("y").data, (std::vector<float>{1, 2, 3}));
}

TEST(Forward, AffineByHand) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId y = g.affine(x, 2.0f, 1.0f);
  g.mark_output("y", y);
  const auto out = g.forward({{"x", Tensor({1, 1}, {0.5f})}});
  EXPECT_FLOAT_EQ(out.at("y").data[0], 2.0f);
}

TEST(Forward, TwoLayerMlpMatchesDirectEvaluation) {
  CounterRng rng(17);
  const std::size_t n = 4, in = 5, hid = 7, out = 3;
  Graph g;
  const NodeId x = g.input("x");
  const Tensor w1 = random_tensor<float>({hid, in}, rng), b1 = random_tensor<float>({hid}, rng);
  const Tensor w2 = random_tensor<float>({out, hid}, rng), b2 = random_tensor<float>({out}, rng);
  NodeId h = g.relu(g.dense(x, g.parameter("w1", w1), g.parameter("b1", b1)));
  const NodeId y = g.tanh(g.dense(h, g.parameter("w2", w2), g.parameter("b2", b2)));
  const Tensor xin = random_tensor<float>({n, in}, rng);
  const NodeId t[] = {y};
  g.forward({{"x", xin}}, t);
  const auto& got = g.value(y).data;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> hv(hid);
    for (std::size_t j = 0; j < hid; ++j) {
      double a = b1.data[j];
      for (std::size_t i = 0; i < in; ++i) a += double(w1.data[j * in + i]) * xin.data[s * in + i];
      hv[j] = std::max(0.0, a);
    }
    for (std::size_t k = 0; k < out; ++k) {
      double a = b2.data[k];
      for (std::size_t j = 0; j < hid; ++j) a += double(w2.data[k * hid + j]) * hv[j];
      EXPECT_NEAR(got[s * out + k], std::tanh(a), 1e-6);
    }
  }
}

TEST(Forward, UnboundInputNamesNode) {
  Graph g;
  const NodeId x = g.input("x");
  g.identity(x);
  try {
    g.forward({});
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
  }
}

TEST(Forward, ShapeMismatchNamesNode) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId w = g.parameter("w", Tensor::zeros({3, 4}));
  const NodeId b = g.parameter("b", Tensor::zeros({3}));
  g.dense(x, w, b, "my_dense");
  try {
    g.forward({{"x", Tensor::zeros({2, 5})}});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("my_dense"), std::string::npos) << e.what();
  }
}

TEST(Forward, ConvChannelMismatchIsError) {
  Graph g;
  const NodeId x = g.input("x");
  g.conv2d(x, g.parameter("w", Tensor::zeros({2, 3, 3, 3})), g.parameter("b", Tensor::zeros({2})), "c");
  EXPECT_THROW(g.forward({{"x", Tensor::zeros({1, 2, 4, 4})}}), ShapeError);
}

TEST(Forward, NonFiniteIsNumericFault) {
  Graph g;
  g.set_check_numerics(true);
  const NodeId x = g.input("x");
  g.affine(x, 1.0f, 0.0f, "pass");
  Tensor bad({1, 1}, {std::numeric_limits<float>::quiet_NaN()});
  EXPECT_THROW(g.forward({{"x", bad}}), NumericFault);
}

TEST(Backward, IdentityGradientIsOne) {
  Graph g;
  const NodeId x = g.input("x", true);
  const NodeId y = g.identity(x);
  g.forward({{"x", Tensor({1}, {3.0f})}});
  g.backward(y);
  EXPECT_EQ(g.input_grad("x"), (std::vector<float>{1.0f}));
}

TEST(Backward, ConstantsGiveNoGradients) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId c = g.parameter("c", vec({1, 2}), false);
  const NodeId s = g.sum(g.add(x, c));
  g.forward({{"x", vec({3, 4})}});
  EXPECT_NO_THROW(g.backward(s));
  EXPECT_TRUE(g.input_grad("x").empty());
  EXPECT_TRUE(g.value(c).grad.empty() ||
              std::all_of(g.value(c).grad.begin(), g.value(c).grad.end(), [](float v) { return v == 0.0f; }));
}

TEST(Backward, ErrorsBeforeForwardAndOnNonScalar) {
  Graph g;
  const NodeId x = g.input("x", true);
  const NodeId y = g.identity(x);
  EXPECT_THROW(g.backward(y), Error);
  g.forward({{"x", vec({1, 2})}});
  EXPECT_THROW(g.backward(y), ShapeError);
}

TEST(Backward, ReuseAccumulatesBothPaths) {
  // loss = sum(x + x * 3) -> d/dx = 4
  Graph g;
  const NodeId x = g.input("x", true);
  const NodeId loss = g.sum(g.add(x, g.affine(x, 3.0f, 0.0f)));
  g.forward({{"x", vec({1, -2, 5})}});
  g.backward(loss);
  EXPECT_EQ(g.input_grad("x"), (std::vector<float>{4, 4, 4}));
}

TEST(Backward, RepeatedBackwardDoesNotAccumulateAcrossCalls) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId w = g.parameter("w", Tensor({1, 1}, {2.0f}));
  const NodeId b = g.parameter("b", Tensor({1}, {0.0f}));
  const NodeId loss = g.sum(g.dense(x, w, b));
  g.forward({{"x", Tensor({1, 1}, {3.0f})}});
  g.backward(loss);
  g.backward(loss);
  EXPECT_FLOAT_EQ(g.value(w).grad[0], 3.0f);
}

TEST(Layers, ConvIdentityKernel) {
  CounterRng rng(1);
  Graph g;
  const NodeId x = g.input("x");
  Tensor w = Tensor::zeros({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w.data[c * 3 + c] = 1.0f;
  const NodeId y = g.conv2d(x, g.parameter("w", w), g.parameter("b", Tensor::zeros({3})));
  const Tensor in = random_tensor<float>({2, 3, 5, 5}, rng);
  const NodeId t[] = {y};
  g.forward({{"x", in}}, t);
  EXPECT_EQ(g.value(y).data, in.data);
}

TEST(Layers, ConvZeroInputZeroOutput) {
  CounterRng rng(2);
  Graph g;
  const NodeId x = g.input("x");
  const NodeId y =
      g.conv2d(x, g.parameter("w", random_tensor<float>({4, 2, 3, 3}, rng)), g.parameter("b", Tensor::zeros({4})));
  const NodeId t[] = {y};
  g.forward({{"x", Tensor::zeros({1, 2, 6, 6})}}, t);
  for (float v : g.value(y).data) EXPECT_EQ(v, 0.0f);
}

TEST(Layers, Conv3x3MatchesNestedLoopOracle) {
  CounterRng rng(3);
  const std::size_t ci = 1, co = 2, hgt = 4, wid = 4;
  const Tensor w = random_tensor<float>({co, ci, 3, 3}, rng), b = random_tensor<float>({co}, rng);
  const Tensor in = random_tensor<float>({1, ci, hgt, wid}, rng);
  Graph g;
  const NodeId x = g.input("x");
  const NodeId y = g.conv2d(x, g.parameter("w", w), g.parameter("b", b));
  const NodeId t[] = {y};
  g.forward({{"x", in}}, t);
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t r = 0; r < hgt; ++r) {
      for (std::size_t c = 0; c < wid; ++c) {
        double acc = b.data[o];
        for (std::size_t i = 0; i < ci; ++i) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const long rr = long(r) + dy, cc = long(c) + dx;
              if (rr < 0 || cc < 0 || rr >= long(hgt) || cc >= long(wid)) continue;
              acc += double(w.data[((o * ci + i) * 3 + (dy + 1)) * 3 + (dx + 1)]) *
                     in.data[(i * hgt + std::size_t(rr)) * wid + std::size_t(cc)];
            }
          }
        }
        EXPECT_NEAR(g.value(y).data[(o * hgt + r) * wid + c], acc, 1e-6);
      }
    }
  }
}

TEST(Layers, UpsampleNearest) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId y = g.upsample2x(x);
  const NodeId t[] = {y};
  g.forward({{"x", Tensor({1, 1, 2, 2}, {1, 2, 3, 4})}}, t);
  EXPECT_EQ(g.value(y).shape, (Shape{1, 1, 4, 4}));
  EXPECT_EQ(g.value(y).data, (std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
}

TEST(Layers, TanhRangeAndRelu) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId t = g.tanh(x);
  const NodeId r = g.relu(x);
  g.mark_output("t", t);
  g.mark_output("r", r);
  const auto out = g.forward({{"x", vec({-1e30f, -3, 0, 2, 1e30f})}});
  for (float v : out.at("t").data) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_EQ(out.at("r").data, (std::vector<float>{0, 0, 0, 2, 1e30f}));
}

TEST(Layers, ReshapeKeepsBatch) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId y = g.reshape(x, {2, 2, 2});
  const NodeId t[] = {y};
  g.forward({{"x", Tensor::zeros({3, 8})}}, t);
  EXPECT_EQ(g.value(y).shape, (Shape{3, 2, 2, 2}));
  Graph bad;
  const NodeId bx = bad.input("x");
  bad.reshape(bx, {3, 3});
  EXPECT_THROW(bad.forward({{"x", Tensor::zeros({1, 8})}}), ShapeError);
}

TEST(Layers, MseLossExamples) {
  Graph g;
  const NodeId p = g.input("p"), q = g.input("q");
  const NodeId l = g.mse_loss(p, q);
  const NodeId t[] = {l};
  g.forward({{"p", vec({1, 2, 3, 4})}, {"q", vec({1, 2, 3, 4})}}, t);
  EXPECT_EQ(g.value(l).data[0], 0.0f);
  g.forward({{"p", vec({1.5f, 2.5f, 3.5f, 4.5f})}, {"q", vec({1, 2, 3, 4})}}, t);
  EXPECT_FLOAT_EQ(g.value(l).data[0], 0.25f);
  CounterRng rng(8);
  const Tensor a = random_tensor<float>({1, 3, 2, 2}, rng), b = random_tensor<float>({1, 3, 2, 2}, rng);
  g.forward({{"p", a}, {"q", b}}, t);
  double acc = 0.0;
  for (std::size_t i = 0; i < 12; ++i) acc += (double(a.data[i]) - b.data[i]) * (double(a.data[i]) - b.data[i]);
  EXPECT_NEAR(g.value(l).data[0], acc / 12.0, 1e-7);
  EXPECT_THROW(g.forward({{"p", vec({1, 2})}, {"q", vec({1, 2, 3})}}, t), ShapeError);
}

TEST(Layers, BatchNormTrainMatchesOracleAndUpdatesStats) {
  CounterRng rng(4);
  const std::size_t n = 3, c = 2, hw = 4;
  const Tensor in = random_tensor<float>({n, c, 2, 2}, rng, -2.0, 3.0);
  const Tensor gamma({c}, {1.5f, 0.5f}), beta({c}, {0.1f, -0.2f});
  Graph g;
  const NodeId x = g.input("x");
  const NodeId y = g.batch_norm2d(x, g.parameter("g", gamma), g.parameter("b", beta), "bn");
  g.set_batch_norm_training(true);
  const NodeId t[] = {y};
  g.forward({{"x", in}}, t);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0, var = 0;
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t p = 0; p < hw; ++p) mean += in.data[(s * c + ch) * hw + p];
    }
    mean /= double(n * hw);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t p = 0; p < hw; ++p) {
        const double d = in.data[(s * c + ch) * hw + p] - mean;
        var += d * d;
      }
    }
    const double biased = var / double(n * hw), unbiased = var / double(n * hw - 1);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t i = (s * c + ch) * hw + p;
        const double expect = gamma.data[ch] * (in.data[i] - mean) / std::sqrt(biased + 1e-5) + beta.data[ch];
        EXPECT_NEAR(g.value(y).data[i], expect, 1e-5);
      }
    }
    auto bufs = g.buffers();
    EXPECT_NEAR((*bufs[0].second)[ch], 0.1 * mean, 1e-6);
    EXPECT_NEAR((*bufs[1].second)[ch], 0.9 + 0.1 * unbiased, 1e-5);
  }
}

TEST(Layers, BatchNormEvalUsesRunningStatsDeterministically) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId y = g.batch_norm2d(x, g.parameter("g", vec({2.0f})), g.parameter("b", vec({1.0f})), "bn");
  auto bufs = g.buffers();
  *bufs[0].second = {0.5f};
  *bufs[1].second = {4.0f};
  g.set_batch_norm_training(false);
  const NodeId t[] = {y};
  g.forward({{"x", Tensor({1, 1, 1, 2}, {0.5f, 2.5f})}}, t);
  const auto first = g.value(y).data;
  EXPECT_NEAR(first[0], 1.0, 1e-6);
  EXPECT_NEAR(first[1], 2.0 * 2.0 / std::sqrt(4.0 + 1e-5) + 1.0, 1e-6);
  g.forward({{"x", Tensor({1, 1, 1, 2}, {0.5f, 2.5f})}}, t);
  EXPECT_EQ(g.value(y).data, first);
  EXPECT_EQ((*g.buffers()[0].second)[0], 0.5f);
}

TEST(Dropout, ZeroProbabilityIsBitIdentity) {
  CounterRng rng(5);
  const Tensor in = random_tensor<float>({2, 4, 3, 3}, rng);
  for (DropoutMode mode : {DropoutMode::Train, DropoutMode::McEval, DropoutMode::Off}) {
    Graph g;
    const NodeId x = g.input("x");
    const NodeId y = g.dropout2d(x, 0.0f);
    g.set_dropout_mode(mode);
    const NodeId t[] = {y};
    g.forward({{"x", in}}, t);
    EXPECT_EQ(g.value(y).data, in.data);
  }
}

TEST(Dropout, OffModeIsIdentity) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId y = g.dropout2d(x, 0.5f);
  g.set_dropout_mode(DropoutMode::Off);
  const NodeId t[] = {y};
  const Tensor in({1, 2, 1, 1}, {3.0f, 4.0f});
  g.forward({{"x", in}}, t);
  EXPECT_EQ(g.value(y).data, in.data);
}

TEST(Dropout, InvalidProbability) {
  Graph g;
  const NodeId x = g.input("x");
  EXPECT_THROW(g.dropout2d(x, 1.0f), InvalidArgument);
  EXPECT_THROW(g.dropout2d(x, -0.1f), InvalidArgument);
  EXPECT_THROW(g.dropout2d(x, 1.5f), InvalidArgument);
}

TEST(Dropout, FrequencyAndScaleAtP03) {
  const std::size_t draws = 10000, channels = 8;
  Graph g;
  const NodeId x = g.input("x");
  const NodeId y = g.dropout2d(x, 0.3f);
  g.set_dropout_mode(DropoutMode::McEval);
  Tensor in = Tensor::zeros({draws, channels, 2, 2});
  for (std::size_t i = 0; i < in.data.size(); ++i) in.data[i] = 1.0f + float(i % 7);
  std::vector<std::uint64_t> seeds(draws);
  for (std::size_t i = 0; i < draws; ++i) seeds[i] = mix_seed(77, i);
  g.set_sample_seeds(seeds);
  const NodeId t[] = {y};
  g.forward({{"x", in}}, t);
  std::size_t dropped = 0;
  for (std::size_t n = 0; n < draws; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (n * channels + c) * 4;
      const bool zero = g.value(y).data[base] == 0.0f;
      dropped += zero;
      for (std::size_t p = 0; p < 4; ++p) {
        const float out = g.value(y).data[base + p];
        if (zero) {
          EXPECT_EQ(out, 0.0f);
        } else {
          EXPECT_FLOAT_EQ(out, in.data[base + p] / 0.7f);
        }
      }
    }
  }
  EXPECT_NEAR(double(dropped) / double(draws * channels), 0.3, 0.02);
}

TEST(Dropout, BatchedEqualsUnbatchedAndReproducible) {
  CounterRng rng(6);
  const Tensor one = random_tensor<float>({1, 6, 2, 2}, rng);
  Graph g;
  const NodeId x = g.input("x");
  const NodeId y = g.dropout2d(g.dropout2d(x, 0.4f), 0.2f);
  g.set_dropout_mode(DropoutMode::McEval);
  const NodeId t[] = {y};
  std::vector<std::vector<float>> single;
  for (std::uint64_t s : {11ULL, 12ULL, 13ULL}) {
    g.set_sample_seeds({s});
    g.forward({{"x", one}}, t);
    single.push_back(g.value(y).data);
  }
  Tensor batch = Tensor::zeros({3, 6, 2, 2});
  for (int k = 0; k < 3; ++k) std::copy(one.data.begin(), one.data.end(), batch.data.begin() + k * 24);
  g.set_sample_seeds({11, 12, 13});
  g.forward({{"x", batch}}, t);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(std::vector<float>(g.value(y).data.begin() + k * 24, g.value(y).data.begin() + (k + 1) * 24), single[k]);
  }
  EXPECT_NE(single[0], single[1]);
}

TEST(Dropout, DenseFeaturesAreChannels) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId y = g.dropout2d(x, 0.5f);
  g.set_dropout_mode(DropoutMode::Train);
  g.set_sample_seeds({1, 2});
  const NodeId t[] = {y};
  g.forward({{"x", Tensor({2, 50}, std::vector<float>(100, 1.0f))}}, t);
  for (float v : g.value(y).data) EXPECT_TRUE(v == 0.0f || v == 2.0f);
}

TEST(Determinism, ForwardBackwardBitIdentical) {
  const auto run = [] {
    SynthesisModel m(testutil::tiny_config());
    auto& g = m.graph();
    g.set_batch_norm_training(true);
    g.set_dropout_mode(DropoutMode::Train);
    g.set_sample_seeds({5, 6});
    CounterRng rng(3);
    Tensor view = random_tensor<float>({2, 2}, rng);
    Tensor target = random_tensor<float>({2, 3, 16, 16}, rng);
    const NodeId t[] = {m.network().loss};
    g.forward({{"view", view}, {"target", target}}, t);
    g.backward(m.network().loss);
    std::vector<float> all = g.value(m.network().loss).data;
    for (NodeId id : g.parameter_ids()) all.insert(all.end(), g.value(id).grad.begin(), g.value(id).grad.end());
    return all;
  };
  EXPECT_EQ(run(), run());
}

// ---- finite differences, double instantiation -----------------------------

class LayerGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(LayerGradients, MatchFiniteDifferences) {
  const std::uint64_t s = GetParam();
  auto cases = gradcheck::layer_cases(s);
  for (auto& [name, c] : cases) {
    const auto w = gradcheck::check(c.g, c.inputs, c.loss);
    EXPECT_LT(w.rel, 1e-3) << name << " seed " << s << " worst at " << w.where << ": analytic " << w.analytic
                           << " numeric " << w.numeric;
    EXPECT_GT(w.checked, 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, LayerGradients, ::testing::Values(1, 2, 3));

TEST(ModelGradients, TwoBlockModelMatchesFiniteDifferences) {
  ModelConfig cfg = testutil::tiny_config(0.1f, 5);
  cfg.fc_widths = {4};
  cfg.base_channels = 4;
  cfg.channel_floor = 2;
  auto net = build_synthesis_network<double>(cfg);
  net.graph.set_batch_norm_training(true);
  net.graph.set_dropout_mode(DropoutMode::Train);
  net.graph.set_sample_seeds({21, 22});
  CounterRng rng(9);
  std::map<std::string, TensorD> inputs{{"view", random_tensor<double>({2, 2}, rng)},
                                        {"target", random_tensor<double>({2, 3, 16, 16}, rng)}};
  const auto w = gradcheck::check(net.graph, inputs, net.loss, 1e-6);
  EXPECT_LT(w.rel, 1e-3) << w.where << " analytic " << w.analytic << " numeric " << w.numeric;
}

TEST(ModelGradients, RandomPointsAtCoarseStep) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto c = gradcheck::model_case(seed);
    const auto w = gradcheck::check(c.net.graph, c.inputs, c.net.loss, 1e-3, 1e-7, 1e-6, true);
    EXPECT_LT(w.rel, 1e-3) << "seed " << seed << " " << w.where;
    EXPECT_GT(w.checked, 600u);
  }
}

TEST(ModelGradients, KinkCrossingsAreDetected) {
  GraphD g;
  const NodeId x = g.input("x", true);
  const NodeId loss = g.sum(g.relu(x));
  std::map<std::string, TensorD> in{{"x", TensorD({3}, {0.5, 2e-4, -0.3})}};
  const auto plain = gradcheck::check(g, in, loss, 1e-3);
  EXPECT_GT(plain.rel, 0.1);
  const auto aware = gradcheck::check(g, in, loss, 1e-3, 1e-7, 1e-6);
  EXPECT_EQ(aware.kinks, 1u);
  EXPECT_LT(aware.rel, 1e-6);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor p({3}, {1, 2, 3});
  p.zero_grad();
  AdamState st(AdamConfig{});
  Tensor* ps[] = {&p};
  st.allocate(ps);
  adam_step(ps, st);
  EXPECT_EQ(p.data, (std::vector<float>{1, 2, 3}));
  EXPECT_EQ(st.step_count, 1u);
}

TEST(Adam, SingleStepByHand) {
  Tensor p({1}, {1.0f});
  p.grad = {0.5f};
  AdamConfig cfg;
  cfg.lr = 1e-3f;
  AdamState st(cfg);
  Tensor* ps[] = {&p};
  st.allocate(ps);
  adam_step(ps, st);
  const double m = 0.1 * 0.5, v = 0.001 * 0.25;
  const double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
  const double expect = 1.0 - 1e-3 * mhat / (std::sqrt(vhat) + 1e-8);
  EXPECT_NEAR(p.data[0], expect, 1e-7);
  EXPECT_NEAR(p.data[0], 0.999, 1e-6);
}

TEST(Adam, DefaultsAndValidation) {
  const AdamConfig d;
  EXPECT_FLOAT_EQ(d.lr, 1e-4f);
  EXPECT_FLOAT_EQ(d.beta1, 0.9f);
  EXPECT_FLOAT_EQ(d.beta2, 0.999f);
  EXPECT_THROW(AdamState(AdamConfig{0.0f}), InvalidArgument);
  EXPECT_THROW(AdamState(AdamConfig{1e-3f, 1.0f}), InvalidArgument);
  EXPECT_THROW(AdamState(AdamConfig{1e-3f, 0.9f, 0.999f, 0.0f}), InvalidArgument);
}

TEST(Adam, ShapeMismatchIsError) {
  Tensor p({2}, {1, 2});
  p.zero_grad();
  AdamState st(AdamConfig{});
  Tensor* ps[] = {&p};
  st.allocate(ps);
  Tensor q({3}, {1, 2, 3});
  q.zero_grad();
  Tensor* qs[] = {&q};
  EXPECT_THROW(adam_step(qs, st), ShapeError);
}
