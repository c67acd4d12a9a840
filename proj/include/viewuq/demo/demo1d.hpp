#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewuq/autodiff/adam.hpp"
#include "viewuq/autodiff/graph.hpp"
#include "viewuq/core/binary_io.hpp"
#include "viewuq/core/error.hpp"
#include "viewuq/core/rng.hpp"
#include "viewuq/sweep/stats.hpp"
#include "viewuq/uq/uncertainty.hpp"

namespace viewuq {

struct Demo1DConfig {
  std::size_t n_train = 100;
  std::size_t n_test = 200;
  float noise_sigma = 0.1f;
  double x_min = 0.0;
  double x_max = 10.0;
  std::size_t iterations = 1000;
  std::size_t batch_size = 32;
  float lr = 1e-3f;
  std::size_t hidden = 64;
  std::size_t m = 100;
  std::size_t ensemble_size = 50;
  float dropout_p = 0.1f;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(noise_sigma >= 0.0f)) throw InvalidArgument("noise_sigma must be >= 0");
    if (n_train < 2) throw InvalidArgument("n_train must be >= 2");
    if (n_test < 1) throw InvalidArgument("n_test must be >= 1");
    if (!(x_max > x_min)) throw InvalidArgument("domain must satisfy x_min < x_max");
    if (iterations < 1 || batch_size < 1 || hidden < 1) throw InvalidArgument("iterations, batch_size, hidden must be >= 1");
    if (m < 2) throw InvalidArgument("m must be >= 2");
    if (ensemble_size < 1) throw InvalidArgument("ensemble_size must be >= 1");
    if (!(dropout_p >= 0.0f && dropout_p < 1.0f)) throw InvalidArgument("dropout_p must lie in [0, 1)");
  }

  nlohmann::json to_json() const {
    return {{"n_train", n_train}, {"n_test", n_test},       {"noise_sigma", noise_sigma},
            {"domain", {x_min, x_max}}, {"iterations", iterations}, {"batch_size", batch_size},
            {"lr", lr},           {"hidden", hidden},       {"m", m},
            {"ensemble_size", ensemble_size}, {"dropout_p", dropout_p}, {"seed", seed}};
  }
  static Demo1DConfig from_json(const nlohmann::json& j) {
    Demo1DConfig c;
    c.n_train = j.value("n_train", c.n_train);
    c.n_test = j.value("n_test", c.n_test);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    if (j.contains("domain")) {
      c.x_min = j["domain"].at(0).get<double>();
      c.x_max = j["domain"].at(1).get<double>();
    }
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.hidden = j.value("hidden", c.hidden);
    c.m = j.value("m", c.m);
    c.ensemble_size = j.value("ensemble_size", c.ensemble_size);
    c.dropout_p = j.value("dropout_p", c.dropout_p);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  }
};

inline double demo_target(double x) { return x * std::sin(x); }
inline double demo_target_curvature(double x) { return 2.0 * std::cos(x) - x * std::sin(x); }

struct Demo1DData {
  std::vector<double> train_x, train_y;
  std::vector<double> test_x, test_y;  // noise-free grid
};

/// Train x ~ U[x_min, x_max] and noise ~ N(0, sigma^2) from
/// CounterRng(mix_seed(seed, 1)); the test grid spans the domain evenly.
inline Demo1DData make_synthetic(const Demo1DConfig& cfg) {
  cfg.validate();
  Demo1DData d;
  CounterRng rng(mix_seed(cfg.seed, 1));
  for (std::size_t i = 0; i < cfg.n_train; ++i) {
    const double x = rng.uniform(cfg.x_min, cfg.x_max);
    const double eps = rng.normal();
    d.train_x.push_back(x);
    d.train_y.push_back(demo_target(x) + static_cast<double>(cfg.noise_sigma) * eps);
  }
  for (std::size_t i = 0; i < cfg.n_test; ++i) {
    const double t = cfg.n_test == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(cfg.n_test - 1);
    const double x = cfg.x_min + t * (cfg.x_max - cfg.x_min);
    d.test_x.push_back(x);
    d.test_y.push_back(demo_target(x));
  }
  return d;
}

/// 1 -> hidden -> hidden -> 1 ReLU MLP on x scaled to [-1, 1], with channel
/// dropout before the final layer when p > 0.
class DemoMlp {
 public:
  DemoMlp(const Demo1DConfig& cfg, float dropout_p, std::uint64_t init_seed) : cfg_(cfg) {
    CounterRng rng(mix_seed(init_seed, 0x1D));
    const auto he = [&](std::size_t out, std::size_t in) {
      const double bound = std::sqrt(6.0 / static_cast<double>(in));
      Tensor t = Tensor::zeros({out, in});
      for (auto& v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
      return t;
    };
    const std::size_t h = cfg.hidden;
    x_ = g_.input("x");
    target_ = g_.input("y");
    NodeId a = g_.relu(g_.dense(x_, g_.parameter("fc0.weight", he(h, 1)), g_.parameter("fc0.bias", Tensor::zeros({h}))));
    a = g_.relu(g_.dense(a, g_.parameter("fc1.weight", he(h, h)), g_.parameter("fc1.bias", Tensor::zeros({h}))));
    a = g_.dropout2d(a, dropout_p, "dropout");
    out_ = g_.dense(a, g_.parameter("fc2.weight", he(1, h)), g_.parameter("fc2.bias", Tensor::zeros({1})), "y_hat");
    loss_ = g_.mse_loss(out_, target_, "mse");
  }

  float scale_x(double x) const {
    return static_cast<float>(2.0 * (x - cfg_.x_min) / (cfg_.x_max - cfg_.x_min) - 1.0);
  }

  /// `iterations` Adam steps on mini-batches drawn by walking reshuffled
  /// epochs of the training set; the order comes from `shuffle_seed`.
  std::vector<float> fit(const std::vector<double>& xs, const std::vector<double>& ys, std::uint64_t shuffle_seed) {
    AdamConfig ac;
    ac.lr = cfg_.lr;
    AdamState opt(ac);
    auto params = g_.trainable_parameters();
    opt.allocate(params);
    g_.set_dropout_mode(DropoutMode::Train);
    std::vector<std::size_t> order(xs.size());
    std::size_t pos = order.size(), epoch = 0;
    std::vector<float> losses;
    for (std::size_t it = 0; it < cfg_.iterations; ++it) {
      const std::size_t count = std::min(cfg_.batch_size, xs.size());
      Tensor bx = Tensor::zeros({count, 1}), by = Tensor::zeros({count, 1});
      std::vector<std::uint64_t> seeds(count);
      for (std::size_t k = 0; k < count; ++k) {
        if (pos == order.size()) {
          std::iota(order.begin(), order.end(), std::size_t{0});
          CounterRng rng(mix_seed(shuffle_seed, epoch++));
          shuffle(std::span<std::size_t>(order), rng);
          pos = 0;
        }
        const std::size_t idx = order[pos++];
        bx.data[k] = scale_x(xs[idx]);
        by.data[k] = static_cast<float>(ys[idx]);
        seeds[k] = mix_seed(mix_seed(shuffle_seed ^ 0xD50ULL, it), k);
      }
      g_.set_sample_seeds(std::move(seeds));
      const NodeId t[] = {loss_};
      g_.forward({{"x", std::move(bx)}, {"y", std::move(by)}}, t);
      g_.backward(loss_);
      adam_step(params, opt);
      losses.push_back(g_.value(loss_).data[0]);
    }
    g_.clear_sample_seeds();
    g_.set_dropout_mode(DropoutMode::Off);
    return losses;
  }

  /// Predictions at xs; in McEval mode every point shares the mask drawn from
  /// `pass_seed`, so one call samples one network.
  std::vector<double> predict(const std::vector<double>& xs, DropoutMode mode, std::uint64_t pass_seed = 0) {
    Tensor bx = Tensor::zeros({xs.size(), 1});
    for (std::size_t k = 0; k < xs.size(); ++k) bx.data[k] = scale_x(xs[k]);
    g_.set_dropout_mode(mode);
    if (mode == DropoutMode::McEval) {
      g_.set_sample_seeds(std::vector<std::uint64_t>(xs.size(), pass_seed));
    } else {
      g_.clear_sample_seeds();
    }
    const NodeId t[] = {out_};
    g_.forward({{"x", std::move(bx)}}, t);
    const auto& v = g_.value(out_).data;
    g_.clear_sample_seeds();
    g_.set_dropout_mode(DropoutMode::Off);
    return {v.begin(), v.end()};
  }

 private:
  Demo1DConfig cfg_;
  Graph g_;
  NodeId x_ = 0, target_ = 0, out_ = 0, loss_ = 0;
};

struct EnvelopeResult {
  std::string method;
  std::vector<double> xs, mean, std;

  double rmse_against(const std::vector<double>& truth) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) acc += (mean[i] - truth[i]) * (mean[i] - truth[i]);
    return std::sqrt(acc / static_cast<double>(mean.size()));
  }
};

namespace demo_detail {

// Column statistics over samples[k][i], per point i, order-independent.
inline void envelope_from(const std::vector<std::vector<double>>& samples, EnvelopeResult& out) {
  const std::size_t n = samples.front().size();
  out.mean.assign(n, 0.0);
  out.std.assign(n, 0.0);
  std::vector<double> col(samples.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < samples.size(); ++k) col[k] = samples[k][i];
    const auto [mean, sd] = uq_detail::mean_std_sorted(col);
    out.mean[i] = mean;
    out.std[i] = sd;
  }
}

}  // namespace demo_detail

struct Demo1DResult {
  Demo1DData data;
  EnvelopeResult mc;
  EnvelopeResult ensemble;
  double mc_rmse = 0;
  double ensemble_rmse = 0;
  double mc_curvature_r = 0;  // pearson(|f''(x)|, MC std) over the test grid; diagnostic only
};

/// MC-Dropout model seeded from mix_seed(seed, 2); ensemble member k from
/// mix_seed(seed, 1000 + k) for both weights and data order. MC pass i uses
/// mix_seed(mix_seed(seed, 3), i).
inline Demo1DResult run_demo(const Demo1DConfig& cfg) {
  cfg.validate();
  Demo1DResult r;
  r.data = make_synthetic(cfg);
  const auto& d = r.data;

  DemoMlp mc(cfg, cfg.dropout_p, mix_seed(cfg.seed, 2));
  mc.fit(d.train_x, d.train_y, mix_seed(cfg.seed, 2));
  std::vector<std::vector<double>> passes;
  const std::uint64_t mc_seed = mix_seed(cfg.seed, 3);
  for (std::size_t i = 0; i < cfg.m; ++i) {
    passes.push_back(mc.predict(d.test_x, cfg.dropout_p > 0.0f ? DropoutMode::McEval : DropoutMode::Off,
                                mix_seed(mc_seed, i)));
  }
  r.mc.method = "mc_dropout";
  r.mc.xs = d.test_x;
  demo_detail::envelope_from(passes, r.mc);

  std::vector<std::vector<double>> members;
  for (std::size_t k = 0; k < cfg.ensemble_size; ++k) {
    const std::uint64_t s = mix_seed(cfg.seed, 1000 + k);
    DemoMlp net(cfg, 0.0f, s);
    net.fit(d.train_x, d.train_y, s);
    members.push_back(net.predict(d.test_x, DropoutMode::Off));
  }
  r.ensemble.method = "ensemble";
  r.ensemble.xs = d.test_x;
  demo_detail::envelope_from(members, r.ensemble);

  r.mc_rmse = r.mc.rmse_against(d.test_y);
  r.ensemble_rmse = r.ensemble.rmse_against(d.test_y);
  std::vector<double> curv;
  for (double x : d.test_x) curv.push_back(std::abs(demo_target_curvature(x)));
  try {
    r.mc_curvature_r = pearson(curv, r.mc.std);
  } catch (const InvalidArgument&) {
    r.mc_curvature_r = 0.0;
  }
  return r;
}

/// "x,mean,std,method" rows, values printed with %.9g.
inline std::string envelope_csv(const EnvelopeResult& e) {
  std::string out = "x,mean,std,method\n";
  char buf[128];
  for (std::size_t i = 0; i < e.xs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,", e.xs[i], e.mean[i], e.std[i]);
    out += buf;
    out += e.method;
    out += '\n';
  }
  return out;
}

inline std::string train_csv(const Demo1DData& d) {
  std::string out = "x,y\n";
  char buf[96];
  for (std::size_t i = 0; i < d.train_x.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", d.train_x[i], d.train_y[i]);
    out += buf;
  }
  return out;
}

/// Writes mc_dropout.csv, ensemble.csv, train.csv and summary.json into `dir`.
inline void write_demo_outputs(const std::filesystem::path& dir, const Demo1DConfig& cfg, const Demo1DResult& r) {
  write_text_atomic(dir / "mc_dropout.csv", envelope_csv(r.mc));
  write_text_atomic(dir / "ensemble.csv", envelope_csv(r.ensemble));
  write_text_atomic(dir / "train.csv", train_csv(r.data));
  nlohmann::json s{{"config", cfg.to_json()},
                   {"mc_rmse", r.mc_rmse},
                   {"ensemble_rmse", r.ensemble_rmse},
                   {"mc_curvature_r", r.mc_curvature_r}};
  write_text_atomic(dir / "summary.json", s.dump(1) + "\n");
}

}  // namespace viewuq
