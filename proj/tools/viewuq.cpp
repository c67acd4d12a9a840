// viewuq: command-line driver for data generation, training, sweeps, studies,
// the 1-D demo and the query service.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "viewuq/viewuq.hpp"
#include "viewuq/service/http.hpp"

namespace {

using namespace viewuq;
namespace fs = std::filesystem;

struct ModelFlags {
  std::size_t resolution = 32;
  std::size_t blocks = 3;
  std::vector<std::size_t> fc = {64, 512};
  std::size_t base_channels = 64;
  std::size_t channel_floor = 16;

  void add(CLI::App* app) {
    app->add_option("--blocks", blocks, "residual upsampling blocks (resolution = 4 * 2^blocks)");
    app->add_option("--fc", fc, "fully connected widths before the latent layer");
    app->add_option("--base-channels", base_channels, "channels of the 4x4 latent grid");
    app->add_option("--channel-floor", channel_floor, "minimum channels per block");
  }
  ModelConfig config(std::size_t res, float dropout, std::uint64_t seed) const {
    ModelConfig c;
    c.image_resolution = res;
    c.n_res_blocks = blocks;
    c.fc_widths = fc;
    c.base_channels = base_channels;
    c.channel_floor = channel_floor;
    c.dropout_p = dropout;
    c.seed = seed;
    c.validate();
    return c;
  }
};

struct TrainFlags {
  std::size_t epochs = 1500;
  std::size_t batch = 64;
  float lr = 1e-4f;

  void add(CLI::App* app) {
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--batch", batch, "mini-batch size");
    app->add_option("--lr", lr, "Adam learning rate");
  }
  TrainConfig config(std::uint64_t seed) const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch;
    t.adam.lr = lr;
    t.seed = seed;
    return t;
  }
};

void log_epoch(const std::string& tag, std::size_t epoch, float loss, std::size_t total) {
  if (epoch == 0 || (epoch + 1) % 10 == 0 || epoch + 1 == total) {
    std::fprintf(stderr, "%s epoch %zu/%zu  mse %.6f\n", tag.c_str(), epoch + 1, total, static_cast<double>(loss));
  }
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) out.push_back(std::stoul(tok));
  return out;
}

std::vector<float> parse_floats(const std::string& s) {
  std::vector<float> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) out.push_back(std::stof(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"view-space uncertainty toolkit"};
  app.set_config("--config", "", "TOML/INI file with option values");
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  std::string out;
  app.add_option("--seed", seed, "root seed")->capture_default_str();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "render a view/image dataset");
  std::string volume_kind = "blobs", raw_path, raw_dtype = "f32", tf_id = "default";
  std::size_t dims = 64, n_views = 512, resolution = 32;
  gen->add_option("--volume", volume_kind, "builtin volume: blobs, shell, turbulence");
  gen->add_option("--raw", raw_path, "raw volume file instead of a builtin");
  gen->add_option("--dtype", raw_dtype, "raw element type: f32 or u8");
  gen->add_option("--dims", dims, "edge length of the cubic volume");
  gen->add_option("--views", n_views, "number of views");
  gen->add_option("--resolution", resolution, "image size in pixels");
  gen->add_option("--tf", tf_id, "transfer function id");
  gen->add_option("--volume-seed", seed, "seed for builtin volumes and view sampling");
  gen->add_option("--out", out, "output directory")->required();

  // train-mc / train-ensemble
  ModelFlags model_flags;
  TrainFlags train_flags;
  std::string data_dir;
  float dropout = 0.1f;
  auto* train_mc = app.add_subcommand("train-mc", "train one MC-Dropout model");
  train_mc->add_option("--data", data_dir, "dataset directory")->required();
  train_mc->add_option("--dropout", dropout, "channel dropout probability");
  train_mc->add_option("--out", out, "checkpoint path")->required();
  model_flags.add(train_mc);
  train_flags.add(train_mc);

  std::size_t members = 8;
  auto* train_ens = app.add_subcommand("train-ensemble", "train dropout-free ensemble members");
  train_ens->add_option("--data", data_dir, "dataset directory")->required();
  train_ens->add_option("--members", members, "ensemble size");
  train_ens->add_option("--out", out, "output directory")->required();
  model_flags.add(train_ens);
  train_flags.add(train_ens);

  // sweep
  std::string mc_path, ens_dir, grid_text = "36x18";
  std::size_t m = 50, sens_reps = 0;
  bool no_images = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "evaluate both methods over a view-space grid");
  sweep_cmd->add_option("--mc", mc_path, "MC-Dropout checkpoint")->required();
  sweep_cmd->add_option("--ensemble", ens_dir, "ensemble directory")->required();
  sweep_cmd->add_option("--data", data_dir, "dataset directory (volume and transfer function)")->required();
  sweep_cmd->add_option("--grid", grid_text, "grid as <n_theta>x<n_phi>");
  sweep_cmd->add_option("-m,--samples", m, "MC passes per view");
  sweep_cmd->add_option("--sensitivity-reps", sens_reps, "MC gradient passes per view (0: same as m)");
  sweep_cmd->add_flag("--no-images", no_images, "skip per-view PNG artifacts");
  sweep_cmd->add_option("--out", out, "sweep directory")->required();

  // study
  std::string axis = "eval", values_text, test_dir;
  std::vector<std::string> model_paths;
  std::string no_dropout_path;
  auto* study = app.add_subcommand("study", "evaluation table, correlations and parameter studies");
  study->add_option("--kind", axis, "eval, correlation, mc_samples, ensemble_size or dropout_p");
  study->add_option("--test", test_dir, "test dataset directory");
  study->add_option("--mc", mc_path, "MC-Dropout checkpoint");
  study->add_option("--ensemble", ens_dir, "ensemble directory");
  study->add_option("--no-dropout", no_dropout_path, "dropout-free checkpoint for the eval table");
  study->add_option("--models", model_paths, "one checkpoint per dropout_p value");
  study->add_option("--values", values_text, "comma-separated ascending axis values");
  study->add_option("--sweep", data_dir, "sweep directory (correlation)");
  study->add_option("-m,--samples", m, "MC passes per view");
  study->add_option("--out", out, "output JSON path")->required();

  // demo1d
  Demo1DConfig demo;
  auto* demo_cmd = app.add_subcommand("demo1d", "1-D regression demonstration");
  demo_cmd->add_option("--iterations", demo.iterations);
  demo_cmd->add_option("-m,--samples", demo.m);
  demo_cmd->add_option("--members", demo.ensemble_size);
  demo_cmd->add_option("--dropout", demo.dropout_p);
  demo_cmd->add_option("--noise", demo.noise_sigma);
  demo_cmd->add_option("--out", out, "output directory")->required();

  // export-heatmaps
  auto* heat = app.add_subcommand("export-heatmaps", "write heatmap blobs and PNGs of a completed sweep");
  heat->add_option("--sweep", data_dir, "sweep directory")->required();

  // serve
  std::vector<std::string> datasets;
  std::string demo_dir, static_dir, service_json, host = "127.0.0.1";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "read-only query API over completed sweeps");
  serve_cmd->add_option("--dataset", datasets, "id=sweep_dir (repeatable)");
  serve_cmd->add_option("--service-config", service_json, "JSON service configuration");
  serve_cmd->add_option("--demo1d", demo_dir, "1-D demo output directory");
  serve_cmd->add_option("--static", static_dir, "UI bundle directory");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port, "port (VIEWUQ_PORT overrides)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      VolumeSource src;
      src.dims = {dims, dims, dims};
      if (!raw_path.empty()) {
        src.raw = true;
        src.path = raw_path;
        src.dtype = raw_dtype_from_string(raw_dtype);
      } else {
        src.kind = volume_kind_from_string(volume_kind);
        src.seed = seed;
      }
      const Dataset ds = generate_dataset(src, tf_id, n_views, resolution, seed);
      save_dataset(out, ds);
      std::printf("wrote %zu views of %s to %s\n", ds.size(), src.id().c_str(), out.c_str());
    } else if (*train_mc) {
      const Dataset ds = load_dataset(data_dir);
      SynthesisModel model(model_flags.config(ds.resolution, dropout, seed));
      const TrainConfig tc = train_flags.config(seed);
      const auto res = train(model, ds, tc, [&](std::size_t e, float l) { log_epoch("mc", e, l, tc.epochs); });
      save_checkpoint(out, model, {tc.epochs, res.loss_history.back(), ds.seed, seed}, &res.optimizer);
      std::printf("wrote %s (final mse %.6f)\n", out.c_str(), static_cast<double>(res.loss_history.back()));
    } else if (*train_ens) {
      const Dataset ds = load_dataset(data_dir);
      EnsembleTrainOptions opts;
      opts.model = model_flags.config(ds.resolution, 0.0f, seed);
      opts.train = train_flags.config(seed);
      opts.root_seed = seed;
      opts.members = members;
      train_ensemble(out, ds, opts, [&](std::size_t k, std::size_t e, float l) {
        log_epoch("member " + std::to_string(k), e, l, opts.train.epochs);
      });
      std::printf("wrote %zu members to %s\n", members, out.c_str());
    } else if (*sweep_cmd) {
      const Dataset ds = load_dataset(data_dir);
      LoadedCheckpoint mc = load_checkpoint(mc_path);
      EnsembleSet ens = load_ensemble(ens_dir);
      SweepConfig cfg;
      cfg.grid = GridSpec::parse(grid_text);
      cfg.m = m;
      cfg.seed = seed;
      cfg.sensitivity_reps = sens_reps;
      cfg.write_images = !no_images;
      const SweepInputs in{&mc.model, &ens, ds.volume, ds.tf_id};
      const auto r = run_sweep(out, in, cfg, [](const SweepProgress& p) {
        if (p.done % 18 == 0 || p.done == p.total) std::fprintf(stderr, "cell %zu/%zu\n", p.done, p.total);
      });
      if (r.already_complete) {
        std::printf("%s is already complete\n", out.c_str());
      } else {
        export_all_heatmaps(load_sweep(out));
        std::printf("sweep done: %zu computed, %zu resumed\n", r.computed, r.reused);
      }
    } else if (*study) {
      nlohmann::json result;
      if (axis == "correlation") {
        const LoadedSweep s = load_sweep(data_dir);
        if (!s.complete) throw InvalidArgument(data_dir + ": sweep is not complete");
        result = correlation_report(s.records).to_json();
      } else {
        if (test_dir.empty()) throw InvalidArgument("--test is required for --kind " + axis);
        const Dataset test = load_dataset(test_dir);
        if (axis == "eval") {
          LoadedCheckpoint mc = load_checkpoint(mc_path);
          EnsembleSet ens = load_ensemble(ens_dir);
          std::optional<LoadedCheckpoint> nd;
          if (!no_dropout_path.empty()) nd = load_checkpoint(no_dropout_path);
          result = evaluation_table(nd ? &nd->model : nullptr, mc.model, ens, test, m, seed).to_json();
        } else if (axis == "mc_samples") {
          LoadedCheckpoint mc = load_checkpoint(mc_path);
          result = mc_samples_study(mc.model, test, parse_sizes(values_text), seed).to_json();
        } else if (axis == "ensemble_size") {
          EnsembleSet ens = load_ensemble(ens_dir);
          result = ensemble_size_study(ens, test, parse_sizes(values_text)).to_json();
        } else if (axis == "dropout_p") {
          std::vector<LoadedCheckpoint> cks;
          for (const auto& p : model_paths) cks.push_back(load_checkpoint(p));
          std::vector<SynthesisModel*> ptrs;
          for (auto& c : cks) ptrs.push_back(&c.model);
          result = dropout_p_study(ptrs, test, parse_floats(values_text), m, seed).to_json();
        } else {
          throw InvalidArgument("unknown study kind '" + axis + "'");
        }
      }
      write_text_atomic(out, result.dump(1) + "\n");
      std::printf("%s\n", result.dump(1).c_str());
    } else if (*demo_cmd) {
      demo.seed = seed;
      const auto r = run_demo(demo);
      write_demo_outputs(out, demo, r);
      std::printf("mc rmse %.4f, ensemble rmse %.4f, curvature r %.3f\n", r.mc_rmse, r.ensemble_rmse, r.mc_curvature_r);
    } else if (*heat) {
      const auto files = export_all_heatmaps(load_sweep(data_dir));
      std::printf("wrote %zu heatmaps\n", files.size());
    } else if (*serve_cmd) {
      ServiceConfig cfg;
      if (!service_json.empty()) cfg = ServiceConfig::from_json(nlohmann::json::parse(read_text_file(service_json)));
      for (const auto& d : datasets) {
        const auto eq = d.find('=');
        if (eq == std::string::npos) throw InvalidArgument("--dataset expects id=dir, got '" + d + "'");
        cfg.datasets[d.substr(0, eq)] = d.substr(eq + 1);
      }
      if (!demo_dir.empty()) cfg.demo1d_dir = demo_dir;
      if (!static_dir.empty()) cfg.static_dir = static_dir;
      if (serve_cmd->count("--host")) cfg.host = host;
      if (serve_cmd->count("--port")) cfg.port = port;
      QueryService service(cfg);
      std::fprintf(stderr, "listening on %s:%d\n", cfg.host.c_str(), service_port(cfg));
      serve(service);
    }
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
  return 0;
}
