#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewuq/core/binary_io.hpp"
#include "viewuq/core/error.hpp"
#include "viewuq/sweep/heatmap.hpp"
#include "viewuq/sweep/sweep.hpp"

namespace viewuq {

struct ServiceConfig {
  std::map<std::string, std::filesystem::path> datasets;  // id -> sweep directory
  std::filesystem::path demo1d_dir;                       // optional
  std::filesystem::path static_dir;                       // optional UI bundle
  std::string host = "127.0.0.1";
  int port = 8080;

  /// {"datasets": {"id": "dir", ...}, "demo1d": "dir", "static": "dir", "host": ..., "port": ...}
  static ServiceConfig from_json(const nlohmann::json& j) {
    ServiceConfig c;
    for (const auto& [id, dir] : j.at("datasets").items()) c.datasets[id] = dir.get<std::string>();
    c.demo1d_dir = j.value("demo1d", std::string());
    c.static_dir = j.value("static", std::string());
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    return c;
  }
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  nlohmann::json json() const { return nlohmann::json::parse(body); }
};

using QueryParams = std::multimap<std::string, std::string>;

/// PCP axis order.
inline const std::vector<std::string>& pcp_axes() {
  static const std::vector<std::string> axes{"mc_uncertainty", "mc_error", "mc_error_std",
                                             "ens_uncertainty", "ens_error", "ens_error_std"};
  return axes;
}

inline std::array<float, 6> pcp_tuple(const SweepRecord& r) {
  return {r.mc.uncertainty, r.mc.error, r.mc.error_std, r.ens.uncertainty, r.ens.error, r.ens.error_std};
}

inline nlohmann::json record_json(const SweepRecord& r) {
  const auto names = record_fields();
  const auto values = record_to_floats(r);
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t k = 0; k < names.size(); ++k) j[names[k]] = values[k];
  return j;
}

/// Read-only request handler over completed sweep directories. handle() is
/// a pure function of the artifacts on disk; serve() puts it behind HTTP.
class QueryService {
 public:
  explicit QueryService(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    for (const auto& [id, dir] : cfg_.datasets) {
      if (!std::filesystem::exists(dir / "manifest.json")) {
        throw InvalidArgument("dataset '" + id + "': " + dir.string() + " has no manifest.json");
      }
      load_sweep(dir);
    }
  }

  const ServiceConfig& config() const { return cfg_; }

  Response handle(const std::string& method, const std::string& path, const QueryParams& params = {},
                  const std::string& body = {}) {
    try {
      if (method == "GET" && path == "/datasets") return datasets();
      if (method == "GET" && path == "/heatmap") return heatmap(params);
      if (method == "GET" && path == "/view") return view(params);
      if (method == "POST" && path == "/select") return select(body);
      if (method == "GET" && path == "/pcp") return pcp(params);
      if (method == "GET" && path == "/sensitivity") return sensitivity_grid(params);
      if (method == "GET" && path == "/demo1d") return demo1d();
      if (method == "GET" && path.rfind("/artifacts/", 0) == 0) return artifact(path);
      return error(404, "no route for " + method + " " + path);
    } catch (const HttpError& e) {
      return error(e.status, e.what());
    } catch (const InvalidArgument& e) {
      return error(400, e.what());
    } catch (const nlohmann::json::exception& e) {
      return error(400, std::string("bad request body: ") + e.what());
    } catch (const std::exception& e) {
      return error(500, e.what());
    }
  }

 private:
  struct HttpError : Error {
    int status;
    HttpError(int s, const std::string& msg) : Error(msg), status(s) {}
  };

  static Response error(int status, const std::string& message) {
    nlohmann::json j{{"error", {{"status", status}, {"message", message}}}};
    return {status, "application/json", j.dump()};
  }
  static Response ok(const nlohmann::json& j) { return {200, "application/json", j.dump()}; }

  static std::string param(const QueryParams& p, const std::string& key) {
    const auto it = p.find(key);
    if (it == p.end() || it->second.empty()) throw InvalidArgument("missing query parameter '" + key + "'");
    return it->second;
  }
  static std::size_t index_param(const QueryParams& p, const std::string& key) {
    const std::string s = param(p, key);
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw InvalidArgument("query parameter '" + key + "' must be a nonnegative integer");
    }
    return std::stoul(s);
  }

  // Complete sweeps are immutable, so they are cached; incomplete ones are
  // re-read on every request.
  const LoadedSweep& sweep(const std::string& id) {
    const auto dir = cfg_.datasets.find(id);
    if (dir == cfg_.datasets.end()) throw HttpError(404, "unknown dataset '" + id + "'");
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(id);
    if (it == cache_.end() || !it->second.complete) {
      it = cache_.insert_or_assign(id, load_sweep(dir->second)).first;
    }
    if (!it->second.complete) throw HttpError(409, "sweep for dataset '" + id + "' is not complete");
    return it->second;
  }

  std::pair<std::size_t, std::size_t> cell_of(const LoadedSweep& s, std::size_t i, std::size_t j) const {
    if (!s.grid.contains(i, j)) {
      throw HttpError(404, "cell (" + std::to_string(i) + "," + std::to_string(j) + ") is outside the " +
                               std::to_string(s.grid.n_theta) + "x" + std::to_string(s.grid.n_phi) + " grid");
    }
    return {i, j};
  }

  Response datasets() {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [id, dir] : cfg_.datasets) {
      const LoadedSweep s = load_sweep(dir);
      const auto& f = s.manifest.at("fingerprint");
      list.push_back({{"id", id},
                      {"complete", s.complete},
                      {"grid", {{"n_theta", s.grid.n_theta}, {"n_phi", s.grid.n_phi}}},
                      {"volume_id", f.value("volume_id", "")},
                      {"tf_id", f.value("tf_id", "")},
                      {"resolution", f.value("resolution", 0)}});
    }
    return ok({{"datasets", list}});
  }

  static nlohmann::json grid_json(const std::string& id, const HeatmapGrid& h) {
    return {{"dataset", id},
            {"method", to_string(h.method)},
            {"quantity", to_string(h.quantity)},
            {"channel", to_string(h.channel)},
            {"n_theta", h.grid.n_theta},
            {"n_phi", h.grid.n_phi},
            {"layout", "row-major, phi-major: values[j * n_theta + i]"},
            {"values", h.values},
            {"min", h.min},
            {"max", h.max}};
  }

  Response heatmap(const QueryParams& p) {
    const std::string id = param(p, "dataset");
    const UqMethod m = uq_method_from_string(param(p, "method"));
    const Quantity q = quantity_from_string(param(p, "quantity"));
    const auto ch = p.find("channel");
    const Channel c = ch == p.end() ? Channel::Combined : channel_from_string(ch->second);
    return ok(grid_json(id, heatmap_grid(sweep(id), m, q, c)));
  }

  Response sensitivity_grid(const QueryParams& p) {
    const std::string id = param(p, "dataset");
    const UqMethod m = uq_method_from_string(param(p, "method"));
    const std::string stat = param(p, "stat");
    if (stat != "mean" && stat != "std") throw InvalidArgument("stat must be mean or std, got '" + stat + "'");
    const Quantity q = stat == "mean" ? Quantity::Sensitivity : Quantity::SensitivityStd;
    auto j = grid_json(id, heatmap_grid(sweep(id), m, q, Channel::Combined));
    j["stat"] = stat;
    return ok(j);
  }

  Response view(const QueryParams& p) {
    const std::string id = param(p, "dataset");
    const LoadedSweep& s = sweep(id);
    const auto [i, j] = cell_of(s, index_param(p, "i"), index_param(p, "j"));
    nlohmann::json images = nlohmann::json::object();
    if (s.has_images()) {
      const std::string base = "/artifacts/" + id + "/img/" + cell_dir_name(i, j) + "/";
      for (const auto& list : {s.manifest["images"]["maps"], s.manifest["images"]["channel_maps"]}) {
        for (const auto& name : list) images[name.get<std::string>()] = base + name.get<std::string>() + ".png";
      }
    }
    return ok({{"dataset", id},
               {"i", i},
               {"j", j},
               {"index", s.grid.index(i, j)},
               {"record", record_json(s.record(i, j))},
               {"images", images}});
  }

  Response select(const std::string& body) {
    const auto req = nlohmann::json::parse(body);
    const std::string id = req.at("dataset").get<std::string>();
    const LoadedSweep& s = sweep(id);
    std::vector<std::size_t> picked;
    for (const auto& c : req.at("cells")) {
      const auto [i, j] = cell_of(s, c.at(0).get<std::size_t>(), c.at(1).get<std::size_t>());
      const std::size_t idx = s.grid.index(i, j);
      if (std::find(picked.begin(), picked.end(), idx) == picked.end()) picked.push_back(idx);
    }
    // Highest MC combined uncertainty first; grid order breaks ties.
    std::sort(picked.begin(), picked.end(), [&](std::size_t a, std::size_t b) {
      const float ua = s.records[a].mc.uncertainty, ub = s.records[b].mc.uncertainty;
      return ua != ub ? ua > ub : a < b;
    });
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t idx : picked) {
      const auto [i, j] = s.grid.cell(idx);
      out.push_back({{"i", i}, {"j", j}, {"index", idx}, {"record", record_json(s.records[idx])}});
    }
    return ok({{"dataset", id}, {"ranked_by", "mc.uncertainty descending"}, {"records", out}});
  }

  Response pcp(const QueryParams& p) {
    const std::string id = param(p, "dataset");
    const LoadedSweep& s = sweep(id);
    nlohmann::json tuples = nlohmann::json::array();
    for (std::size_t idx = 0; idx < s.records.size(); ++idx) {
      const auto [i, j] = s.grid.cell(idx);
      tuples.push_back({{"i", i}, {"j", j}, {"values", pcp_tuple(s.records[idx])}});
    }
    return ok({{"dataset", id}, {"axes", pcp_axes()}, {"tuples", tuples}});
  }

  Response demo1d() {
    if (cfg_.demo1d_dir.empty()) throw HttpError(404, "no 1-D demo output configured");
    nlohmann::json out = nlohmann::json::object();
    for (const char* method : {"mc_dropout", "ensemble"}) {
      const auto path = cfg_.demo1d_dir / (std::string(method) + ".csv");
      if (!std::filesystem::exists(path)) throw HttpError(404, path.string() + " does not exist");
      const std::string text = read_text_file(path);
      nlohmann::json rows = nlohmann::json::array();
      std::size_t start = text.find('\n') + 1;
      while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        double x = 0, mean = 0, sd = 0;
        if (std::sscanf(text.c_str() + start, "%lf,%lf,%lf", &x, &mean, &sd) == 3) {
          rows.push_back({{"x", x}, {"mean", mean}, {"std", sd}});
        }
        start = end + 1;
      }
      out[method] = {{"csv", text}, {"rows", rows}};
    }
    return ok(out);
  }

  // /artifacts/{dataset}/{relative path inside the sweep directory}
  Response artifact(const std::string& path) {
    const std::string rest = path.substr(std::string("/artifacts/").size());
    const auto slash = rest.find('/');
    if (slash == std::string::npos) throw HttpError(404, "artifact path needs a dataset and a file");
    const std::string id = rest.substr(0, slash);
    const std::string rel = rest.substr(slash + 1);
    if (rel.empty() || rel.find("..") != std::string::npos || rel.front() == '/') {
      throw HttpError(404, "invalid artifact path");
    }
    const LoadedSweep& s = sweep(id);
    const auto file = s.dir / rel;
    if (!std::filesystem::is_regular_file(file)) throw HttpError(404, "no artifact " + rel + " in dataset " + id);
    const auto bytes = read_file_bytes(file);
    const std::string type = file.extension() == ".png"    ? "image/png"
                             : file.extension() == ".json" ? "application/json"
                                                           : "application/octet-stream";
    return {200, type, std::string(bytes.begin(), bytes.end())};
  }

  ServiceConfig cfg_;
  std::mutex mu_;
  std::map<std::string, LoadedSweep> cache_;
};

}  // namespace viewuq
