#pragma once

#include <cstdlib>
#include <string>

// Eigen must come before httplib: <resolv.h> defines a _res macro.
#include "viewuq/service/service.hpp"

#include "httplib.h"

namespace viewuq {

/// Port from VIEWUQ_PORT when set, else the configured one.
inline int service_port(const ServiceConfig& cfg) {
  if (const char* env = std::getenv("VIEWUQ_PORT"); env && *env) {
    const int p = std::atoi(env);
    if (p <= 0 || p > 65535) throw InvalidArgument(std::string("VIEWUQ_PORT is not a valid port: ") + env);
    return p;
  }
  return cfg.port;
}

inline void install_routes(httplib::Server& server, QueryService& service) {
  const auto adapt = [&service](const char* method) {
    return [&service, method](const httplib::Request& req, httplib::Response& res) {
      QueryParams params(req.params.begin(), req.params.end());
      const Response r = service.handle(method, req.path, params, req.body);
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
  };
  for (const char* route : {"/datasets", "/heatmap", "/view", "/pcp", "/sensitivity", "/demo1d", "/artifacts/.*"}) {
    server.Get(route, adapt("GET"));
  }
  server.Post("/select", adapt("POST"));
}

/// Blocks until the server stops.
inline void serve(QueryService& service) {
  httplib::Server server;
  install_routes(server, service);
  const auto& cfg = service.config();
  if (!cfg.static_dir.empty() && !server.set_mount_point("/", cfg.static_dir.string())) {
    throw InvalidArgument("static path " + cfg.static_dir.string() + " does not exist");
  }
  const int port = service_port(cfg);
  if (!server.listen(cfg.host, port)) {
    throw IoError("could not listen on " + cfg.host + ":" + std::to_string(port));
  }
}

}  // namespace viewuq
