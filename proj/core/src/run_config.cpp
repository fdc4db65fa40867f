#include "opindist/run_config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <json.hpp>

#include "opindist/errors.hpp"

namespace opindist {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(BackendKind kind) noexcept {
  switch (kind) {
    case BackendKind::http: return "http";
    case BackendKind::replay: return "replay";
    case BackendKind::synthetic: return "synthetic";
  }
  return "unknown";
}

BackendKind parse_backend_kind(std::string_view text) {
  if (text == "http") return BackendKind::http;
  if (text == "replay") return BackendKind::replay;
  if (text == "synthetic") return BackendKind::synthetic;
  throw ConfigError("unknown backend '" + std::string(text) + "'");
}

void RunConfig::validate() const {
  if (grid.empty()) {
    throw ConfigError("estimator grid is empty");
  }
  std::set<std::string> labels;
  for (const auto& cell : grid) {
    cell.validate();
    if (!labels.insert(cell.label()).second) {
      throw ConfigError("duplicate grid cell '" + cell.label() + "'");
    }
  }
  if (subset_n == 0 && !subset_ids) throw ConfigError("subset size must be >= 1");
  if (workers == 0) throw ConfigError("workers must be >= 1");
  if (!(abort_failure_fraction >= 0.0 && abort_failure_fraction <= 1.0)) {
    throw ConfigError("abort_failure_fraction must lie in [0, 1]");
  }
  if (!(metrics.ce_epsilon > 0.0 && metrics.ce_epsilon < 1.0)) throw ConfigError("ce_epsilon must lie in (0, 1)");
  if (metrics.ece_bins == 0) throw ConfigError("ece_bins must be >= 1");
  if (backend.kind == BackendKind::replay && !backend.store) {
    throw ConfigError("replay backend needs a store directory");
  }
  if (backend.kind == BackendKind::synthetic && backend.synthetic.profile != "human" &&
      backend.synthetic.profile != "fixed") {
    throw ConfigError("synthetic profile must be 'human' or 'fixed'");
  }
  if (backend.kind == BackendKind::synthetic && backend.synthetic.profile == "fixed" &&
      backend.synthetic.dist.size() < 2) {
    throw ConfigError("fixed synthetic profile needs a distribution");
  }
  if (backend.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (prompt_role != "user" && prompt_role != "system") throw ConfigError("prompt_role must be 'user' or 'system'");
}

std::vector<EstimatorConfig> default_grid() {
  std::vector<EstimatorConfig> grid;
  EstimatorConfig direct;
  direct.method = Method::direct;
  direct.temperature = 1.0;
  grid.push_back(direct);
  for (double t : {kTemperatureHigh, kTemperatureMedium, kTemperatureNearZero}) {
    for (Method m : {Method::mce, Method::lpe}) {
      EstimatorConfig c;
      c.method = m;
      c.temperature = t;
      grid.push_back(c);
    }
  }
  return grid;
}

namespace {

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) {
    throw ConfigError(where + " must be a JSON object");
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (auto a : allowed) known = known || it.key() == a;
    if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end() && !it->is_null()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return (path.is_relative() && !base.empty()) ? base / path : path;
}

EstimatorConfig parse_cell(const json& j) {
  reject_unknown(j,
                 {"method", "iterations", "temperature", "top_p", "top_k_logprobs", "seed", "max_tokens",
                  "direct_max_tokens", "direct_samples"},
                 "grid cell");
  EstimatorConfig c;
  std::string method = "mce";
  read(j, "method", method);
  c.method = parse_method(method);
  read(j, "iterations", c.iterations);
  read(j, "temperature", c.temperature);
  read(j, "top_p", c.top_p);
  read(j, "top_k_logprobs", c.top_k_logprobs);
  if (j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<std::uint64_t>();
  read(j, "max_tokens", c.max_tokens);
  read(j, "direct_max_tokens", c.direct_max_tokens);
  read(j, "direct_samples", c.direct_samples);
  return c;
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j,
                 {"dataset", "data", "grid", "subset", "backend", "out", "metrics", "workers",
                  "abort_failure_fraction", "direct_uniform_fallback", "prompt_role"},
                 "config");
  RunConfig c;
  read(j, "dataset", c.dataset);
  if (auto it = j.find("data"); it != j.end()) c.data_path = resolve(base_dir, it->get<std::string>());
  if (auto it = j.find("out"); it != j.end()) c.out_dir = resolve(base_dir, it->get<std::string>());
  read(j, "workers", c.workers);
  read(j, "abort_failure_fraction", c.abort_failure_fraction);
  read(j, "direct_uniform_fallback", c.direct_uniform_fallback);
  read(j, "prompt_role", c.prompt_role);

  if (auto it = j.find("grid"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("grid must be an array");
    for (const auto& cell : *it) c.grid.push_back(parse_cell(cell));
  } else {
    c.grid = default_grid();
  }

  if (auto it = j.find("subset"); it != j.end()) {
    reject_unknown(*it, {"n", "seed", "ids"}, "subset");
    read(*it, "n", c.subset_n);
    read(*it, "seed", c.seed);
    if (it->contains("ids") && !(*it)["ids"].is_null()) c.subset_ids = resolve(base_dir, (*it)["ids"].get<std::string>());
  }

  if (auto it = j.find("metrics"); it != j.end()) {
    reject_unknown(*it, {"ce_epsilon", "jsd_base", "ece_bins"}, "metrics");
    read(*it, "ce_epsilon", c.metrics.ce_epsilon);
    read(*it, "ece_bins", c.metrics.ece_bins);
    if (it->contains("jsd_base")) c.metrics.jsd_base = parse_log_base((*it)["jsd_base"].get<std::string>());
  }

  if (auto it = j.find("backend"); it != j.end()) {
    reject_unknown(*it,
                   {"kind", "model", "store", "base_url", "path", "requests_per_minute", "max_attempts", "synthetic"},
                   "backend");
    auto& b = c.backend;
    if (it->contains("kind")) b.kind = parse_backend_kind((*it)["kind"].get<std::string>());
    read(*it, "model", b.model_id);
    if (it->contains("store") && !(*it)["store"].is_null()) b.store = resolve(base_dir, (*it)["store"].get<std::string>());
    read(*it, "base_url", b.base_url);
    read(*it, "path", b.path);
    read(*it, "requests_per_minute", b.requests_per_minute);
    read(*it, "max_attempts", b.max_attempts);
    if (auto s = it->find("synthetic"); s != it->end()) {
      reject_unknown(*s, {"profile", "dist", "seed"}, "backend.synthetic");
      read(*s, "profile", b.synthetic.profile);
      read(*s, "dist", b.synthetic.dist);
      read(*s, "seed", b.synthetic.seed);
    }
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot read config " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

std::string run_config_to_json(const RunConfig& c) {
  ordered_json grid = ordered_json::array();
  for (const auto& cell : c.grid) {
    ordered_json g{
        {"label", cell.label()},
        {"method", std::string(to_string(cell.method))},
        {"iterations", cell.iterations},
        {"temperature", cell.temperature},
        {"top_p", cell.top_p},
        {"top_k_logprobs", cell.top_k_logprobs},
        {"seed", cell.seed ? ordered_json(*cell.seed) : ordered_json(nullptr)},
        {"max_tokens", cell.max_tokens},
        {"direct_max_tokens", cell.direct_max_tokens},
        {"direct_samples", cell.direct_samples},
    };
    grid.push_back(std::move(g));
  }
  // Paths are reduced to file names so the echo is machine-independent.
  ordered_json j{
      {"dataset", c.dataset},
      {"data", c.data_path.filename().string()},
      {"grid", std::move(grid)},
      {"subset",
       {{"n", c.subset_n},
        {"seed", c.seed},
        {"ids", c.subset_ids ? ordered_json(c.subset_ids->filename().string()) : ordered_json(nullptr)}}},
      {"backend",
       {{"kind", std::string(to_string(c.backend.kind))},
        {"model", c.backend.model_id},
        {"base_url", c.backend.kind == BackendKind::http ? ordered_json(c.backend.base_url) : ordered_json(nullptr)},
        {"requests_per_minute", c.backend.requests_per_minute},
        {"max_attempts", c.backend.max_attempts},
        {"synthetic",
         c.backend.kind == BackendKind::synthetic
             ? ordered_json{{"profile", c.backend.synthetic.profile},
                            {"dist", c.backend.synthetic.dist},
                            {"seed", c.backend.synthetic.seed}}
             : ordered_json(nullptr)}}},
      {"metrics",
       {{"ce_epsilon", c.metrics.ce_epsilon},
        {"jsd_base", std::string(to_string(c.metrics.jsd_base))},
        {"ece_bins", c.metrics.ece_bins}}},
      {"workers", c.workers},
      {"abort_failure_fraction", c.abort_failure_fraction},
      {"direct_uniform_fallback", c.direct_uniform_fallback},
      {"prompt_role", c.prompt_role},
  };
  return j.dump(2);
}

}  // namespace opindist
