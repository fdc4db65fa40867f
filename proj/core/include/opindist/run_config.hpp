#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "opindist/estimators.hpp"
#include "opindist/metrics.hpp"

namespace opindist {

enum class BackendKind { http, replay, synthetic };

std::string_view to_string(BackendKind kind) noexcept;
BackendKind parse_backend_kind(std::string_view text);

struct SyntheticOptions {
  // "human": base distribution = the instance's human soft label.
  // "fixed": every instance uses `dist`.
  std::string profile = "human";
  std::vector<double> dist;
  std::uint64_t seed = 0;
};

struct BackendConfig {
  BackendKind kind = BackendKind::synthetic;
  std::string model_id = "gpt-3.5-turbo";
  // Replay store directory. Required for replay; when set for http the
  // exchanges are recorded there and reused on later runs.
  std::optional<std::filesystem::path> store;
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::uint32_t requests_per_minute = 60;
  int max_attempts = 5;
  SyntheticOptions synthetic;
};

struct RunConfig {
  std::string dataset = "HS-Brexit";
  std::filesystem::path data_path;
  std::vector<EstimatorConfig> grid;
  std::size_t subset_n = 101;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> subset_ids;
  BackendConfig backend;
  std::filesystem::path out_dir = "out";
  MetricOptions metrics;
  std::size_t workers = 4;
  // A cell aborts the run when more than this fraction of its instances
  // fail in the backend.
  double abort_failure_fraction = 0.2;
  // Score unparseable direct replies as uniform instead of excluding them.
  bool direct_uniform_fallback = false;
  std::string prompt_role = "user";

  /// Throws ConfigError on an empty grid, duplicate cell labels or
  /// out-of-range options.
  void validate() const;
};

/// Direct at T=1, then MC and LP at T = 2, 0.8 and 1e-6 with M=10, k=10.
std::vector<EstimatorConfig> default_grid();

/// Parses the JSON config format; unknown keys are rejected. Relative paths
/// are resolved against `base_dir`.
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON echo of the config, as stored in the manifest.
std::string run_config_to_json(const RunConfig& config);

}  // namespace opindist
