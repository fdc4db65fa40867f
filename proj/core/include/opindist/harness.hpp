#pragma once

// Experiment orchestration: runs every estimator cell of a RunConfig over a
// dataset subset, scores the estimates against the human soft labels and
// persists rows, aggregate tables, figure data and a manifest.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opindist/backend.hpp"
#include "opindist/core.hpp"
#include "opindist/datasets.hpp"
#include "opindist/estimators.hpp"
#include "opindist/metrics.hpp"
#include "opindist/run_config.hpp"

namespace opindist {

struct InstanceRow {
  std::string id;
  OpinionDistribution human;
  OpinionDistribution model;
  int iterations = 0;
  int valid_iterations = 0;
  std::size_t invalid_samples = 0;
  // The direct reply could not be parsed and the uniform fallback was used.
  bool fallback = false;
  InstanceMetrics metrics;
};

struct Exclusion {
  std::string id;
  std::string kind;  // "all_invalid", "parse_failure" or "backend_error"
  std::string detail;
};

struct CellReport {
  std::string label;
  EstimatorConfig config;
  std::vector<InstanceRow> rows;  // sorted by id
  std::vector<Exclusion> excluded;
  std::optional<AggregateMetrics> aggregate;
  std::optional<double> ece;  // mce cells only

  std::size_t count_excluded(std::string_view kind) const;
};

struct SubsetEntry {
  std::string id;
  OpinionDistribution human;
};

struct RunReport {
  std::string dataset;
  std::vector<SubsetEntry> subset;  // sorted by id
  std::vector<CellReport> cells;    // grid order
  MetricOptions metrics;
  std::string config_json;
  std::string backend_description;
};

/// Builds the backend named by the config. `subset` feeds the synthetic
/// "human" profile.
std::shared_ptr<CompletionBackend> make_backend(const BackendConfig& config,
                                                std::span<const AnnotatedInstance> subset);

/// Loads the dataset, selects the subset (id list or stratified sample) and
/// validates the config.
std::vector<AnnotatedInstance> prepare_subset(const RunConfig& config);

/// Runs every grid cell over `subset`. Instances whose estimate is invalid
/// are excluded from aggregates and tallied per cell. Throws RunAborted when
/// backend failures exceed config.abort_failure_fraction in a cell.
RunReport run_grid(std::span<const AnnotatedInstance> subset, const DatasetSpec& spec, const RunConfig& config,
                   CompletionBackend& backend);

/// prepare_subset + make_backend + run_grid + write_report(config.out_dir).
RunReport run_experiment(const RunConfig& config);

/// Recomputes aggregates and ECE from the rows.
void recompute_summaries(RunReport& report);

/// Writes rows.jsonl, aggregates.csv, ece.csv, entropy_hist.csv,
/// entropy_scatter.csv, l1_by_entropy.csv, boxplot.csv and manifest.json.
/// Each file is written to a temporary name and renamed into place.
void write_report(const RunReport& report, const std::filesystem::path& out_dir);

/// Rebuilds a report from a directory produced by write_report.
RunReport read_report(const std::filesystem::path& dir);

}  // namespace opindist
