// opindist: run estimation grids, rebuild report tables, inspect datasets.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "opindist/datasets.hpp"
#include "opindist/errors.hpp"
#include "opindist/harness.hpp"
#include "opindist/report_tables.hpp"
#include "opindist/run_config.hpp"

namespace fs = std::filesystem;
using namespace opindist;

namespace {

struct RunArgs {
  std::string config;
  std::string dataset;
  std::string data;
  std::string backend;
  std::string store;
  std::string model;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> backend_seed;
  std::optional<std::size_t> subset_n;
  std::string subset_ids;
  std::optional<std::size_t> workers;
  bool direct_fallback = false;
};

RunConfig build_config(const RunArgs& a) {
  RunConfig c;
  if (!a.config.empty()) {
    c = load_run_config(a.config);
  } else {
    c.grid = default_grid();
  }
  if (!a.dataset.empty()) c.dataset = a.dataset;
  if (!a.data.empty()) c.data_path = a.data;
  if (!a.backend.empty()) c.backend.kind = parse_backend_kind(a.backend);
  if (!a.store.empty()) c.backend.store = a.store;
  if (!a.model.empty()) c.backend.model_id = a.model;
  if (!a.out.empty()) c.out_dir = a.out;
  if (a.seed) c.seed = *a.seed;
  if (a.backend_seed) c.backend.synthetic.seed = *a.backend_seed;
  if (a.subset_n) c.subset_n = *a.subset_n;
  if (!a.subset_ids.empty()) c.subset_ids = a.subset_ids;
  if (a.workers) c.workers = *a.workers;
  if (a.direct_fallback) c.direct_uniform_fallback = true;
  if (c.data_path.empty()) throw ConfigError("no dataset path; pass --data or set \"data\" in the config");
  if (c.backend.kind == BackendKind::replay && !c.backend.store) {
    throw ConfigError("the replay backend needs --store");
  }
  return c;
}

void print_summary(std::span<const RunReport> reports) {
  std::vector<std::string> omitted;
  std::cout << emit_aggregate_table(reports, &omitted).to_text();
  const auto ece = emit_ece_table(reports);
  if (!ece.rows.empty()) std::cout << '\n' << ece.to_text();
  for (const auto& o : omitted) std::cout << "omitted (no scored rows): " << o << '\n';
  for (const auto& r : reports) {
    for (const auto& cell : r.cells) {
      if (cell.excluded.empty()) continue;
      std::cout << r.dataset << " / " << cell.label << ": " << cell.excluded.size() << " excluded ("
                << cell.count_excluded("all_invalid") << " all_invalid, " << cell.count_excluded("parse_failure")
                << " parse_failure, " << cell.count_excluded("backend_error") << " backend_error)\n";
    }
  }
}

int cmd_run(const RunArgs& args) {
  const auto config = build_config(args);
  const auto report = run_experiment(config);
  std::cout << "wrote " << config.out_dir.string() << '\n';
  print_summary(std::span<const RunReport>(&report, 1));
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out) {
  std::vector<RunReport> reports;
  for (const auto& r : runs) reports.push_back(read_report(r));
  if (!out.empty()) {
    if (reports.size() != 1) throw ConfigError("--out takes exactly one --run directory");
    write_report(reports.front(), out);
  }
  print_summary(reports);
  return 0;
}

int cmd_validate(const std::string& dataset, const std::string& data, const std::string& rejects) {
  const auto loaded = load_dataset(data, dataset_spec(dataset));
  std::cout << loaded.instances.size() << " valid, " << loaded.rejects.size() << " rejected\n";
  for (const auto& r : loaded.rejects) std::cout << "  " << r.id << ": " << r.reason << '\n';
  if (!rejects.empty()) write_rejects_report(rejects, loaded.rejects);
  return loaded.rejects.empty() ? 0 : 3;
}

int cmd_stats(const std::string& dataset, const std::string& data) {
  const auto& spec = dataset_spec(dataset);
  const auto loaded = load_dataset(data, spec);
  const auto stats = dataset_stats(loaded.instances);
  Table t;
  t.header = {"dataset", "items", "rejected", "full_agreement_pct"};
  char pct[32];
  std::snprintf(pct, sizeof pct, "%.2f", 100.0 * stats.full_agreement_fraction);
  t.rows.push_back({spec.display_name, std::to_string(stats.items), std::to_string(loaded.rejects.size()), pct});
  std::cout << t.to_text() << '\n';

  Table h;
  h.header = {"annotators", "items"};
  for (const auto& [annotators, count] : stats.annotator_histogram) {
    h.rows.push_back({std::to_string(annotators), std::to_string(count)});
  }
  std::cout << h.to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Opinion-distribution estimation for chat models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", OPINDIST_VERSION);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run an estimation grid and write a report directory");
  run_cmd->add_option("-c,--config", run.config, "JSON run config")->check(CLI::ExistingFile);
  run_cmd->add_option("--dataset", run.dataset, "HS-Brexit, ConvAbuse or MD-Agreement");
  run_cmd->add_option("--data", run.data, "Le-Wi-Di JSON file or directory");
  run_cmd->add_option("--backend", run.backend, "http, replay or synthetic")
      ->check(CLI::IsMember({"http", "replay", "synthetic"}));
  run_cmd->add_option("--store", run.store, "Replay store directory");
  run_cmd->add_option("--model", run.model, "Model id sent to the endpoint");
  run_cmd->add_option("-o,--out", run.out, "Output directory");
  run_cmd->add_option("--seed", run.seed, "Subset sampling seed");
  run_cmd->add_option("--backend-seed", run.backend_seed, "Synthetic backend seed");
  run_cmd->add_option("--subset-n", run.subset_n, "Subset size");
  run_cmd->add_option("--subset-ids", run.subset_ids, "File with one instance id per line")->check(CLI::ExistingFile);
  run_cmd->add_option("--workers", run.workers, "Concurrent instances per cell");
  run_cmd->add_flag("--direct-uniform-fallback", run.direct_fallback,
                    "Score unparseable direct replies as uniform instead of excluding them");

  std::vector<std::string> report_runs;
  std::string report_out;
  auto* report_cmd = app.add_subcommand("report", "Rebuild tables from run directories");
  report_cmd->add_option("--run", report_runs, "Run directory (repeatable)")->required()->check(CLI::ExistingDirectory);
  report_cmd->add_option("-o,--out", report_out, "Rewrite all report files into this directory");

  std::string dataset, data, rejects;
  auto* validate_cmd = app.add_subcommand("validate-data", "Load a dataset and list rejected records");
  validate_cmd->add_option("--dataset", dataset)->required();
  validate_cmd->add_option("--data", data)->required()->check(CLI::ExistingPath);
  validate_cmd->add_option("--rejects", rejects, "Write a JSON-lines rejects report here");

  auto* stats_cmd = app.add_subcommand("stats", "Item counts, annotator histogram and full agreement");
  stats_cmd->add_option("--dataset", dataset)->required();
  stats_cmd->add_option("--data", data)->required()->check(CLI::ExistingPath);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(run);
    if (*report_cmd) return cmd_report(report_runs, report_out);
    if (*validate_cmd) return cmd_validate(dataset, data, rejects);
    if (*stats_cmd) return cmd_stats(dataset, data);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const AuthFailure& e) {
    std::cerr << "authentication failed: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
