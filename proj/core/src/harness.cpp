#include "opindist/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "opindist/errors.hpp"
#include "opindist/http_backend.hpp"
#include "opindist/replay_store.hpp"
#include "opindist/report_tables.hpp"
#include "opindist/synthetic_backend.hpp"

#ifndef OPINDIST_VERSION
#define OPINDIST_VERSION "dev"
#endif

namespace opindist {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::size_t CellReport::count_excluded(std::string_view kind) const {
  return static_cast<std::size_t>(
      std::count_if(excluded.begin(), excluded.end(), [&](const Exclusion& e) { return e.kind == kind; }));
}

std::shared_ptr<CompletionBackend> make_backend(const BackendConfig& config,
                                                std::span<const AnnotatedInstance> subset) {
  switch (config.kind) {
    case BackendKind::replay:
      return std::make_shared<ReplayBackend>(std::make_shared<ReplayStore>(*config.store));
    case BackendKind::http: {
      HttpBackendConfig http;
      http.base_url = config.base_url;
      http.path = config.path;
      http.api_key = api_key_from_env();
      http.requests_per_minute = config.requests_per_minute;
      http.backoff.max_attempts = config.max_attempts;
      auto upstream = std::make_shared<HttpBackend>(std::move(http));
      if (config.store) {
        return std::make_shared<RecordingBackend>(upstream, std::make_shared<ReplayStore>(*config.store));
      }
      return upstream;
    }
    case BackendKind::synthetic: {
      SyntheticProfile profile;
      if (config.synthetic.profile == "fixed") {
        profile.fallback = config.synthetic.dist;
      } else {
        for (const auto& inst : subset) {
          auto probs = inst.human_dist.probs();
          profile.per_instance.emplace(inst.id, std::vector<double>(probs.begin(), probs.end()));
        }
      }
      std::shared_ptr<CompletionBackend> synthetic =
          std::make_shared<SyntheticBackend>(std::move(profile), config.synthetic.seed);
      if (config.store) {
        return std::make_shared<RecordingBackend>(synthetic, std::make_shared<ReplayStore>(*config.store));
      }
      return synthetic;
    }
  }
  throw ConfigError("unknown backend kind");
}

std::vector<AnnotatedInstance> prepare_subset(const RunConfig& config) {
  config.validate();
  const auto& spec = dataset_spec(config.dataset);
  auto loaded = load_dataset(config.data_path, spec);
  if (config.subset_ids) {
    const auto ids = read_id_list(*config.subset_ids);
    return select_by_ids(loaded.instances, ids);
  }
  const std::size_t n = std::min(config.subset_n, loaded.instances.size());
  return select_subset(loaded.instances, n, config.seed);
}

namespace {

struct Outcome {
  std::optional<InstanceRow> row;
  std::optional<Exclusion> exclusion;
};

Outcome run_one(const AnnotatedInstance& inst, const DatasetSpec& spec, const RunConfig& config,
                const EstimatorConfig& cell, const EstimationContext& ctx) {
  const auto prompt = cell.method == Method::direct ? render_direct_prompt(spec, inst.text, config.prompt_role)
                                                    : render_prompt(spec, inst.text, config.prompt_role);
  auto make_row = [&](const OpinionDistribution& model) {
    InstanceRow row{inst.id, inst.human_dist, model, 0, 0, 0, false, {}};
    row.metrics = score_instance(inst.human_dist, model, config.metrics);
    return row;
  };
  try {
    const auto result = estimate(inst, prompt, cell, ctx);
    auto row = make_row(result.dist);
    row.iterations = result.iterations;
    row.valid_iterations = result.valid_iterations;
    row.invalid_samples = result.invalid_samples.size();
    return {std::move(row), std::nullopt};
  } catch (const AllResponsesInvalid& e) {
    return {std::nullopt, Exclusion{inst.id, "all_invalid", e.what()}};
  } catch (const DirectParseFailure& e) {
    if (config.direct_uniform_fallback) {
      auto row = make_row(OpinionDistribution::uniform(inst.human_dist.class_count()));
      row.iterations = cell.direct_samples;
      row.invalid_samples = static_cast<std::size_t>(cell.direct_samples);
      row.fallback = true;
      return {std::move(row), std::nullopt};
    }
    return {std::nullopt, Exclusion{inst.id, "parse_failure", e.what()}};
  } catch (const AuthFailure&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    return {std::nullopt, Exclusion{inst.id, "backend_error", e.what()}};
  }
}

CellReport run_cell(std::span<const AnnotatedInstance> subset, const DatasetSpec& spec, const RunConfig& config,
                    const EstimatorConfig& cell, CompletionBackend& backend, const ClassVocabulary& vocab) {
  const EstimationContext ctx{backend, vocab, config.backend.model_id};
  std::vector<Outcome> outcomes(subset.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= subset.size()) return;
      try {
        outcomes[i] = run_one(subset[i], spec, config, cell, ctx);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(subset.size());
        return;
      }
    }
  };
  const std::size_t workers = std::min(config.workers, std::max<std::size_t>(subset.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  CellReport report;
  report.label = cell.label();
  report.config = cell;
  for (auto& o : outcomes) {
    if (o.row) report.rows.push_back(std::move(*o.row));
    if (o.exclusion) report.excluded.push_back(std::move(*o.exclusion));
  }
  std::sort(report.rows.begin(), report.rows.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(report.excluded.begin(), report.excluded.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  const auto backend_errors = report.count_excluded("backend_error");
  if (!subset.empty() &&
      static_cast<double>(backend_errors) > config.abort_failure_fraction * static_cast<double>(subset.size())) {
    throw RunAborted("cell " + report.label + ": " + std::to_string(backend_errors) + " of " +
                     std::to_string(subset.size()) + " instances failed in the backend (first: " +
                     report.excluded.front().detail + ")");
  }
  return report;
}

void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.close();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

ordered_json dist_json(const OpinionDistribution& d) {
  ordered_json a = ordered_json::array();
  for (double p : d.probs()) a.push_back(p);
  return a;
}

OpinionDistribution dist_from_json(const ordered_json& j) { return OpinionDistribution(j.get<std::vector<double>>()); }

ordered_json cell_config_json(const EstimatorConfig& c) {
  return ordered_json{
      {"method", std::string(to_string(c.method))},
      {"iterations", c.iterations},
      {"temperature", c.temperature},
      {"top_p", c.top_p},
      {"top_k_logprobs", c.top_k_logprobs},
      {"seed", c.seed ? ordered_json(*c.seed) : ordered_json(nullptr)},
      {"max_tokens", c.max_tokens},
      {"direct_max_tokens", c.direct_max_tokens},
      {"direct_samples", c.direct_samples},
  };
}

EstimatorConfig cell_config_from_json(const ordered_json& j) {
  EstimatorConfig c;
  c.method = parse_method(j.at("method").get<std::string>());
  c.iterations = j.at("iterations").get<int>();
  c.temperature = j.at("temperature").get<double>();
  c.top_p = j.at("top_p").get<double>();
  c.top_k_logprobs = j.at("top_k_logprobs").get<int>();
  if (!j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
  c.max_tokens = j.at("max_tokens").get<int>();
  c.direct_max_tokens = j.at("direct_max_tokens").get<int>();
  c.direct_samples = j.at("direct_samples").get<int>();
  return c;
}

std::string rows_jsonl(const RunReport& report) {
  std::string out;
  for (const auto& cell : report.cells) {
    for (const auto& r : cell.rows) {
      const ordered_json line{
          {"cell", cell.label},
          {"id", r.id},
          {"human", dist_json(r.human)},
          {"model", dist_json(r.model)},
          {"iterations", r.iterations},
          {"valid_iterations", r.valid_iterations},
          {"invalid_samples", r.invalid_samples},
          {"fallback", r.fallback},
          {"ce", r.metrics.ce},
          {"jsd", r.metrics.jsd},
          {"l1", r.metrics.l1},
          {"dist_ce", r.metrics.dist_ce},
          {"ent_ce", r.metrics.ent_ce_signed},
      };
      out += line.dump();
      out += '\n';
    }
  }
  return out;
}

std::string manifest_json(const RunReport& report, const std::vector<std::string>& omitted) {
  ordered_json subset = ordered_json::array();
  for (const auto& s : report.subset) subset.push_back(ordered_json{{"id", s.id}, {"human", dist_json(s.human)}});

  ordered_json cells = ordered_json::array();
  for (const auto& cell : report.cells) {
    ordered_json exclusions = ordered_json::array();
    for (const auto& e : cell.excluded) {
      exclusions.push_back(ordered_json{{"id", e.id}, {"kind", e.kind}, {"detail", e.detail}});
    }
    std::size_t invalid_samples = 0;
    std::size_t fallbacks = 0;
    for (const auto& r : cell.rows) {
      invalid_samples += r.invalid_samples;
      fallbacks += r.fallback ? 1 : 0;
    }
    cells.push_back(ordered_json{
        {"label", cell.label},
        {"config", cell_config_json(cell.config)},
        {"rows", cell.rows.size()},
        {"excluded",
         {{"all_invalid", cell.count_excluded("all_invalid")},
          {"parse_failure", cell.count_excluded("parse_failure")},
          {"backend_error", cell.count_excluded("backend_error")}}},
        {"invalid_samples", invalid_samples},
        {"uniform_fallbacks", fallbacks},
        {"exclusions", std::move(exclusions)},
    });
  }

  ordered_json config = ordered_json::parse(report.config_json.empty() ? "null" : report.config_json);
  const ordered_json manifest{
      {"tool", "opindist"},
      {"version", OPINDIST_VERSION},
      {"dataset", report.dataset},
      {"backend", report.backend_description},
      {"config", std::move(config)},
      {"metric_decisions",
       {{"entropy_unit", "nats"},
        {"ce_epsilon", report.metrics.ce_epsilon},
        {"ce_renormalize_after_clamp", false},
        {"jsd_base", std::string(to_string(report.metrics.jsd_base))},
        {"ece_bins", report.metrics.ece_bins},
        {"ece_binning", "equal-width over [0,1], confidence 1.0 in last bin"},
        {"ece_confidence", "max class probability of model distribution"},
        {"ece_tie_rule", "argmax ties broken toward lower class index, for model and human"},
        {"ent_ce_aggregation", "mean of absolute values"},
        {"normalization_policy", std::string(kNormalizationPolicy)},
        {"near_zero_temperature", kTemperatureNearZero},
        {"lpe_membership", "per top-k candidate token of the first generated token"},
        {"mce_denominator", "valid responses only (M*)"},
        {"class_order", {"no", "yes"}},
        {"subset_sampler", "entropy-stratified, largest remainder, mt19937_64"}}},
      {"subset", std::move(subset)},
      {"cells", std::move(cells)},
      {"omitted_columns", omitted},
  };
  return manifest.dump(2) + "\n";
}

}  // namespace

void recompute_summaries(RunReport& report) {
  for (auto& cell : report.cells) {
    cell.aggregate.reset();
    cell.ece.reset();
    if (cell.rows.empty()) continue;
    std::vector<InstanceMetrics> metrics;
    std::vector<CalibrationRecord> records;
    for (const auto& r : cell.rows) {
      metrics.push_back(r.metrics);
      records.push_back(calibration_record(r.human, r.model));
    }
    cell.aggregate = aggregate(metrics);
    if (cell.config.method == Method::mce) {
      cell.ece = ece(records, report.metrics.ece_bins);
    }
  }
}

RunReport run_grid(std::span<const AnnotatedInstance> subset, const DatasetSpec& spec, const RunConfig& config,
                   CompletionBackend& backend) {
  config.validate();
  const auto vocab = ClassVocabulary::yes_no();
  RunReport report;
  report.dataset = spec.display_name;
  report.metrics = config.metrics;
  report.config_json = run_config_to_json(config);
  report.backend_description = backend.describe();
  for (const auto& inst : subset) report.subset.push_back({inst.id, inst.human_dist});
  std::sort(report.subset.begin(), report.subset.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const auto& cell : config.grid) {
    report.cells.push_back(run_cell(subset, spec, config, cell, backend, vocab));
  }
  recompute_summaries(report);
  return report;
}

RunReport run_experiment(const RunConfig& config) {
  const auto subset = prepare_subset(config);
  const auto& spec = dataset_spec(config.dataset);
  auto backend = make_backend(config.backend, subset);
  auto report = run_grid(subset, spec, config, *backend);
  write_report(report, config.out_dir);
  return report;
}

void write_report(const RunReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<std::string> omitted;
  const std::span<const RunReport> one(&report, 1);
  write_atomic(out_dir / "rows.jsonl", rows_jsonl(report));
  write_atomic(out_dir / "aggregates.csv", emit_aggregate_table(one, &omitted).to_csv());
  write_atomic(out_dir / "ece.csv", emit_ece_table(one).to_csv());
  write_atomic(out_dir / "entropy_hist.csv", emit_entropy_histogram(report).to_csv());
  write_atomic(out_dir / "entropy_scatter.csv", emit_entropy_scatter(report).to_csv());
  write_atomic(out_dir / "l1_by_entropy.csv", emit_l1_by_human_entropy(report).to_csv());
  write_atomic(out_dir / "boxplot.csv", emit_distribution_boxplot_data(report).to_csv());
  write_atomic(out_dir / "manifest.json", manifest_json(report, omitted));
}

RunReport read_report(const fs::path& dir) {
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  RunReport report;
  try {
    const auto manifest = ordered_json::parse(slurp(dir / "manifest.json"));
    report.dataset = manifest.at("dataset").get<std::string>();
    report.backend_description = manifest.at("backend").get<std::string>();
    if (!manifest.at("config").is_null()) report.config_json = manifest.at("config").dump(2);
    const auto& decisions = manifest.at("metric_decisions");
    report.metrics.ce_epsilon = decisions.at("ce_epsilon").get<double>();
    report.metrics.jsd_base = parse_log_base(decisions.at("jsd_base").get<std::string>());
    report.metrics.ece_bins = decisions.at("ece_bins").get<std::size_t>();
    for (const auto& s : manifest.at("subset")) {
      report.subset.push_back({s.at("id").get<std::string>(), dist_from_json(s.at("human"))});
    }
    for (const auto& c : manifest.at("cells")) {
      CellReport cell;
      cell.label = c.at("label").get<std::string>();
      cell.config = cell_config_from_json(c.at("config"));
      for (const auto& e : c.at("exclusions")) {
        cell.excluded.push_back(
            {e.at("id").get<std::string>(), e.at("kind").get<std::string>(), e.at("detail").get<std::string>()});
      }
      report.cells.push_back(std::move(cell));
    }

    std::istringstream rows(slurp(dir / "rows.jsonl"));
    std::string line;
    while (std::getline(rows, line)) {
      if (line.empty()) continue;
      const auto j = ordered_json::parse(line);
      const auto label = j.at("cell").get<std::string>();
      auto it = std::find_if(report.cells.begin(), report.cells.end(),
                             [&](const CellReport& c) { return c.label == label; });
      if (it == report.cells.end()) throw Error("row references unknown cell " + label);
      InstanceRow row{j.at("id").get<std::string>(), dist_from_json(j.at("human")), dist_from_json(j.at("model")), 0, 0, 0, false, {}};
      row.iterations = j.at("iterations").get<int>();
      row.valid_iterations = j.at("valid_iterations").get<int>();
      row.invalid_samples = j.at("invalid_samples").get<std::size_t>();
      row.fallback = j.at("fallback").get<bool>();
      row.metrics.ce = j.at("ce").get<double>();
      row.metrics.jsd = j.at("jsd").get<double>();
      row.metrics.l1 = j.at("l1").get<double>();
      row.metrics.dist_ce = j.at("dist_ce").get<double>();
      row.metrics.ent_ce_signed = j.at("ent_ce").get<double>();
      it->rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed report in " + dir.string() + ": " + e.what());
  }
  recompute_summaries(report);
  return report;
}

}  // namespace opindist
