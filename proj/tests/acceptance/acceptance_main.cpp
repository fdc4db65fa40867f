// Acceptance checks. One line per criterion: PASS, FAIL, SKIP or INFO.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "opindist/datasets.hpp"
#include "opindist/errors.hpp"
#include "opindist/estimators.hpp"
#include "opindist/harness.hpp"
#include "opindist/metrics.hpp"
#include "opindist/replay_store.hpp"
#include "opindist/synthetic_backend.hpp"

namespace fs = std::filesystem;
using namespace opindist;

namespace {

// Pinned tolerances and limits.
constexpr double kSymmetryTol = 1e-12;
constexpr double kLpTol = 1e-6;
constexpr double kZeroEntropyGap = 0.2;
constexpr double kConsistencyL1 = 0.05;
constexpr double kConsistencyEntCe = 0.05;
constexpr double kCalibratedEce = 0.01;
constexpr double kMiscalibratedTol = 1e-12;
// 0.75 - 0.6 is not exactly representable; allow a few ulps around 0.15.
constexpr double kSingleBinTol = 1e-15;
constexpr double kAgreementPoints = 1.0;

enum class Status { pass, fail, skip, info };

struct Outcome {
  Status status;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {Status::fail, std::string("exception: ") + e.what()};
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (o.status == Status::pass && limit_s > 0 && elapsed >= limit_s) {
    o = {Status::fail, o.detail + "; too slow"};
  }
  const char* tag = "PASS";
  switch (o.status) {
    case Status::pass: break;
    case Status::fail: tag = "FAIL"; ++failures; break;
    case Status::skip: tag = "SKIP"; break;
    case Status::info: tag = "INFO"; break;
  }
  char timing[64];
  if (limit_s > 0) {
    std::snprintf(timing, sizeof timing, "%.3fs < %.0fs", elapsed, limit_s);
  } else {
    std::snprintf(timing, sizeof timing, "%.3fs", elapsed);
  }
  std::printf("%s [%d] %s (%s): %s\n", tag, id, name.c_str(), timing, o.detail.c_str());
  std::fflush(stdout);
}

OpinionDistribution random_binary(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double p = u(rng);
  return OpinionDistribution({1.0 - p, p});
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Instances with annotator counts 3..10 and every possible vote split, which
// covers the unanimous, near-unanimous and split strata.
std::vector<AnnotatedInstance> mixed_profile_set(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<AnnotatedInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int votes = 3 + static_cast<int>(rng() % 8);
    const int yes = static_cast<int>(rng() % static_cast<std::uint64_t>(votes + 1));
    std::vector<int> v(static_cast<std::size_t>(votes), 0);
    for (int k = 0; k < yes; ++k) v[static_cast<std::size_t>(k)] = 1;
    char id[16];
    std::snprintf(id, sizeof id, "p%03zu", i);
    out.push_back(make_instance(id, "item " + std::to_string(i), v, 2, "HS-Brexit"));
  }
  return out;
}

Outcome metric_oracles() {
  std::mt19937_64 rng(20240601);
  std::vector<InstanceMetrics> rows;
  double signed_sum = 0.0;
  int ce_checks = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto y = random_binary(rng);
    const auto yh = random_binary(rng);
    const auto m = score_instance(y, yh);
    if (m.dist_ce != m.l1 / 2) return {Status::fail, "dist_ce != l1/2 at pair " + std::to_string(i)};
    if (!(m.jsd >= 0.0 && m.jsd <= 1.0)) return {Status::fail, "jsd outside [0,1] at pair " + std::to_string(i)};
    if (std::abs(jsd(y, yh) - jsd(yh, y)) > kSymmetryTol) return {Status::fail, "jsd asymmetric"};
    if (std::min(y[0], y[1]) >= 1e-9) {
      ++ce_checks;
      if (std::abs(cross_entropy(y, y) - entropy(y)) > kSymmetryTol) return {Status::fail, "CE(y,y) != H(y)"};
    }
    signed_sum += m.ent_ce_signed;
    rows.push_back(m);
  }
  const auto agg = aggregate(rows);
  if (agg.mean_abs_ent_ce < std::abs(signed_sum / 1000.0)) return {Status::fail, "mean |EntCE| < |mean EntCE|"};
  return {Status::pass, "1000 pairs, " + std::to_string(ce_checks) + " CE identity checks"};
}

Outcome mce_oracle() {
  std::mt19937_64 rng(77);
  const std::vector<std::string> pool{"yes", "no", "Yes.", "NO!", "no.", "banana", "maybe", "", "I think yes"};
  const auto vocab = ClassVocabulary::yes_no();
  const auto inst = make_instance("x", "t", {0, 1}, 2, "HS-Brexit");
  const std::vector<ChatMessage> prompt{{"user", "q"}};
  int invalid_cases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    EstimatorConfig config;
    config.method = Method::mce;
    config.iterations = 1 + static_cast<int>(rng() % 12);
    config.temperature = trial % 2 ? kTemperatureHigh : kTemperatureMedium;

    // Replay store populated with this fixture's responses.
    auto store = ReplayStore::in_memory();
    std::vector<std::string> replies;
    for (int m = 0; m < config.iterations; ++m) {
      CompletionExchange e;
      e.request.messages = prompt;
      e.request.temperature = config.temperature;
      e.request.top_p = config.top_p;
      e.request.max_tokens = config.max_tokens;
      e.request.model_id = "fixture";
      e.request.request_tag = RequestTag{inst.id, "mce", m}.str();
      e.text = pool[rng() % pool.size()];
      replies.push_back(e.text);
      store->append(std::move(e));
    }
    ReplayBackend backend(store);

    // Brute-force count over the same multiset.
    long yes = 0, no = 0;
    for (const auto& r : replies) {
      std::string s;
      for (char c : r) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == ',' || s.back() == '?')) s.pop_back();
      yes += s == "yes";
      no += s == "no";
    }
    const long valid = yes + no;
    try {
      const auto r = mc_estimate(inst, prompt, config, {backend, vocab, "fixture"});
      if (valid == 0) return {Status::fail, "expected AllResponsesInvalid at trial " + std::to_string(trial)};
      if (r.valid_iterations != valid) return {Status::fail, "M* mismatch at trial " + std::to_string(trial)};
      if (r.class_counts != std::vector<std::size_t>{static_cast<std::size_t>(no), static_cast<std::size_t>(yes)}) {
        return {Status::fail, "count mismatch at trial " + std::to_string(trial)};
      }
      if (r.dist[0] != static_cast<double>(no) / static_cast<double>(valid) ||
          r.dist[1] != static_cast<double>(yes) / static_cast<double>(valid)) {
        return {Status::fail, "ratio mismatch at trial " + std::to_string(trial)};
      }
      if (valid < config.iterations) ++invalid_cases;
    } catch (const AllResponsesInvalid&) {
      if (valid != 0) return {Status::fail, "spurious AllResponsesInvalid at trial " + std::to_string(trial)};
      ++invalid_cases;
    }
  }
  return {Status::pass, "200 fixtures, " + std::to_string(invalid_cases) + " with invalid responses"};
}

Outcome lpe_oracle() {
  std::mt19937_64 rng(31337);
  const auto vocab = ClassVocabulary::yes_no();
  const std::vector<ChatMessage> prompt{{"user", "q"}};
  const double temps[] = {kTemperatureNearZero, kTemperatureMedium, 1.0, kTemperatureHigh};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto base = random_binary(rng);
    SyntheticProfile profile;
    profile.fallback = std::vector<double>{base[0], base[1]};
    SyntheticBackend backend(profile, static_cast<std::uint64_t>(trial));
    EstimatorConfig config;
    config.method = Method::lpe;
    config.temperature = temps[trial % 4];
    const auto q = tempered_distribution(*profile.fallback, config.temperature);
    const auto inst = make_instance("lp" + std::to_string(trial), "t", {0, 1}, 2, "HS-Brexit");

    for (int m = 0; m < config.iterations; ++m) {
      CompletionRequest r;
      r.messages = prompt;
      r.temperature = config.temperature;
      r.logprobs_k = config.top_k_logprobs;
      r.model_id = "synthetic";
      r.request_tag = RequestTag{inst.id, "lpe", m}.str();
      const auto e = backend.complete(r);
      const auto per = lp_iteration_distribution(*e.first_token_candidates, vocab, config.top_k_logprobs);
      if (!per) return {Status::fail, "no class candidate at trial " + std::to_string(trial)};
      for (std::size_t c = 0; c < 2; ++c) worst = std::max(worst, std::abs((*per)[c] - q[c]));
    }
    const auto result = lp_estimate(inst, prompt, config, {backend, vocab, "synthetic"});
    for (std::size_t c = 0; c < 2; ++c) worst = std::max(worst, std::abs(result.dist[c] - q[c]));
    if (worst > kLpTol) return {Status::fail, "deviation " + std::to_string(worst) + " at trial " + std::to_string(trial)};
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "100 profiles, max deviation %.3g <= %.0e", worst, kLpTol);
  return {Status::pass, buf};
}

RunReport synthetic_run(const std::vector<AnnotatedInstance>& subset, std::vector<EstimatorConfig> grid,
                        std::uint64_t seed) {
  RunConfig config;
  config.grid = std::move(grid);
  config.backend.kind = BackendKind::synthetic;
  config.backend.synthetic.seed = seed;
  config.workers = 4;
  auto backend = make_backend(config.backend, subset);
  return run_grid(subset, dataset_spec(DatasetName::hs_brexit), config, *backend);
}

Outcome temperature_trend() {
  const auto subset = mixed_profile_set(101, 4);
  std::vector<EstimatorConfig> grid;
  for (double t : {kTemperatureNearZero, kTemperatureMedium, kTemperatureHigh}) {
    EstimatorConfig c;
    c.method = Method::mce;
    c.temperature = t;
    grid.push_back(c);
  }
  const auto report = synthetic_run(subset, grid, 11);
  std::vector<double> zero_fraction, mean_entropy;
  for (const auto& cell : report.cells) {
    if (cell.rows.size() != subset.size()) return {Status::fail, cell.label + " excluded instances"};
    double zero = 0.0, h = 0.0;
    for (const auto& row : cell.rows) {
      const double e = entropy(row.model);
      zero += e == 0.0 ? 1.0 : 0.0;
      h += e;
    }
    zero_fraction.push_back(zero / static_cast<double>(cell.rows.size()));
    mean_entropy.push_back(h / static_cast<double>(cell.rows.size()));
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "zero-entropy fraction %.3f (T=1e-6) vs %.3f (T=2); mean entropy %.4f <= %.4f <= %.4f",
                zero_fraction[0], zero_fraction[2], mean_entropy[0], mean_entropy[1], mean_entropy[2]);
  const bool gap = zero_fraction[0] - zero_fraction[2] >= kZeroEntropyGap;
  const bool monotone = mean_entropy[0] <= mean_entropy[1] && mean_entropy[1] <= mean_entropy[2];
  return {gap && monotone ? Status::pass : Status::fail, buf};
}

Outcome consistency() {
  const auto subset = mixed_profile_set(101, 5);
  EstimatorConfig c;
  c.method = Method::mce;
  c.temperature = 1.0;
  c.iterations = 1000;
  const auto report = synthetic_run(subset, {c}, 13);
  const auto& agg = report.cells.front().aggregate;
  if (!agg) return {Status::fail, "no scored rows"};
  char buf[128];
  std::snprintf(buf, sizeof buf, "mean L1 %.4f <= %.2f, mean |EntCE| %.4f <= %.2f over %zu instances", agg->mean_l1,
                kConsistencyL1, agg->mean_abs_ent_ce, kConsistencyEntCe, agg->n);
  const bool ok = agg->mean_l1 <= kConsistencyL1 && agg->mean_abs_ent_ce <= kConsistencyEntCe;
  return {ok ? Status::pass : Status::fail, buf};
}

Outcome ece_sanity() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CalibrationRecord> calibrated;
  for (int i = 0; i < 200000; ++i) {
    const double conf = 0.5 + 0.5 * u(rng);
    calibrated.push_back({conf, u(rng) < conf});
  }
  const double good = ece(calibrated);
  const double bad = ece(std::vector<CalibrationRecord>(100, {1.0, false}));
  std::vector<CalibrationRecord> single;
  for (int i = 0; i < 10; ++i) single.push_back({0.75, i < 6});
  const double hand = ece(single);

  char buf[160];
  std::snprintf(buf, sizeof buf, "calibrated %.5f <= %.2f; miscalibrated %.15f; single-bin %.17g", good,
                kCalibratedEce, bad, hand);
  const bool ok = good <= kCalibratedEce && std::abs(bad - 1.0) <= kMiscalibratedTol &&
                  std::abs(hand - 0.15) <= kSingleBinTol;
  return {ok ? Status::pass : Status::fail, buf};
}

struct Table1Row {
  DatasetName name;
  std::size_t items;
  double full_agreement_pct;
};

Outcome dataset_check() {
  // Subset reproducibility is checked on a generated population regardless.
  const auto population = mixed_profile_set(500, 21);
  const auto a = select_subset(population, 101, 2023);
  const auto b = select_subset(population, 101, 2023);
  auto ids = [](const std::vector<AnnotatedInstance>& v) {
    std::string s;
    for (const auto& i : v) s += i.id + "\n";
    return s;
  };
  if (ids(a) != ids(b)) return {Status::fail, "select_subset not reproducible on generated population"};

  const char* dir = std::getenv("OPINDIST_LEWIDI_DIR");
  if (dir == nullptr || *dir == '\0') {
    return {Status::skip,
            "Le-Wi-Di archive not available (set OPINDIST_LEWIDI_DIR); subset reproducibility verified on a "
            "generated population only"};
  }
  const std::vector<Table1Row> expected{{DatasetName::hs_brexit, 1120, 69.0},
                                        {DatasetName::conv_abuse, 4050, 86.0},
                                        {DatasetName::md_agreement, 10753, 42.0}};
  std::string detail;
  bool ok = true;
  for (const auto& row : expected) {
    const auto& spec = dataset_spec(row.name);
    const auto loaded = load_dataset(dir, spec);
    const auto stats = dataset_stats(loaded.instances);
    const double pct = 100.0 * stats.full_agreement_fraction;
    const bool row_ok = stats.items == row.items && std::abs(pct - row.full_agreement_pct) <= kAgreementPoints;
    const auto s1 = select_subset(loaded.instances, 101, 2023);
    const auto s2 = select_subset(loaded.instances, 101, 2023);
    const bool repro = ids(s1) == ids(s2);
    ok = ok && row_ok && repro;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s%s %zu items (want %zu), %.1f%% agreement (want %.0f), subset %s",
                  detail.empty() ? "" : "; ", spec.display_name.c_str(), stats.items, row.items, pct,
                  row.full_agreement_pct, repro ? "reproducible" : "NOT reproducible");
    detail += buf;
  }
  return {ok ? Status::pass : Status::fail, detail};
}

Outcome replay_determinism() {
  const fs::path fixture = fs::path(OPINDIST_FIXTURE_DIR) / "replay5";
  const fs::path work = fs::temp_directory_path() / ("opindist-acceptance-" + std::to_string(std::random_device{}()));
  std::vector<std::string> runs;
  for (const char* name : {"a", "b"}) {
    auto config = load_run_config(fixture / "config.json");
    config.out_dir = work / name;
    run_experiment(config);
  }
  const char* files[] = {"rows.jsonl",          "aggregates.csv",    "ece.csv",    "entropy_hist.csv",
                         "entropy_scatter.csv", "l1_by_entropy.csv", "boxplot.csv"};
  std::string mismatch;
  for (const char* f : files) {
    const auto a = slurp(work / "a" / f);
    if (a.empty() || a != slurp(work / "b" / f)) mismatch += std::string(" run-to-run:") + f;
    if (a != slurp(fixture / "expected" / f)) mismatch += std::string(" golden:") + f;
  }
  std::error_code ec;
  fs::remove_all(work, ec);
  if (!mismatch.empty()) return {Status::fail, "differs:" + mismatch};
  return {Status::pass, "7 files byte-identical across two runs and to the checked-in goldens"};
}

Outcome reference_magnitude() {
  const char* dir = std::getenv("OPINDIST_REAL_RUN_DIR");
  if (dir == nullptr || *dir == '\0') {
    return {Status::info, "no replayed real exchanges recorded; set OPINDIST_REAL_RUN_DIR to a run directory"};
  }
  const auto report = read_report(dir);
  std::optional<double> direct_ce, best_mc_ce;
  for (const auto& cell : report.cells) {
    if (!cell.aggregate) continue;
    if (cell.config.method == Method::direct) direct_ce = cell.aggregate->mean_ce;
    if (cell.config.method == Method::mce) {
      best_mc_ce = std::max(best_mc_ce.value_or(0.0), cell.aggregate->mean_ce);
    }
  }
  if (!direct_ce || !best_mc_ce) return {Status::info, "run lacks a scored Direct or MC cell"};
  char buf[128];
  std::snprintf(buf, sizeof buf, "Direct CE %.3f %s max MC CE %.3f (non-binding)", *direct_ce,
                *direct_ce > *best_mc_ce ? ">" : "<=", *best_mc_ce);
  return {Status::info, buf};
}

}  // namespace

int main() {
  report(1, "metric oracle suite", 1, metric_oracles);
  report(2, "MCE brute-force oracle", 1, mce_oracle);
  report(3, "LPE tempered-distribution oracle", 1, lpe_oracle);
  report(4, "temperature trend", 30, temperature_trend);
  report(5, "MCE consistency at M=1000", 60, consistency);
  report(6, "ECE sanity", 0, ece_sanity);
  report(7, "Le-Wi-Di dataset statistics", 10, dataset_check);
  report(8, "replay fixture determinism", 0, replay_determinism);
  report(9, "reference magnitude", 0, reference_magnitude);
  std::printf("%s\n", failures == 0 ? "acceptance: all gating criteria passed" : "acceptance: FAILED");
  return failures == 0 ? 0 : 1;
}
