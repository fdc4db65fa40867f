#include <benchmark/benchmark.h>

#include <random>

#include "opindist/estimators.hpp"
#include "opindist/metrics.hpp"
#include "opindist/synthetic_backend.hpp"

using namespace opindist;

static std::vector<OpinionDistribution> random_pairs(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<OpinionDistribution> out;
  for (std::size_t i = 0; i < 2 * n; ++i) {
    const double p = u(rng);
    out.push_back(OpinionDistribution({1.0 - p, p}));
  }
  return out;
}

static void BM_ScoreInstance(benchmark::State& state) {
  const auto d = random_pairs(1024);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(score_instance(d[i], d[i + 1]));
    i = (i + 2) % d.size();
  }
}
BENCHMARK(BM_ScoreInstance);

static void BM_Ece(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  std::vector<CalibrationRecord> records(static_cast<std::size_t>(state.range(0)));
  for (auto& r : records) r = {u(rng), (rng() & 1) != 0};
  for (auto _ : state) benchmark::DoNotOptimize(ece(records));
}
BENCHMARK(BM_Ece)->Arg(101)->Arg(10000);

static void BM_ReplayKey(benchmark::State& state) {
  CompletionRequest r;
  r.messages = {{"user", std::string(400, 'x')}};
  r.model_id = "gpt-3.5-turbo";
  r.request_tag = "item#mce#3";
  for (auto _ : state) benchmark::DoNotOptimize(replay_key(r));
}
BENCHMARK(BM_ReplayKey);

static void BM_McEstimateSynthetic(benchmark::State& state) {
  SyntheticProfile profile;
  profile.fallback = std::vector<double>{0.3, 0.7};
  SyntheticBackend backend(profile, 3);
  const auto vocab = ClassVocabulary::yes_no();
  const auto inst = make_instance("b", "t", {0, 1}, 2, "HS-Brexit");
  const std::vector<ChatMessage> prompt{{"user", "q"}};
  EstimatorConfig c;
  c.method = Method::mce;
  c.iterations = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(mc_estimate(inst, prompt, c, {backend, vocab, "m"}));
}
BENCHMARK(BM_McEstimateSynthetic)->Arg(10)->Arg(1000);
BENCHMARK_MAIN();
