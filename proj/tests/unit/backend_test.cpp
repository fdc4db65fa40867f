#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <thread>

#include "opindist/errors.hpp"
#include "opindist/http_backend.hpp"
#include "opindist/rate_limiter.hpp"
#include "opindist/replay_store.hpp"
#include "opindist/synthetic_backend.hpp"
#include "test_support.hpp"

using namespace opindist;
using namespace std::chrono_literals;

namespace {

CompletionRequest sample_request(int iteration = 0) {
  CompletionRequest r;
  r.messages = {{"user", "Is this offensive? ---x---"}};
  r.temperature = 0.8;
  r.model_id = "gpt-3.5-turbo";
  r.request_tag = RequestTag{"item-1", "mce", iteration}.str();
  return r;
}

// Loopback server whose handler is swapped per test.
class LoopbackServer {
 public:
  explicit LoopbackServer(httplib::Server::Handler handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LoopbackServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

const char* kOkBody = R"({
  "id": "x", "system_fingerprint": "fp_1",
  "choices": [{"index": 0, "message": {"role": "assistant", "content": "Yes"},
    "logprobs": {"content": [{"token": "Yes", "logprob": -0.2,
      "top_logprobs": [{"token": "No", "logprob": -1.9}, {"token": "Yes", "logprob": -0.2}]}]}}]
})";

HttpBackendConfig loopback_config(const LoopbackServer& s) {
  HttpBackendConfig c;
  c.base_url = s.url();
  c.api_key = "test-key";
  c.requests_per_minute = 0;
  c.timeout = 5s;
  return c;
}

}  // namespace

TEST_CASE("replay_key is stable and field-sensitive") {
  const auto base = sample_request();
  CHECK(replay_key(base) == replay_key(sample_request()));
  CHECK(replay_key(base).size() == 64);
  CHECK(replay_key(sample_request(3)) != replay_key(sample_request(4)));

  auto hot = base;
  hot.temperature = 2.0;
  CHECK(replay_key(hot) != replay_key(base));

  std::vector<CompletionRequest> variants(6, base);
  variants[0].model_id = "other";
  variants[1].messages[0].content += " ";
  variants[2].top_p = 0.9;
  variants[3].logprobs_k = 10;
  variants[4].max_tokens = 6;
  variants[5].messages[0].role = "system";
  for (const auto& v : variants) CHECK(replay_key(v) != replay_key(base));

  auto two = base;
  two.messages = {{"system", "a"}, {"user", "b"}};
  auto swapped = base;
  swapped.messages = {{"user", "b"}, {"system", "a"}};
  CHECK(replay_key(two) != replay_key(swapped));
}

TEST_CASE("request tags round trip") {
  const RequestTag t{"conv#17", "lpe.s3", 9};
  CHECK(t.str() == "conv#17#lpe.s3#9");
  const auto back = RequestTag::parse(t.str());
  CHECK(back.instance_id == "conv#17");
  CHECK(back.method == "lpe.s3");
  CHECK(back.iteration == 9);
  CHECK_THROWS(RequestTag::parse("nohash"));
}

TEST_CASE("request validation") {
  auto r = sample_request();
  r.temperature = -1;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  r = sample_request();
  r.top_p = 0;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  r = sample_request();
  r.logprobs_k = 21;
  CHECK_THROWS_AS(r.validate(), ConfigError);
}

TEST_CASE("exchange JSON lines round trip") {
  CompletionExchange e;
  e.request = sample_request();
  e.request.logprobs_k = 10;
  e.text = "yes";
  e.first_token_candidates = std::vector<TokenLogprob>{{"yes", -0.25}, {"no", -1.5}};
  e.latency_ms = 12;
  e.provider_fingerprint = "fp";
  e.recorded_at = "2024-01-01T00:00:00Z";
  const auto line = exchange_to_json_line(e);
  CHECK(line.find('\n') == std::string::npos);
  CHECK(line.rfind("{\"key\":", 0) == 0);
  const auto back = exchange_from_json_line(line);
  CHECK(back.request == e.request);
  CHECK(back.text == e.text);
  CHECK(back.first_token_candidates == e.first_token_candidates);
  CHECK(back.provider_fingerprint == e.provider_fingerprint);
  CHECK(exchange_to_json_line(back) == line);
}

TEST_CASE("replay store persists and tolerates a truncated tail") {
  testing::TempDir dir("opindist-store");
  {
    ReplayStore store(dir.path());
    CompletionExchange e;
    e.request = sample_request(0);
    e.text = "no";
    store.append(e);
    e.request = sample_request(1);
    e.text = "yes";
    store.append(e);
    e.text = "ignored duplicate";
    CHECK(store.append(e).text == "yes");
    CHECK(store.size() == 2);
  }
  {
    std::ofstream out(dir / "exchanges.jsonl", std::ios::app);
    out << "{\"key\":\"abc\",\"req";
  }
  ReplayStore reopened(dir.path());
  CHECK(reopened.size() == 2);
  REQUIRE(reopened.lookup(replay_key(sample_request(1))));
  CHECK(reopened.lookup(replay_key(sample_request(1)))->text == "yes");
  CHECK_FALSE(reopened.contains(replay_key(sample_request(2))));
}

TEST_CASE("recording backend serves hits without upstream calls") {
  auto store = ReplayStore::in_memory();
  auto upstream = std::make_shared<testing::ScriptedBackend>(testing::ScriptedBackend::texts({"yes", "no"}));
  RecordingBackend recording(upstream, store);
  CHECK(recording.complete(sample_request(0)).text == "yes");
  CHECK(upstream->calls() == 1);
  CHECK(recording.complete(sample_request(0)).text == "yes");
  CHECK(upstream->calls() == 1);

  ReplayBackend replay(store);
  CHECK(replay.complete(sample_request(0)).text == "yes");
  CHECK_THROWS_AS(replay.complete(sample_request(1)), ReplayMiss);
}

TEST_CASE("tempered_distribution closed form") {
  const std::vector<double> half{0.5, 0.5};
  for (double t : {1e-6, 0.8, 1.0, 2.0}) {
    const auto q = tempered_distribution(half, t);
    CHECK(q[0] == doctest::Approx(0.5).epsilon(1e-12));
  }
  const std::vector<double> p{0.3, 0.7};
  CHECK(tempered_distribution(p, 1.0)[1] == doctest::Approx(0.7).epsilon(1e-12));
  // 0.09/0.58 and 0.49/0.58
  CHECK(tempered_distribution(p, 0.5)[0] == doctest::Approx(0.15517241379310345).epsilon(1e-12));
  CHECK(tempered_distribution(p, 0.5)[1] == doctest::Approx(0.8448275862068966).epsilon(1e-12));
  CHECK(tempered_distribution(p, 2.0)[1] == doctest::Approx(0.60435607626104).epsilon(1e-12));
}

TEST_CASE("synthetic backend is deterministic and follows the tempered distribution") {
  SyntheticProfile profile;
  profile.fallback = std::vector<double>{0.3, 0.7};

  SyntheticBackend cold(profile, 42);
  auto r = sample_request();
  r.temperature = 1e-6;
  for (int i = 0; i < 50; ++i) {
    r.request_tag = RequestTag{"a", "mce", i}.str();
    CHECK(cold.complete(r).text == "yes");
  }

  SyntheticBackend hot(profile, 42);
  SyntheticBackend twin(profile, 42);
  r.temperature = 2.0;
  int yes = 0;
  constexpr int draws = 10'000;
  for (int i = 0; i < draws; ++i) {
    r.request_tag = RequestTag{"a", "mce", i}.str();
    const auto text = hot.complete(r).text;
    CHECK(text == twin.complete(r).text);
    yes += text == "yes";
  }
  const double q_yes = tempered_distribution(*profile.fallback, 2.0)[1];
  CHECK(std::abs(static_cast<double>(yes) / draws - q_yes) <= 0.02);

  r.logprobs_k = 10;
  const auto e = hot.complete(r);
  REQUIRE(e.first_token_candidates);
  CHECK(e.first_token_candidates->size() == 3);
  CHECK(e.first_token_candidates->back().token == kSyntheticDistractor);
  CHECK(e.first_token_candidates->back().logprob == -8.0);
}

TEST_CASE("rate limiter respects the window under a fake clock") {
  ManualClock clock;
  RateLimiter limiter(10, clock);
  const auto start = clock.now();
  std::vector<Clock::time_point> issued;
  for (int i = 0; i < 35; ++i) {
    limiter.acquire();
    issued.push_back(clock.now());
    clock.advance(100ms);
  }
  for (std::size_t i = 10; i < issued.size(); ++i) {
    CHECK(issued[i] - issued[i - 10] >= 60s);
  }
  CHECK(clock.now() - start >= 180s);
}

TEST_CASE("backoff delays grow and stay bounded") {
  BackoffPolicy p;
  std::mt19937_64 rng(1);
  for (int retry = 1; retry <= 10; ++retry) {
    const auto nominal = std::min<std::chrono::milliseconds>(p.initial_delay * (1 << (retry - 1)), p.max_delay);
    const auto d = p.delay(retry, rng);
    CHECK(d <= nominal);
    CHECK(d >= nominal / 2);
  }
}

TEST_CASE("chat completion parsing") {
  auto r = sample_request();
  r.logprobs_k = 1;
  const auto e = parse_chat_completion(r, kOkBody);
  CHECK(e.text == "Yes");
  CHECK(e.provider_fingerprint == "fp_1");
  REQUIRE(e.first_token_candidates);
  CHECK(e.first_token_candidates->size() == 1);
  CHECK(e.first_token_candidates->front().token == "Yes");

  CHECK_THROWS_AS(parse_chat_completion(r, R"({"choices": []})"), MalformedProviderResponse);
  CHECK_THROWS_AS(parse_chat_completion(r, "not json"), MalformedProviderResponse);
  const auto bare = parse_chat_completion(r, R"({"choices": [{"message": {"content": "no"}}]})");
  CHECK_FALSE(bare.first_token_candidates.has_value());

  const auto body = nlohmann::json::parse(build_chat_request_body(r));
  CHECK(body["model"] == "gpt-3.5-turbo");
  CHECK(body["top_logprobs"] == 1);
  CHECK(body["logprobs"] == true);
}

TEST_CASE("http backend retries 429 then succeeds") {
  std::atomic<int> hits{0};
  LoopbackServer server([&](const httplib::Request& req, httplib::Response& res) {
    CHECK(req.get_header_value("Authorization") == "Bearer test-key");
    if (hits++ < 2) {
      res.status = 429;
      return;
    }
    res.set_content(kOkBody, "application/json");
  });
  ManualClock clock;
  HttpBackend backend(loopback_config(server), clock);
  auto r = sample_request();
  r.logprobs_k = 5;
  const auto e = backend.complete(r);
  CHECK(e.text == "Yes");
  CHECK(backend.attempts() == 3);
  CHECK(e.first_token_candidates->size() == 2);
}

TEST_CASE("http backend gives up after five attempts") {
  std::atomic<int> hits{0};
  LoopbackServer server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 503;
  });
  ManualClock clock;
  HttpBackend backend(loopback_config(server), clock);
  CHECK_THROWS_AS(backend.complete(sample_request()), RetriesExhausted);
  CHECK(hits == 5);
}

TEST_CASE("http backend surfaces auth, client and malformed errors") {
  std::atomic<int> status{401};
  LoopbackServer server([&](const httplib::Request&, httplib::Response& res) {
    if (status == 200) {
      res.set_content(R"({"choices": [{}]})", "application/json");
      return;
    }
    res.status = status;
  });
  ManualClock clock;
  HttpBackend backend(loopback_config(server), clock);
  CHECK_THROWS_AS(backend.complete(sample_request()), AuthFailure);
  status = 400;
  CHECK_THROWS_AS(backend.complete(sample_request()), ProviderError);
  status = 200;
  CHECK_THROWS_AS(backend.complete(sample_request()), MalformedProviderResponse);

  auto config = loopback_config(server);
  config.api_key.clear();
  CHECK_THROWS_AS(HttpBackend(config, clock), AuthFailure);
}

TEST_CASE("missing log-probs leave candidates absent") {
  LoopbackServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices": [{"message": {"content": "yes"}}]})", "application/json");
  });
  ManualClock clock;
  HttpBackend backend(loopback_config(server), clock);
  auto r = sample_request();
  r.logprobs_k = 10;
  CHECK_FALSE(backend.complete(r).first_token_candidates.has_value());
}
