#include "opindist/replay_store.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <mutex>
#include <vector>

#include "opindist/errors.hpp"

namespace opindist {

namespace fs = std::filesystem;

namespace {

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ReplayStore::ReplayStore(fs::path directory) : directory_(std::move(directory)), persistent_(true) {
  fs::create_directories(directory_);
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(directory_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      logs.push_back(entry.path());
    }
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& path : logs) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      throw Error("cannot read replay log " + path.string());
    }
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const bool last_line = in.peek() == std::ifstream::traits_type::eof();
      try {
        auto exchange = exchange_from_json_line(line);
        index_.try_emplace(replay_key(exchange.request), std::move(exchange));
      } catch (const Error&) {
        if (!last_line) throw;
      }
    }
  }
  log_.open(directory_ / "exchanges.jsonl", std::ios::binary | std::ios::app);
  if (!log_) {
    throw Error("cannot open replay log for appending in " + directory_.string());
  }
}

std::shared_ptr<ReplayStore> ReplayStore::in_memory() { return std::shared_ptr<ReplayStore>(new ReplayStore()); }

std::optional<CompletionExchange> ReplayStore::lookup(const std::string& key) const {
  std::shared_lock lock(mutex_);
  if (auto it = index_.find(key); it != index_.end()) {
    return it->second;
  }
  return std::nullopt;
}

bool ReplayStore::contains(const std::string& key) const {
  std::shared_lock lock(mutex_);
  return index_.contains(key);
}

CompletionExchange ReplayStore::append(CompletionExchange exchange) {
  const std::string key = replay_key(exchange.request);
  std::unique_lock lock(mutex_);
  if (auto it = index_.find(key); it != index_.end()) {
    return it->second;
  }
  if (exchange.recorded_at.empty()) {
    exchange.recorded_at = utc_now_iso8601();
  }
  if (persistent_) {
    log_ << exchange_to_json_line(exchange) << '\n';
    log_.flush();
    if (!log_) {
      throw Error("failed to append to replay log in " + directory_.string());
    }
  }
  return index_.emplace(key, std::move(exchange)).first->second;
}

std::size_t ReplayStore::size() const {
  std::shared_lock lock(mutex_);
  return index_.size();
}

RecordingBackend::RecordingBackend(std::shared_ptr<CompletionBackend> upstream, std::shared_ptr<ReplayStore> store)
    : upstream_(std::move(upstream)), store_(std::move(store)) {}

CompletionExchange RecordingBackend::complete(const CompletionRequest& request) {
  if (auto hit = store_->lookup(replay_key(request))) {
    return *hit;
  }
  return store_->append(upstream_->complete(request));
}

std::string RecordingBackend::describe() const { return "recording(" + upstream_->describe() + ")"; }

ReplayBackend::ReplayBackend(std::shared_ptr<const ReplayStore> store) : store_(std::move(store)) {}

CompletionExchange ReplayBackend::complete(const CompletionRequest& request) {
  const std::string key = replay_key(request);
  if (auto hit = store_->lookup(key)) {
    return *hit;
  }
  throw ReplayMiss(key);
}

std::string ReplayBackend::describe() const { return "replay"; }

}  // namespace opindist
