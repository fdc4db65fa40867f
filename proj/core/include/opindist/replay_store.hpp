#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "opindist/backend.hpp"

namespace opindist {

/// Append-only directory of JSON-lines exchange logs keyed by replay_key.
///
/// Every `*.jsonl` file in the directory is indexed on open (in file-name
/// order, first record per key wins). New exchanges go to `exchanges.jsonl`.
/// A truncated final line, left by an interrupted append, is ignored.
class ReplayStore {
 public:
  explicit ReplayStore(std::filesystem::path directory);

  /// Memory-only store; appends are not persisted.
  static std::shared_ptr<ReplayStore> in_memory();

  std::optional<CompletionExchange> lookup(const std::string& key) const;
  bool contains(const std::string& key) const;

  /// Records the exchange unless its key is already present. Returns the
  /// stored exchange (the earlier one on a duplicate key).
  CompletionExchange append(CompletionExchange exchange);

  std::size_t size() const;
  const std::filesystem::path& directory() const noexcept { return directory_; }

 private:
  ReplayStore() = default;

  std::filesystem::path directory_;
  bool persistent_ = false;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, CompletionExchange> index_;
  std::ofstream log_;
};

/// Serves requests from the store; misses go to `upstream` and are recorded.
class RecordingBackend final : public CompletionBackend {
 public:
  RecordingBackend(std::shared_ptr<CompletionBackend> upstream, std::shared_ptr<ReplayStore> store);

  CompletionExchange complete(const CompletionRequest& request) override;
  std::string describe() const override;

 private:
  std::shared_ptr<CompletionBackend> upstream_;
  std::shared_ptr<ReplayStore> store_;
};

/// Offline backend: every request must already be in the store.
class ReplayBackend final : public CompletionBackend {
 public:
  explicit ReplayBackend(std::shared_ptr<const ReplayStore> store);

  CompletionExchange complete(const CompletionRequest& request) override;
  std::string describe() const override;

 private:
  std::shared_ptr<const ReplayStore> store_;
};

}  // namespace opindist
