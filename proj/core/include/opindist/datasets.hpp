#pragma once

// Le-Wi-Di style annotated datasets: loading, validation, stratified
// subsetting, summary statistics and the annotation prompts.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "opindist/backend.hpp"
#include "opindist/core.hpp"

namespace opindist {

enum class DatasetName { hs_brexit, conv_abuse, md_agreement };

inline constexpr std::string_view kTextPlaceholder = "{text}";

struct DatasetSpec {
  DatasetName name;
  std::string display_name;   // "HS-Brexit"
  std::string task_phrase;    // "hate speech detection"
  std::string task_word;      // "hate speech"
  // Classification prompt with exactly one {text} slot.
  std::string prompt_template;
  // Prompt used by the direct method; asks for a yes/no percentage split.
  std::string direct_prompt_template;
  std::size_t class_count = 2;  // no = 0, yes = 1
};

const DatasetSpec& dataset_spec(DatasetName name);

/// Accepts display names case-insensitively ("HS-Brexit", "convabuse",
/// "MD-Agreement", ...). Throws ConfigError for anything else.
const DatasetSpec& dataset_spec(std::string_view name);

const std::vector<DatasetName>& all_datasets();

std::vector<ChatMessage> render_prompt(const DatasetSpec& spec, std::string_view text,
                                       std::string_view role = "user");
std::vector<ChatMessage> render_direct_prompt(const DatasetSpec& spec, std::string_view text,
                                              std::string_view role = "user");

struct RejectedRecord {
  std::string id;
  std::string reason;
};

struct LoadedDataset {
  std::vector<AnnotatedInstance> instances;  // sorted by id
  std::vector<RejectedRecord> rejects;
};

/// Loads a Le-Wi-Di JSON file (map of id -> record, or array of records with
/// an "id" field). A directory loads every *.json inside it, prefixing ids
/// with the file stem ("HS-Brexit_test/12"); a directory that holds a
/// "<display_name>_dataset" subdirectory resolves to that subdirectory.
/// Records that fail validation are returned as rejects.
/// Throws DatasetError when the path cannot be read or parsed.
LoadedDataset load_dataset(const std::filesystem::path& path, const DatasetSpec& spec);

/// JSON-lines {id, reason}.
void write_rejects_report(const std::filesystem::path& path, std::span<const RejectedRecord> rejects);

struct DatasetStats {
  std::size_t items = 0;
  std::map<std::size_t, std::size_t> annotator_histogram;
  double full_agreement_fraction = 0.0;
};

DatasetStats dataset_stats(std::span<const AnnotatedInstance> instances);

/// Entropy strata used for subsetting: 0 = unanimous, 1 = (0, 0.45], 2 = above.
int entropy_bucket(const AnnotatedInstance& instance);

/// Stratified sample of n instances without replacement. Each entropy bucket
/// contributes floor(n * share) items, leftover slots go to the largest
/// remainders (lower bucket first on ties). Sampling uses an integer-only
/// mt19937_64 path, so the result depends only on (instances, n, seed).
/// Output is sorted by id. Throws DatasetError when n exceeds the population.
std::vector<AnnotatedInstance> select_subset(std::span<const AnnotatedInstance> instances, std::size_t n,
                                             std::uint64_t seed);

/// One id per line; blank lines and surrounding whitespace ignored.
std::vector<std::string> read_id_list(const std::filesystem::path& path);

/// Instances named in `ids`, sorted by id. Throws DatasetError on unknown ids.
std::vector<AnnotatedInstance> select_by_ids(std::span<const AnnotatedInstance> instances,
                                             std::span<const std::string> ids);

}  // namespace opindist
