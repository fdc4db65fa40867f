#include "opindist/datasets.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "opindist/errors.hpp"

namespace opindist {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string annotation_prompt(std::string_view phrase, std::string_view word) {
  return "You are an expert annotator in \"" + std::string(phrase) +
         "\", who considers multiple worldviews and cultural nuances. Is the text, which is delimited by "
         "three dashes (-), \"" +
         std::string(word) + "\"? Respond only with 'yes' or 'no'. Only respond with one word!\n---{text}---";
}

std::string direct_prompt(std::string_view phrase, std::string_view word) {
  return "You are an expert annotator in \"" + std::string(phrase) +
         "\", who considers multiple worldviews and cultural nuances. Is the text, which is delimited by "
         "three dashes (-), \"" +
         std::string(word) +
         "\"? Estimate how a diverse pool of annotators would split between 'yes' and 'no'. Respond only "
         "in the form 'yes: <percent>%, no: <percent>%'.\n---{text}---";
}

DatasetSpec make_spec(DatasetName name, std::string display, std::string phrase, std::string word) {
  DatasetSpec s;
  s.name = name;
  s.display_name = std::move(display);
  s.prompt_template = annotation_prompt(phrase, word);
  s.direct_prompt_template = direct_prompt(phrase, word);
  s.task_phrase = std::move(phrase);
  s.task_word = std::move(word);
  return s;
}

const std::vector<DatasetSpec>& specs() {
  static const std::vector<DatasetSpec> all{
      make_spec(DatasetName::hs_brexit, "HS-Brexit", "hate speech detection", "hate speech"),
      make_spec(DatasetName::conv_abuse, "ConvAbuse", "abusiveness detection", "abusive"),
      make_spec(DatasetName::md_agreement, "MD-Agreement", "offensiveness detection", "offensive"),
  };
  return all;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<ChatMessage> fill(const std::string& tmpl, std::string_view text, std::string_view role) {
  if (text.empty()) {
    throw std::invalid_argument("prompt text must not be empty");
  }
  const auto pos = tmpl.find(kTextPlaceholder);
  std::string content = tmpl.substr(0, pos) + std::string(text) + tmpl.substr(pos + kTextPlaceholder.size());
  return {ChatMessage{std::string(role), std::move(content)}};
}

const json* first_field(const json& record, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (auto it = record.find(n); it != record.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

int parse_vote(std::string_view token) {
  std::string t;
  for (char c : token) {
    if (!std::isspace(static_cast<unsigned char>(c))) t.push_back(c);
  }
  if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    throw DatasetError("non-numeric vote '" + std::string(token) + "'");
  }
  return std::stoi(t);
}

std::vector<int> parse_votes(const json& field) {
  std::vector<int> votes;
  if (field.is_string()) {
    std::stringstream ss(field.get<std::string>());
    std::string token;
    while (std::getline(ss, token, ',')) {
      if (token.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      votes.push_back(parse_vote(token));
    }
  } else if (field.is_array()) {
    for (const auto& v : field) {
      if (v.is_number_integer()) {
        votes.push_back(v.get<int>());
      } else if (v.is_string()) {
        votes.push_back(parse_vote(v.get<std::string>()));
      } else {
        throw DatasetError("unsupported vote value");
      }
    }
  } else if (field.is_number_integer()) {
    votes.push_back(field.get<int>());
  } else {
    throw DatasetError("unsupported annotations field");
  }
  return votes;
}

std::string text_of(const json& field) { return field.is_string() ? field.get<std::string>() : field.dump(); }

void load_file(const fs::path& file, const std::string& id_prefix, const DatasetSpec& spec, LoadedDataset& out) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw DatasetError("cannot read " + file.string());
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DatasetError("cannot parse " + file.string() + ": " + e.what());
  }

  std::vector<std::pair<std::string, const json*>> records;
  if (doc.is_object()) {
    for (auto it = doc.begin(); it != doc.end(); ++it) records.emplace_back(it.key(), &it.value());
  } else if (doc.is_array()) {
    std::size_t index = 0;
    for (const auto& r : doc) {
      std::string id = std::to_string(index++);
      if (r.is_object() && r.contains("id")) id = r["id"].is_string() ? r["id"].get<std::string>() : r["id"].dump();
      records.emplace_back(std::move(id), &r);
    }
  } else {
    throw DatasetError(file.string() + " is neither a JSON object nor an array");
  }

  for (const auto& [key, record] : records) {
    const std::string id = id_prefix + key;
    try {
      if (!record->is_object()) throw DatasetError("record is not an object");
      const json* text = first_field(*record, {"text", "Text"});
      if (text == nullptr) throw DatasetError("missing text");
      const json* annotations = first_field(*record, {"annotations", "annotation", "labels"});
      if (annotations == nullptr) throw DatasetError("missing annotations");
      auto votes = parse_votes(*annotations);
      if (votes.empty()) throw DatasetError("record has no annotations");
      auto instance = make_instance(id, text_of(*text), std::move(votes), spec.class_count, spec.display_name);

      if (const json* soft = first_field(*record, {"soft_label", "soft label"}); soft != nullptr && soft->is_object()) {
        for (auto it = soft->begin(); it != soft->end(); ++it) {
          const int cls = parse_vote(it.key());
          if (cls < 0 || static_cast<std::size_t>(cls) >= spec.class_count || !it->is_number()) {
            throw DatasetError("soft_label has invalid entry '" + it.key() + "'");
          }
          const double stated = it->get<double>();
          const double derived = instance.human_dist[static_cast<std::size_t>(cls)];
          if (std::abs(stated - derived) > 1e-6) {
            throw DatasetError("soft_label[" + it.key() + "]=" + std::to_string(stated) +
                               " disagrees with votes (" + std::to_string(derived) + ")");
          }
        }
      }
      out.instances.push_back(std::move(instance));
    } catch (const Error& e) {
      out.rejects.push_back({id, e.what()});
    }
  }
}

// Deterministic across standard libraries, unlike std::uniform_int_distribution.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

bool id_less(const AnnotatedInstance& a, const AnnotatedInstance& b) { return a.id < b.id; }

}  // namespace

const DatasetSpec& dataset_spec(DatasetName name) {
  for (const auto& s : specs()) {
    if (s.name == name) return s;
  }
  throw ConfigError("unknown dataset");
}

const DatasetSpec& dataset_spec(std::string_view name) {
  const std::string key = lower(name);
  for (const auto& s : specs()) {
    if (lower(s.display_name) == key) return s;
  }
  if (key == "hs_brexit" || key == "hsbrexit") return dataset_spec(DatasetName::hs_brexit);
  if (key == "conv_abuse" || key == "conv-abuse") return dataset_spec(DatasetName::conv_abuse);
  if (key == "md_agreement" || key == "md-agree" || key == "mdagreement") return dataset_spec(DatasetName::md_agreement);
  throw ConfigError("unknown dataset '" + std::string(name) + "'");
}

const std::vector<DatasetName>& all_datasets() {
  static const std::vector<DatasetName> names{DatasetName::hs_brexit, DatasetName::conv_abuse,
                                              DatasetName::md_agreement};
  return names;
}

std::vector<ChatMessage> render_prompt(const DatasetSpec& spec, std::string_view text, std::string_view role) {
  return fill(spec.prompt_template, text, role);
}

std::vector<ChatMessage> render_direct_prompt(const DatasetSpec& spec, std::string_view text,
                                              std::string_view role) {
  return fill(spec.direct_prompt_template, text, role);
}

LoadedDataset load_dataset(const fs::path& path, const DatasetSpec& spec) {
  LoadedDataset out;
  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    fs::path dir = path;
    if (const auto nested = path / (spec.display_name + "_dataset"); fs::is_directory(nested, ec)) {
      dir = nested;
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      throw DatasetError("no .json files in " + dir.string());
    }
    for (const auto& f : files) load_file(f, f.stem().string() + "/", spec, out);
  } else {
    load_file(path, "", spec, out);
  }
  std::sort(out.instances.begin(), out.instances.end(), id_less);
  std::set<std::string> ids;
  for (const auto& inst : out.instances) {
    if (!ids.insert(inst.id).second) throw DatasetError("duplicate instance id " + inst.id);
  }
  return out;
}

void write_rejects_report(const fs::path& path, std::span<const RejectedRecord> rejects) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  for (const auto& r : rejects) {
    nlohmann::ordered_json line{{"id", r.id}, {"reason", r.reason}};
    out << line.dump() << '\n';
  }
}

DatasetStats dataset_stats(std::span<const AnnotatedInstance> instances) {
  DatasetStats stats;
  stats.items = instances.size();
  std::size_t unanimous = 0;
  for (const auto& inst : instances) {
    ++stats.annotator_histogram[inst.annotator_count()];
    if (entropy_bucket(inst) == 0) ++unanimous;
  }
  if (!instances.empty()) {
    stats.full_agreement_fraction = static_cast<double>(unanimous) / static_cast<double>(instances.size());
  }
  return stats;
}

int entropy_bucket(const AnnotatedInstance& instance) {
  // from_votes yields exactly 1.0 for a unanimous vote.
  if (instance.human_dist.max() == 1.0) return 0;
  return entropy(instance.human_dist) <= 0.45 ? 1 : 2;
}

std::vector<AnnotatedInstance> select_subset(std::span<const AnnotatedInstance> instances, std::size_t n,
                                             std::uint64_t seed) {
  const std::size_t total = instances.size();
  if (n > total) {
    throw DatasetError("subset of " + std::to_string(n) + " requested from " + std::to_string(total) + " instances");
  }
  constexpr std::size_t kBuckets = 3;
  std::array<std::vector<AnnotatedInstance>, kBuckets> buckets;
  for (const auto& inst : instances) {
    buckets[static_cast<std::size_t>(entropy_bucket(inst))].push_back(inst);
  }

  std::array<std::size_t, kBuckets> quota{};
  std::array<std::size_t, kBuckets> remainder{};
  std::size_t assigned = 0;
  for (std::size_t b = 0; b < kBuckets; ++b) {
    const std::size_t scaled = n * buckets[b].size();
    quota[b] = total == 0 ? 0 : scaled / total;
    remainder[b] = total == 0 ? 0 : scaled % total;
    assigned += quota[b];
  }
  std::array<std::size_t, kBuckets> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n; i = (i + 1) % kBuckets) {
    const std::size_t b = order[i];
    if (quota[b] < buckets[b].size()) {
      ++quota[b];
      ++assigned;
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<AnnotatedInstance> chosen;
  chosen.reserve(n);
  for (std::size_t b = 0; b < kBuckets; ++b) {
    auto& pool = buckets[b];
    std::sort(pool.begin(), pool.end(), id_less);
    for (std::size_t i = 0; i < quota[b]; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
      std::swap(pool[i], pool[j]);
      chosen.push_back(pool[i]);
    }
  }
  std::sort(chosen.begin(), chosen.end(), id_less);
  return chosen;
}

std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DatasetError("cannot read id list " + path.string());
  }
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r\n");
    ids.push_back(line.substr(first, last - first + 1));
  }
  return ids;
}

std::vector<AnnotatedInstance> select_by_ids(std::span<const AnnotatedInstance> instances,
                                             std::span<const std::string> ids) {
  std::map<std::string_view, const AnnotatedInstance*> by_id;
  for (const auto& inst : instances) by_id.emplace(inst.id, &inst);
  std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<AnnotatedInstance> out;
  for (const auto& id : wanted) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DatasetError("subset id '" + id + "' not in dataset");
    out.push_back(*it->second);
  }
  std::sort(out.begin(), out.end(), id_less);
  return out;
}

}  // namespace opindist
