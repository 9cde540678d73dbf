#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "json.hpp"
#include "kpa/corpus.hpp"
#include "kpa/csv.hpp"
#include "kpa/error.hpp"
#include "kpa/rng.hpp"
#include "kpa/text.hpp"

namespace kpa {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
__extension__ using u128 = unsigned __int128;

std::vector<std::string> sorted_topics(std::span<const ArgKPRecord> records) {
  std::set<std::string> topics;
  for (const auto& r : records) topics.insert(r.topic);
  return {topics.begin(), topics.end()};
}

// Ratios in integer micro-percent so quotas are exact.
std::array<std::uint64_t, 3> ratio_units(SplitRatios ratios) {
  const std::array<double, 3> r{ratios.train, ratios.dev, ratios.test};
  std::array<std::uint64_t, 3> units{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!std::isfinite(r[i]) || r[i] < 0) fail(ErrorCode::BadRatios, "ratios must be finite and non-negative");
    units[i] = static_cast<std::uint64_t>(std::llround(r[i] * 1e6));
  }
  return units;
}

void check_ratios(SplitRatios ratios) {
  ratio_units(ratios);
  const double sum = ratios.train + ratios.dev + ratios.test;
  if (std::abs(sum - 100.0) > 0.5) {
    fail(ErrorCode::BadRatios, "ratios sum to " + std::to_string(sum) + ", expected 100");
  }
}

ordered_json counts_json(std::string_view name, const SplitCounts& c) {
  return ordered_json{{"split", name},           {"total", c.total},     {"matching", c.matching},
                      {"non_matching", c.non_matching}, {"topics", c.topics}};
}

}  // namespace

std::string_view to_string(SplitMode mode) { return mode == SplitMode::cross_domain ? "cross_domain" : "in_domain"; }

std::string_view to_string(SplitName name) {
  switch (name) {
    case SplitName::train: return "train";
    case SplitName::dev: return "dev";
    case SplitName::test: return "test";
  }
  return "?";
}

SplitMode parse_split_mode(std::string_view name) {
  if (name == "cross_domain") return SplitMode::cross_domain;
  if (name == "in_domain") return SplitMode::in_domain;
  fail(ErrorCode::ConfigInvalid, "unknown split mode '" + std::string(name) + "'");
}

SplitName parse_split_name(std::string_view name) {
  if (name == "train") return SplitName::train;
  if (name == "dev") return SplitName::dev;
  if (name == "test") return SplitName::test;
  fail(ErrorCode::ConfigInvalid, "unknown split name '" + std::string(name) + "'");
}

const std::vector<ArgKPRecord>& SplitTriple::part(SplitName name) const {
  switch (name) {
    case SplitName::train: return train;
    case SplitName::dev: return dev;
    case SplitName::test: return test;
  }
  return train;
}

std::vector<ArgKPRecord>& SplitTriple::part(SplitName name) {
  return const_cast<std::vector<ArgKPRecord>&>(std::as_const(*this).part(name));
}

SplitTriple split_cross_domain(std::span<const ArgKPRecord> records, TopicCounts counts, std::uint64_t seed,
                               const std::optional<TopicAssignment>& fixed_assignment) {
  const std::vector<std::string> topics = sorted_topics(records);
  if (counts.train + counts.dev + counts.test != topics.size()) {
    fail(ErrorCode::TopicCountMismatch,
         std::to_string(counts.train) + "+" + std::to_string(counts.dev) + "+" + std::to_string(counts.test) +
             " topics requested, dataset has " + std::to_string(topics.size()));
  }

  TopicAssignment assignment;
  if (fixed_assignment) {
    std::array<std::size_t, 3> per_split{};
    for (const auto& [topic, split] : *fixed_assignment) {
      if (!std::binary_search(topics.begin(), topics.end(), topic)) {
        fail(ErrorCode::UnknownTopicInAssignment, "'" + topic + "' does not occur in the dataset");
      }
      ++per_split[static_cast<std::size_t>(split)];
    }
    for (const auto& topic : topics) {
      if (!fixed_assignment->contains(topic)) {
        fail(ErrorCode::TopicCountMismatch, "assignment does not cover topic '" + topic + "'");
      }
    }
    if (per_split != std::array<std::size_t, 3>{counts.train, counts.dev, counts.test}) {
      fail(ErrorCode::TopicCountMismatch, "assignment topic counts differ from the requested counts");
    }
    assignment = *fixed_assignment;
  } else {
    std::vector<std::string> order = topics;
    Rng rng(seed);
    rng.shuffle(std::span(order));
    for (std::size_t i = 0; i < order.size(); ++i) {
      const SplitName split = i < counts.train               ? SplitName::train
                              : i < counts.train + counts.dev ? SplitName::dev
                                                              : SplitName::test;
      assignment.emplace(order[i], split);
    }
  }

  SplitTriple out;
  out.mode = SplitMode::cross_domain;
  out.seed = seed;
  for (const auto& rec : records) out.part(assignment.at(rec.topic)).push_back(rec);
  out.topic_assignment = std::move(assignment);
  return out;
}

std::array<std::size_t, 3> allocate_largest_remainder(std::size_t n, SplitRatios ratios) {
  const auto units = ratio_units(ratios);
  const std::uint64_t total_units = units[0] + units[1] + units[2];
  if (total_units == 0) fail(ErrorCode::BadRatios, "all ratios are zero");

  std::array<std::size_t, 3> alloc{};
  std::array<u128, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const u128 scaled = static_cast<u128>(n) * units[i];
    alloc[i] = static_cast<std::size_t>(scaled / total_units);
    remainder[i] = scaled % total_units;
    assigned += alloc[i];
  }
  // Remainder records: largest fractional part first, ties train -> test -> dev.
  std::array<std::size_t, 3> order{0, 2, 1};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++alloc[order[k]];
  return alloc;
}

SplitTriple split_in_domain(std::span<const ArgKPRecord> records, SplitRatios ratios, std::uint64_t seed) {
  check_ratios(ratios);
  std::map<std::string, std::vector<std::size_t>> by_topic;
  for (std::size_t i = 0; i < records.size(); ++i) by_topic[records[i].topic].push_back(i);

  std::vector<SplitName> destination(records.size(), SplitName::train);
  Rng rng(seed);
  for (auto& [topic, indices] : by_topic) {
    rng.shuffle(std::span(indices));
    const auto alloc = allocate_largest_remainder(indices.size(), ratios);
    std::size_t k = 0;
    for (const SplitName split : kSplitNames) {
      for (std::size_t c = 0; c < alloc[static_cast<std::size_t>(split)]; ++c) destination[indices[k++]] = split;
    }
  }

  SplitTriple out;
  out.mode = SplitMode::in_domain;
  out.seed = seed;
  for (std::size_t i = 0; i < records.size(); ++i) out.part(destination[i]).push_back(records[i]);
  return out;
}

SplitCounts count_records(std::span<const ArgKPRecord> records) {
  SplitCounts c;
  std::set<std::string_view> topics;
  for (const auto& r : records) {
    ++c.total;
    (r.label == 1 ? c.matching : c.non_matching)++;
    topics.insert(r.topic);
  }
  c.topics = topics.size();
  return c;
}

double SplitStats::percent(SplitName name) const {
  return overall.total == 0 ? 0.0 : 100.0 * static_cast<double>((*this)[name].total) / static_cast<double>(overall.total);
}

double SplitStats::matching_percent(SplitName name) const {
  const auto& c = (*this)[name];
  return c.total == 0 ? 0.0 : 100.0 * static_cast<double>(c.matching) / static_cast<double>(c.total);
}

SplitStats split_stats(const SplitTriple& split) {
  SplitStats stats;
  std::vector<ArgKPRecord> all;
  for (const SplitName name : kSplitNames) {
    const auto& part = split.part(name);
    stats.splits[static_cast<std::size_t>(name)] = count_records(part);
    all.insert(all.end(), part.begin(), part.end());
  }
  stats.overall = count_records(all);
  return stats;
}

std::string stats_jsonl(const SplitStats& stats) {
  std::string out;
  for (const SplitName name : kSplitNames) out += counts_json(to_string(name), stats[name]).dump() + "\n";
  out += counts_json("all", stats.overall).dump() + "\n";
  return out;
}

void write_split_manifests(const SplitTriple& split, const SplitParameters& params, const fs::path& dir) {
  fs::create_directories(dir);
  for (const SplitName name : kSplitNames) {
    std::string ids;
    for (const auto& rec : split.part(name)) ids += rec.pair_id + "\n";
    write_text_file(dir / (std::string(to_string(name)) + ".ids"), ids);
  }
  write_text_file(dir / "stats.jsonl", stats_jsonl(split_stats(split)));

  ordered_json meta{{"mode", to_string(params.mode)}, {"seed", params.seed}};
  if (params.mode == SplitMode::in_domain) {
    meta["ratios"] = {params.ratios.train, params.ratios.dev, params.ratios.test};
  } else {
    meta["topics"] = {params.topics.train, params.topics.dev, params.topics.test};
  }
  if (split.topic_assignment) {
    ordered_json assignment = ordered_json::object();
    for (const auto& [topic, name] : *split.topic_assignment) assignment[topic] = to_string(name);
    meta["topic_assignment"] = std::move(assignment);
  }
  write_text_file(dir / "split.json", meta.dump(2) + "\n");
}

SplitParameters read_split_parameters(const fs::path& dir) {
  const fs::path meta_path = dir / "split.json";
  if (!fs::exists(meta_path)) fail(ErrorCode::MissingSplit, "no prepared split at " + dir.string());
  SplitParameters params;
  try {
    const auto meta = ordered_json::parse(read_text_file(meta_path));
    params.mode = parse_split_mode(meta.at("mode").get<std::string>());
    params.seed = meta.at("seed").get<std::uint64_t>();
    if (meta.contains("ratios")) {
      const auto& r = meta["ratios"];
      params.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
    }
    if (meta.contains("topics")) {
      const auto& t = meta["topics"];
      params.topics = {t.at(0).get<std::size_t>(), t.at(1).get<std::size_t>(), t.at(2).get<std::size_t>()};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MissingSplit, meta_path.string() + ": " + e.what());
  }
  return params;
}

SplitTriple read_split_manifests(std::span<const ArgKPRecord> records, const fs::path& dir) {
  const SplitParameters params = read_split_parameters(dir);
  std::unordered_map<std::string_view, const ArgKPRecord*> by_id;
  for (const auto& rec : records) by_id.emplace(rec.pair_id, &rec);

  SplitTriple out;
  out.mode = params.mode;
  out.seed = params.seed;
  for (const SplitName name : kSplitNames) {
    const fs::path path = dir / (std::string(to_string(name)) + ".ids");
    if (!fs::exists(path)) fail(ErrorCode::MissingSplit, path.string() + " is missing");
    for (const auto& line : split(read_text_file(path), '\n')) {
      const auto id = trim(line);
      if (id.empty()) continue;
      const auto it = by_id.find(id);
      if (it == by_id.end()) {
        fail(ErrorCode::MissingSplit, path.string() + ": pair id '" + std::string(id) + "' not in dataset");
      }
      out.part(name).push_back(*it->second);
    }
  }
  return out;
}

}  // namespace kpa
