#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kpa {

/// One labeled (argument, key point) pair.
struct ArgKPRecord {
  std::string pair_id;
  std::string topic;
  std::string argument;
  std::string key_point;
  int stance = 1;  // +1 supports the topic, -1 opposes it
  int label = 0;   // 1 matching, 0 non-matching

  friend bool operator==(const ArgKPRecord&, const ArgKPRecord&) = default;
};

enum class DataFormat {
  pair_csv,    // topic,argument,key_point,stance,label[,pair_id]
  three_file,  // arguments / key points / labels files joined on ids
};

DataFormat parse_data_format(std::string_view name);
std::string_view to_string(DataFormat format);

/// Loads and validates a dataset. For three_file, `path` is a directory that
/// holds either arguments.csv/key_points.csv/labels.csv or any number of
/// arguments_<part>.csv/key_points_<part>.csv/labels_<part>.csv triples
/// (parts are read in lexicographic order). Record order is file order.
std::vector<ArgKPRecord> load_argkp(const std::filesystem::path& path, DataFormat format);

/// Throws the matching ErrorCode if `record` breaks a field invariant.
void validate_record(const ArgKPRecord& record, std::string_view where);

/// Appends '.' unless the text (ignoring trailing whitespace and closing
/// quotes/brackets) already ends in '.', '!' or '?'.
std::string add_full_stops(std::string_view text);

/// Applies add_full_stops to every argument and key point.
std::vector<ArgKPRecord> add_full_stops(std::span<const ArgKPRecord> records);

using StopwordSet = std::set<std::string, std::less<>>;

/// The bundled English list (data/stopwords_en.txt).
const StopwordSet& english_stopwords();
StopwordSet parse_stopwords(std::string_view text);
/// "english" or "none".
const StopwordSet& stopwords_by_id(std::string_view id);

std::vector<std::string> tokenize_and_filter(std::string_view text, const StopwordSet& stopwords);

// ---------------------------------------------------------------------------
// Splitting

enum class SplitMode { cross_domain, in_domain };
enum class SplitName { train = 0, dev = 1, test = 2 };

inline constexpr std::array<SplitName, 3> kSplitNames{SplitName::train, SplitName::dev, SplitName::test};

std::string_view to_string(SplitMode mode);
std::string_view to_string(SplitName name);
SplitMode parse_split_mode(std::string_view name);
SplitName parse_split_name(std::string_view name);

using TopicAssignment = std::map<std::string, SplitName>;

struct SplitTriple {
  std::vector<ArgKPRecord> train;
  std::vector<ArgKPRecord> dev;
  std::vector<ArgKPRecord> test;
  SplitMode mode = SplitMode::in_domain;
  std::uint64_t seed = 0;
  std::optional<TopicAssignment> topic_assignment;

  const std::vector<ArgKPRecord>& part(SplitName name) const;
  std::vector<ArgKPRecord>& part(SplitName name);
};

struct TopicCounts {
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
};

/// Splits by topic. Without a fixed assignment the sorted topic list is
/// shuffled with `seed`; the first `counts.train` topics go to train, the
/// next `counts.dev` to dev, the rest to test. Records keep input order.
SplitTriple split_cross_domain(std::span<const ArgKPRecord> records, TopicCounts counts, std::uint64_t seed,
                               const std::optional<TopicAssignment>& fixed_assignment = std::nullopt);

/// Percentages; must sum to 100 within 0.5.
struct SplitRatios {
  double train = 71;
  double dev = 12;
  double test = 17;
};

/// Per-topic proportional split. Each topic's records are shuffled, then cut
/// with largest-remainder rounding (ties go train, then test, then dev). A
/// split whose exact per-topic quota is at least one record is guaranteed to
/// contain that topic. Records keep input order within each split.
SplitTriple split_in_domain(std::span<const ArgKPRecord> records, SplitRatios ratios, std::uint64_t seed);

/// Largest-remainder allocation of `n` items; exposed for tests.
std::array<std::size_t, 3> allocate_largest_remainder(std::size_t n, SplitRatios ratios);

struct SplitCounts {
  std::size_t total = 0;
  std::size_t matching = 0;
  std::size_t non_matching = 0;
  std::size_t topics = 0;

  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

struct SplitStats {
  std::array<SplitCounts, 3> splits{};  // indexed by SplitName
  SplitCounts overall;

  const SplitCounts& operator[](SplitName name) const { return splits[static_cast<std::size_t>(name)]; }
  /// Share of all records that landed in `name`, in percent.
  double percent(SplitName name) const;
  double matching_percent(SplitName name) const;

  friend bool operator==(const SplitStats&, const SplitStats&) = default;
};

SplitCounts count_records(std::span<const ArgKPRecord> records);
SplitStats split_stats(const SplitTriple& split);

/// Split manifest directory: train.ids / dev.ids / test.ids (one pair_id per
/// line), stats.jsonl, and split.json describing mode, seed and parameters.
struct SplitParameters {
  SplitMode mode = SplitMode::in_domain;
  std::uint64_t seed = 0;
  SplitRatios ratios;
  TopicCounts topics;
};

void write_split_manifests(const SplitTriple& split, const SplitParameters& params,
                           const std::filesystem::path& dir);
std::string stats_jsonl(const SplitStats& stats);
SplitParameters read_split_parameters(const std::filesystem::path& dir);
/// Rebuilds a SplitTriple from manifests; every listed id must exist in `records`.
SplitTriple read_split_manifests(std::span<const ArgKPRecord> records, const std::filesystem::path& dir);

}  // namespace kpa
