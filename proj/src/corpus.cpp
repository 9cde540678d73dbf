#include <algorithm>
#include <charconv>
#include <unordered_map>
#include <unordered_set>

#include "kpa/corpus.hpp"
#include "kpa/csv.hpp"
#include "kpa/error.hpp"
#include "kpa/resources.hpp"
#include "kpa/text.hpp"

namespace kpa {
namespace {

namespace fs = std::filesystem;

std::optional<int> parse_int_field(std::string_view raw) {
  std::string_view s = trim(raw);
  if (s.starts_with('+')) s.remove_prefix(1);
  if (s.ends_with(".0")) s.remove_suffix(2);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

int parse_stance(std::string_view raw, const std::string& where) {
  const auto v = parse_int_field(raw);
  if (!v || (*v != 1 && *v != -1)) {
    fail(ErrorCode::BadStanceValue, where + ": stance '" + std::string(raw) + "' is not -1 or 1");
  }
  return *v;
}

int parse_label(std::string_view raw, const std::string& where) {
  const auto v = parse_int_field(raw);
  if (!v || (*v != 0 && *v != 1)) {
    fail(ErrorCode::BadLabelValue, where + ": label '" + std::string(raw) + "' is not 0 or 1");
  }
  return *v;
}

std::size_t require_column(const CsvTable& table, std::string_view name) {
  const auto col = table.column(name);
  if (!col) fail(ErrorCode::MissingColumn, table.source + ": header lacks column '" + std::string(name) + "'");
  return *col;
}

const std::string& field(const CsvTable& table, std::size_t row, std::size_t col) {
  const auto& fields = table.rows[row];
  if (col >= fields.size()) {
    fail(ErrorCode::MissingColumn, table.where(row) + ": row has " + std::to_string(fields.size()) +
                                       " fields, expected at least " + std::to_string(col + 1));
  }
  return fields[col];
}

void check_unique(std::unordered_set<std::string>& seen, const std::string& id, const std::string& where) {
  if (!seen.insert(id).second) fail(ErrorCode::DuplicatePairId, where + ": duplicate pair id '" + id + "'");
}

std::vector<ArgKPRecord> load_pair_csv(const fs::path& path) {
  const CsvTable table = read_csv(path);
  static constexpr std::array<std::string_view, 5> expected{"topic", "argument", "key_point", "stance", "label"};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i >= table.header.size() || table.header[i] != expected[i]) {
      fail(ErrorCode::MissingColumn, table.source + ": header column " + std::to_string(i + 1) + " must be '" +
                                         std::string(expected[i]) + "'");
    }
  }
  const bool has_pair_id = table.header.size() > 5 && table.header[5] == "pair_id";
  if (table.header.size() > (has_pair_id ? 6u : 5u)) {
    fail(ErrorCode::MalformedCsv, table.source + ": unexpected extra header columns");
  }

  std::vector<ArgKPRecord> records;
  records.reserve(table.rows.size());
  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string where = table.where(r);
    if (table.rows[r].size() != table.header.size()) {
      fail(ErrorCode::MissingColumn, where + ": row has " + std::to_string(table.rows[r].size()) +
                                         " fields, header has " + std::to_string(table.header.size()));
    }
    ArgKPRecord rec;
    rec.topic = field(table, r, 0);
    rec.argument = field(table, r, 1);
    rec.key_point = field(table, r, 2);
    rec.stance = parse_stance(field(table, r, 3), where);
    rec.label = parse_label(field(table, r, 4), where);
    rec.pair_id = has_pair_id ? std::string(trim(field(table, r, 5))) : "p" + std::to_string(r + 1);
    validate_record(rec, where);
    check_unique(seen, rec.pair_id, where);
    records.push_back(std::move(rec));
  }
  return records;
}

struct ThreeFileSet {
  fs::path arguments;
  fs::path key_points;
  fs::path labels;
};

std::vector<ThreeFileSet> discover_three_file_sets(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::FileNotFound, dir.string() + " is not a directory");
  if (fs::exists(dir / "arguments.csv")) {
    return {{dir / "arguments.csv", dir / "key_points.csv", dir / "labels.csv"}};
  }
  std::vector<std::string> parts;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("arguments_") && name.ends_with(".csv")) {
      parts.push_back(name.substr(10, name.size() - 14));
    }
  }
  if (parts.empty()) fail(ErrorCode::FileNotFound, dir.string() + ": no arguments*.csv files");
  std::sort(parts.begin(), parts.end());
  std::vector<ThreeFileSet> sets;
  for (const auto& part : parts) {
    sets.push_back({dir / ("arguments_" + part + ".csv"), dir / ("key_points_" + part + ".csv"),
                    dir / ("labels_" + part + ".csv")});
  }
  return sets;
}

struct TextEntry {
  std::string text;
  std::string topic;
  int stance;
};

std::unordered_map<std::string, TextEntry> load_text_table(const fs::path& path, std::string_view id_col,
                                                           std::string_view text_col) {
  const CsvTable table = read_csv(path);
  const std::size_t id = require_column(table, id_col);
  const std::size_t text = require_column(table, text_col);
  const std::size_t topic = require_column(table, "topic");
  const std::size_t stance = require_column(table, "stance");
  std::unordered_map<std::string, TextEntry> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string where = table.where(r);
    std::string key(trim(field(table, r, id)));
    if (key.empty()) fail(ErrorCode::EmptyField, where + ": empty " + std::string(id_col));
    TextEntry entry{field(table, r, text), field(table, r, topic), parse_stance(field(table, r, stance), where)};
    if (!out.emplace(key, std::move(entry)).second) {
      fail(ErrorCode::DuplicatePairId, where + ": duplicate " + std::string(id_col) + " '" + key + "'");
    }
  }
  return out;
}

std::vector<ArgKPRecord> load_three_file(const fs::path& dir) {
  std::vector<ArgKPRecord> records;
  std::unordered_set<std::string> seen;
  for (const auto& set : discover_three_file_sets(dir)) {
    const auto arguments = load_text_table(set.arguments, "arg_id", "argument");
    const auto key_points = load_text_table(set.key_points, "key_point_id", "key_point");
    const CsvTable labels = read_csv(set.labels);
    const std::size_t arg_col = require_column(labels, "arg_id");
    const std::size_t kp_col = require_column(labels, "key_point_id");
    const std::size_t label_col = require_column(labels, "label");
    for (std::size_t r = 0; r < labels.rows.size(); ++r) {
      const std::string where = labels.where(r);
      const std::string arg_id(trim(field(labels, r, arg_col)));
      const std::string kp_id(trim(field(labels, r, kp_col)));
      const auto arg = arguments.find(arg_id);
      if (arg == arguments.end()) fail(ErrorCode::DanglingReference, where + ": unknown arg_id '" + arg_id + "'");
      const auto kp = key_points.find(kp_id);
      if (kp == key_points.end()) {
        fail(ErrorCode::DanglingReference, where + ": unknown key_point_id '" + kp_id + "'");
      }
      ArgKPRecord rec;
      rec.pair_id = arg_id + "/" + kp_id;
      rec.topic = arg->second.topic;
      rec.argument = arg->second.text;
      rec.key_point = kp->second.text;
      rec.stance = arg->second.stance;
      rec.label = parse_label(field(labels, r, label_col), where);
      validate_record(rec, where);
      check_unique(seen, rec.pair_id, where);
      records.push_back(std::move(rec));
    }
  }
  return records;
}

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

}  // namespace

DataFormat parse_data_format(std::string_view name) {
  if (name == "pair_csv") return DataFormat::pair_csv;
  if (name == "three_file") return DataFormat::three_file;
  fail(ErrorCode::ConfigInvalid, "unknown data format '" + std::string(name) + "'");
}

std::string_view to_string(DataFormat format) {
  return format == DataFormat::pair_csv ? "pair_csv" : "three_file";
}

std::vector<ArgKPRecord> load_argkp(const fs::path& path, DataFormat format) {
  if (!fs::exists(path)) fail(ErrorCode::FileNotFound, path.string());
  return format == DataFormat::pair_csv ? load_pair_csv(path) : load_three_file(path);
}

void validate_record(const ArgKPRecord& record, std::string_view where) {
  const std::string at(where);
  if (record.stance != 1 && record.stance != -1) {
    fail(ErrorCode::BadStanceValue, at + ": stance " + std::to_string(record.stance));
  }
  if (record.label != 0 && record.label != 1) {
    fail(ErrorCode::BadLabelValue, at + ": label " + std::to_string(record.label));
  }
  if (trim(record.topic).empty()) fail(ErrorCode::EmptyField, at + ": empty topic");
  if (trim(record.argument).empty()) fail(ErrorCode::EmptyField, at + ": empty argument");
  if (trim(record.key_point).empty()) fail(ErrorCode::EmptyField, at + ": empty key_point");
  if (trim(record.pair_id).empty()) fail(ErrorCode::EmptyField, at + ": empty pair_id");
}

std::string add_full_stops(std::string_view text) {
  const std::string_view core = trim(text);
  if (core.empty()) fail(ErrorCode::EmptyText, "cannot terminate empty text");
  // Insert right after the last non-whitespace character.
  std::size_t end = text.find_last_not_of(" \t\n\r\f\v") + 1;
  std::size_t probe = end;
  while (probe > 0 && is_closer(text[probe - 1])) --probe;
  if (probe > 0 && is_terminal(text[probe - 1])) return std::string(text);
  std::string out(text.substr(0, end));
  out.push_back('.');
  out.append(text.substr(end));
  return out;
}

std::vector<ArgKPRecord> add_full_stops(std::span<const ArgKPRecord> records) {
  std::vector<ArgKPRecord> out(records.begin(), records.end());
  for (auto& rec : out) {
    rec.argument = add_full_stops(rec.argument);
    rec.key_point = add_full_stops(rec.key_point);
  }
  return out;
}

StopwordSet parse_stopwords(std::string_view text) {
  StopwordSet words;
  for (const auto& line : split(text, '\n')) {
    const auto word = trim(line);
    if (!word.empty() && !word.starts_with('#')) words.insert(to_lower_ascii(word));
  }
  return words;
}

const StopwordSet& english_stopwords() {
  static const StopwordSet words = parse_stopwords(resource("stopwords_en.txt"));
  return words;
}

const StopwordSet& stopwords_by_id(std::string_view id) {
  static const StopwordSet none;
  if (id == "english") return english_stopwords();
  if (id == "none") return none;
  fail(ErrorCode::SpecInvalid, "unknown stopword list '" + std::string(id) + "'");
}

std::vector<std::string> tokenize_and_filter(std::string_view text, const StopwordSet& stopwords) {
  if (trim(text).empty()) fail(ErrorCode::EmptyText, "cannot tokenize empty text");
  std::vector<std::string> tokens = word_tokens(text);
  std::erase_if(tokens, [&](const std::string& t) { return stopwords.contains(t); });
  return tokens;
}

}  // namespace kpa
