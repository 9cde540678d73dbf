#include "kpa/experiment_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "kpa/csv.hpp"
#include "kpa/digest.hpp"
#include "kpa/error.hpp"
#include "kpa/text.hpp"

namespace kpa {
namespace {

namespace fs = std::filesystem;
using Section = std::map<std::string, std::string>;
using Sections = std::map<std::string, Section>;

const std::set<std::string>& train_keys() {
  static const std::set<std::string> keys{"learning_rate", "soft_prompt_learning_rate", "epochs", "optimizer",
                                          "batch_size", "max_input_length", "max_steps", "seed"};
  return keys;
}

std::set<std::string> allowed_keys(const std::string& section) {
  std::set<std::string> keys;
  if (section == "experiment") keys = {"name", "approach", "runtime", "threshold_learning", "output_dir"};
  if (section == "data") keys = {"path", "format", "full_stops", "split_dir"};
  if (section == "split") keys = {"mode", "seed", "ratios", "topics", "assignment"};
  if (section == "matcher") keys = {"checkpoint", "template", "verbalizer"};
  if (section == "generator") keys = {"checkpoint", "family", "decode", "beam_width", "max_new_tokens"};
  if (section == "classifier") keys = {"kind", "checkpoint", "max_vocabulary", "ngram_min", "ngram_max", "stopwords"};
  if (section == "matcher" || section == "generator" || section == "classifier") {
    keys.insert(train_keys().begin(), train_keys().end());
  }
  return keys;
}

[[noreturn]] void bad(const std::string& where, const std::string& message) {
  fail(ErrorCode::ConfigInvalid, where + ": " + message);
}

class Reader {
 public:
  Reader(const Sections& sections, std::string name) : name_(std::move(name)) {
    const auto it = sections.find(name_);
    if (it != sections.end()) section_ = &it->second;
  }

  bool present() const { return section_ != nullptr; }

  std::optional<std::string> get(const std::string& key) const {
    if (!section_) return std::nullopt;
    const auto it = section_->find(key);
    if (it == section_->end()) return std::nullopt;
    return it->second;
  }

  std::string require(const std::string& key) const {
    auto v = get(key);
    if (!v || v->empty()) bad(name_ + "." + key, "is required");
    return *v;
  }

  template <typename Int>
  std::optional<Int> integer(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    Int out{};
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) bad(name_ + "." + key, "expected an integer, got '" + *v + "'");
    return out;
  }

  std::optional<double> real(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    std::istringstream in(*v);
    in.imbue(std::locale::classic());
    double out = 0;
    in >> out;
    if (in.fail() || !in.eof()) bad(name_ + "." + key, "expected a number, got '" + *v + "'");
    return out;
  }

  std::optional<bool> flag(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    const std::string s = to_lower_ascii(*v);
    if (s == "on" || s == "true" || s == "yes" || s == "1") return true;
    if (s == "off" || s == "false" || s == "no" || s == "0") return false;
    bad(name_ + "." + key, "expected on/off, got '" + *v + "'");
  }

  std::vector<double> reals(const std::string& key, std::size_t count) const {
    std::vector<double> out;
    const auto v = get(key);
    if (!v) return out;
    for (const auto& part : split(*v, ',')) {
      std::istringstream in{std::string(trim(part))};
      in.imbue(std::locale::classic());
      double x = 0;
      in >> x;
      if (in.fail() || !in.eof()) bad(name_ + "." + key, "expected numbers, got '" + *v + "'");
      out.push_back(x);
    }
    if (out.size() != count) bad(name_ + "." + key, "expected " + std::to_string(count) + " comma-separated values");
    return out;
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
  const Section* section_ = nullptr;
};

TrainConfig read_train_config(const Reader& r, const CheckpointRef& ref, bool soft_prompt, std::uint64_t seed) {
  TrainConfig c = default_train_config(ref, soft_prompt);
  c.seed = seed;
  if (auto v = r.real("learning_rate")) c.learning_rate = *v;
  if (auto v = r.real("soft_prompt_learning_rate")) c.soft_prompt_learning_rate = *v;
  if (auto v = r.integer<int>("epochs")) c.epochs = *v;
  if (auto v = r.get("optimizer")) c.optimizer_name = *v;
  if (auto v = r.integer<int>("batch_size")) c.batch_size = *v;
  if (auto v = r.integer<int>("max_input_length")) c.max_input_length = *v;
  if (auto v = r.integer<std::int64_t>("max_steps")) c.max_steps = *v;
  if (auto v = r.integer<std::uint64_t>("seed")) c.seed = *v;
  try {
    validate(c);
  } catch (const Error& e) {
    bad(r.name(), e.what());
  }
  return c;
}

Sections parse_sections(std::string_view text) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorCode::ConfigInvalid, std::string("config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  Sections sections;
  for (const auto& [name, section] : tree) {
    if (section.empty()) fail(ErrorCode::ConfigInvalid, "config: key '" + name + "' outside a section");
    for (const auto& [key, value] : section) sections[name][key] = std::string(trim(value.data()));
  }
  return sections;
}

std::string canonical(const Sections& sections) {
  std::string out;
  for (const auto& [name, section] : sections) {
    if (!out.empty()) out += "\n";
    out += "[" + name + "]\n";
    for (const auto& [key, value] : section) out += key + " = " + value + "\n";
  }
  return out;
}

}  // namespace

std::string_view to_string(Approach approach) {
  switch (approach) {
    case Approach::baseline: return "baseline";
    case Approach::approach1: return "approach1";
    case Approach::approach2: return "approach2";
  }
  return "?";
}

Approach parse_approach(std::string_view name) {
  if (name == "baseline") return Approach::baseline;
  if (name == "approach1") return Approach::approach1;
  if (name == "approach2") return Approach::approach2;
  fail(ErrorCode::ConfigInvalid, "unknown approach '" + std::string(name) + "'");
}

std::pair<std::string, std::string> parse_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq || dot == 0 || dot + 1 == eq) {
    fail(ErrorCode::ConfigInvalid, "override must look like section.key=value, got '" + std::string(assignment) + "'");
  }
  return {std::string(trim(assignment.substr(0, eq))), std::string(trim(assignment.substr(eq + 1)))};
}

std::string ExperimentConfig::fingerprint() const { return sha256_hex(canonical_text); }

DataFormat infer_data_format(const fs::path& path) {
  return fs::is_directory(path) ? DataFormat::three_file : DataFormat::pair_csv;
}

TopicAssignment read_topic_assignment(const fs::path& path) {
  const CsvTable table = read_csv(path);
  const auto topic_opt = table.column("topic");
  const auto split_opt = table.column("split");
  if (!topic_opt || !split_opt) fail(ErrorCode::MissingColumn, path.string() + " needs columns topic,split");
  const std::size_t topic_col = *topic_opt;
  const std::size_t split_col = *split_opt;
  TopicAssignment assignment;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (!assignment.emplace(row[topic_col], parse_split_name(row[split_col])).second) {
      fail(ErrorCode::ConfigInvalid, table.where(i) + ": topic '" + row[topic_col] + "' assigned twice");
    }
  }
  return assignment;
}

ExperimentConfig parse_experiment_config(std::string_view text, const ConfigOverrides& overrides) {
  Sections sections = parse_sections(text);
  for (const auto& [path, value] : overrides) {
    const auto dot = path.find('.');
    if (dot == std::string::npos) fail(ErrorCode::ConfigInvalid, "override '" + path + "' lacks a section");
    sections[path.substr(0, dot)][path.substr(dot + 1)] = value;
  }
  for (const auto& [name, section] : sections) {
    const auto keys = allowed_keys(name);
    if (keys.empty()) fail(ErrorCode::ConfigInvalid, "config: unknown section [" + name + "]");
    for (const auto& [key, _] : section) {
      if (!keys.contains(key)) bad(name + "." + key, "unknown key");
    }
  }

  ExperimentConfig cfg;
  cfg.canonical_text = canonical(sections);

  const Reader exp(sections, "experiment");
  cfg.name = exp.require("name");
  if (cfg.name.find_first_of("/\\") != std::string::npos) bad("experiment.name", "must not contain path separators");
  cfg.approach = parse_approach(exp.require("approach"));
  if (auto v = exp.get("runtime")) cfg.runtime = *v;
  if (auto v = exp.flag("threshold_learning")) cfg.threshold_learning = *v;
  if (auto v = exp.get("output_dir")) cfg.output_dir = *v;

  const Reader data(sections, "data");
  if (auto v = data.get("path"); v && !v->empty()) cfg.data_path = *v;
  if (auto v = data.get("format")) cfg.data_format = parse_data_format(*v);
  if (auto v = data.flag("full_stops")) cfg.full_stops = *v;
  if (auto v = data.get("split_dir"); v && !v->empty()) cfg.split_dir = *v;

  const Reader split(sections, "split");
  cfg.split.mode = parse_split_mode(split.get("mode").value_or("in_domain"));
  cfg.split.seed = split.integer<std::uint64_t>("seed").value_or(42);
  if (const auto r = split.reals("ratios", 3); !r.empty()) cfg.split.ratios = {r[0], r[1], r[2]};
  if (const auto t = split.reals("topics", 3); !t.empty()) {
    for (const double x : t) {
      if (x < 0 || x != static_cast<double>(static_cast<std::size_t>(x))) bad("split.topics", "counts must be whole");
    }
    cfg.split.topics = {static_cast<std::size_t>(t[0]), static_cast<std::size_t>(t[1]), static_cast<std::size_t>(t[2])};
  }
  if (auto v = split.get("assignment"); v && !v->empty()) cfg.topic_assignment = *v;

  const Reader matcher(sections, "matcher");
  const Reader generator(sections, "generator");
  const Reader classifier(sections, "classifier");
  const std::uint64_t seed = cfg.split.seed;

  if (cfg.approach == Approach::approach2) {
    if (matcher.present()) bad("matcher", "approach2 uses [generator] and [classifier], not [matcher]");
    if (!generator.present() || !classifier.present()) bad("config", "approach2 needs [generator] and [classifier]");

    GeneratorSpec g;
    g.checkpoint = checkpoint_by_id(generator.require("checkpoint"));
    g.family = generator.get("family").value_or("T6");
    builtin_family(g.family);
    const std::string decode = generator.get("decode").value_or("beam");
    if (decode == "greedy") g.decode.strategy = DecodeOptions::Strategy::greedy;
    else if (decode == "beam") g.decode.strategy = DecodeOptions::Strategy::beam;
    else bad("generator.decode", "expected greedy or beam");
    if (auto v = generator.integer<int>("beam_width")) g.decode.beam_width = *v;
    if (auto v = generator.integer<int>("max_new_tokens")) g.decode.max_new_tokens = *v;
    if (g.decode.beam_width < 1 || g.decode.max_new_tokens < 1) bad("generator", "beam_width and max_new_tokens must be >= 1");
    g.train_config = read_train_config(generator, g.checkpoint, false, seed);
    cfg.generator = g;

    TripleClassifierSpec c;
    c.kind = parse_triple_classifier_kind(classifier.require("kind"));
    if (is_classical(c.kind)) {
      for (const auto& key : train_keys()) {
        if (classifier.get(key)) bad("classifier." + key, "only applies to the plm classifier");
      }
      if (classifier.get("checkpoint")) bad("classifier.checkpoint", "only applies to the plm classifier");
      FeaturizerConfig f;
      if (auto v = classifier.integer<std::size_t>("max_vocabulary")) f.max_vocabulary = *v;
      if (auto v = classifier.integer<int>("ngram_min")) f.ngram_min = *v;
      if (auto v = classifier.integer<int>("ngram_max")) f.ngram_max = *v;
      if (auto v = classifier.get("stopwords")) f.stopwords = *v;
      c.featurizer = f;
    } else {
      for (const auto* key : {"max_vocabulary", "ngram_min", "ngram_max", "stopwords"}) {
        if (classifier.get(key)) bad(std::string("classifier.") + key, "only applies to classical classifiers");
      }
      c.checkpoint = checkpoint_by_id(classifier.require("checkpoint"));
      c.train_config = read_train_config(classifier, *c.checkpoint, false, seed);
    }
    try {
      validate(c);
    } catch (const Error& e) {
      bad("classifier", e.what());
    }
    cfg.classifier = c;
  } else {
    if (generator.present() || classifier.present()) {
      bad("config", std::string(to_string(cfg.approach)) + " uses [matcher] only");
    }
    if (!matcher.present()) bad("config", std::string(to_string(cfg.approach)) + " needs a [matcher] section");
    MatcherSpec m;
    m.name = cfg.name;
    m.checkpoint = checkpoint_by_id(matcher.require("checkpoint"));
    if (cfg.approach == Approach::baseline) {
      m.kind = MatcherKind::baseline;
      if (matcher.get("template") || matcher.get("verbalizer")) bad("matcher", "baseline takes no template or verbalizer");
    } else {
      m.kind = MatcherKind::prompted;
      m.prompt_template = resolve_template(matcher.require("template"));
      const auto verbalizer = matcher.get("verbalizer");
      m.verbalizer = verbalizer ? verbalizer_by_name(*verbalizer) : verbalizer_for_template(m.prompt_template->name());
    }
    const bool soft = m.prompt_template && m.prompt_template->soft_token_count() > 0;
    m.train_config = read_train_config(matcher, m.checkpoint, soft, seed);
    try {
      validate(m);
    } catch (const Error& e) {
      bad("matcher", e.what());
    }
    cfg.matcher = m;
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path, const ConfigOverrides& overrides) {
  if (!fs::exists(path)) fail(ErrorCode::ConfigInvalid, "config file " + path.string() + " does not exist");
  return parse_experiment_config(read_text_file(path), overrides);
}

}  // namespace kpa
