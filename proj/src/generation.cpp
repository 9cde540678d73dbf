#include "kpa/generation.hpp"

#include <numeric>

#include "json.hpp"
#include "kpa/error.hpp"
#include "kpa/rng.hpp"
#include "kpa/text.hpp"

namespace kpa {
namespace {

using nlohmann::ordered_json;

void check_generation_template(const std::string& family, const PromptTemplate& tmpl) {
  if (tmpl.input_slots().size() != 1 || tmpl.answer_slot_count() != 1) {
    fail(ErrorCode::SpecInvalid,
         family + ": template " + tmpl.name() + " needs exactly one input slot and one answer slot");
  }
}

SlotId input_slot(const PromptTemplate& tmpl) { return tmpl.input_slots().front(); }

std::string generate_one(const Model& generator, const PromptTemplate& tmpl, const ArgKPRecord& record,
                         const DecodeOptions& decode) {
  const PromptInstance source = generation_source(tmpl, record, generator.checkpoint().mask_marker);
  try {
    return clean_intermediary(generator.generate(source.rendered_text, decode), generator.checkpoint());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyGeneration || e.code() == ErrorCode::EmptyText) {
      fail(ErrorCode::EmptyGeneration, "pair " + record.pair_id + ": empty generation");
    }
    throw;
  }
}

}  // namespace

GenerationTemplateFamily::GenerationTemplateFamily(std::string name, PromptTemplate positive, PromptTemplate negative)
    : name_(std::move(name)), positive_(std::move(positive)), negative_(std::move(negative)) {
  check_generation_template(name_, positive_);
  check_generation_template(name_, negative_);
  if (positive_.input_slots() != negative_.input_slots() || positive_.answer_slots() != negative_.answer_slots()) {
    fail(ErrorCode::SpecInvalid, name_ + ": positive and negative templates use different slots");
  }
}

const GenerationTemplateFamily& builtin_family(std::string_view name) {
  static const GenerationTemplateFamily t6("T6", builtin_template("T6.positive"), builtin_template("T6.negative"));
  static const GenerationTemplateFamily t7("T7", builtin_template("T7.positive"), builtin_template("T7.negative"));
  if (name == "T6") return t6;
  if (name == "T7") return t7;
  fail(ErrorCode::ConfigInvalid, "unknown generation template family '" + std::string(name) + "'");
}

const PromptTemplate& select_generation_template(const GenerationTemplateFamily& family, std::optional<int> label,
                                                 Phase phase) {
  if (phase == Phase::inference) return family.positive();
  if (!label) fail(ErrorCode::MissingLabelInTrainPhase, family.name() + ": train phase needs a label");
  if (*label != 0 && *label != 1) fail(ErrorCode::BadLabelValue, "label must be 0 or 1");
  return *label == 1 ? family.positive() : family.negative();
}

PromptInstance generation_source(const PromptTemplate& tmpl, const ArgKPRecord& record, std::string_view mask_marker) {
  return render(tmpl, {{input_slot(tmpl), record.argument}}, mask_marker);
}

ModelArtifact train_generator(const Runtime& runtime, const CheckpointRef& checkpoint,
                              const GenerationTemplateFamily& family, std::span<const ArgKPRecord> train,
                              std::span<const ArgKPRecord> dev, const TrainConfig& config,
                              const std::filesystem::path& output_dir) {
  if (checkpoint.family != ModelFamily::encoder_decoder) {
    fail(ErrorCode::WrongModelFamily, checkpoint.model_id + " is not an encoder-decoder checkpoint");
  }
  if (train.empty()) fail(ErrorCode::EmptySplit, "generator training split is empty");
  const auto examples = [&](std::span<const ArgKPRecord> records) {
    std::vector<GenerationExample> out;
    for (const auto& r : records) {
      const auto& tmpl = select_generation_template(family, r.label, Phase::train);
      out.push_back({generation_source(tmpl, r, checkpoint.mask_marker).rendered_text, r.key_point});
    }
    return out;
  };
  FinetuneRequest request;
  request.checkpoint = checkpoint;
  request.task = Task::conditional_generation;
  request.train = examples(train);
  request.dev = examples(dev);
  request.config = config;
  request.output_dir = output_dir;
  return runtime.finetune(request);
}

std::string clean_intermediary(std::string_view generated, const CheckpointRef& ref) {
  std::vector<std::string> tokens = surface_tokens(generated);
  std::erase_if(tokens, [&](const std::string& t) { return is_special_token(t, ref); });
  return add_full_stops(detokenize(tokens));
}

std::vector<Triple> generate_intermediaries(const Model& generator, const GenerationTemplateFamily& family,
                                            std::span<const ArgKPRecord> records, const DecodeOptions& decode,
                                            Phase phase) {
  std::vector<Triple> triples;
  triples.reserve(records.size());
  for (const auto& r : records) {
    const auto& tmpl = select_generation_template(family, r.label, phase);
    triples.push_back({r.pair_id, r.argument, generate_one(generator, tmpl, r, decode), r.key_point, r.label});
  }
  return triples;
}

std::string triples_jsonl(std::span<const Triple> triples, std::string_view family, std::string_view fingerprint) {
  std::string out;
  for (const auto& t : triples) {
    out += ordered_json{{"pair_id", t.pair_id},
                        {"argument", t.argument},
                        {"intermediary", t.intermediary},
                        {"key_point", t.key_point},
                        {"label", t.label},
                        {"family", family},
                        {"generator_fingerprint", fingerprint}}
               .dump() +
           "\n";
  }
  return out;
}

std::vector<Triple> parse_triples_jsonl(std::string_view text) {
  std::vector<Triple> out;
  for (const auto& line : split(text, '\n')) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("pair_id").get<std::string>(), j.at("argument").get<std::string>(),
                   j.at("intermediary").get<std::string>(), j.at("key_point").get<std::string>(),
                   j.at("label").get<int>()});
  }
  return out;
}

DivergenceReport negation_divergence(const Model& generator, const GenerationTemplateFamily& family,
                                     std::span<const ArgKPRecord> records, std::size_t sample_size,
                                     std::uint64_t seed, const DecodeOptions& decode, std::size_t max_examples) {
  if (records.empty()) fail(ErrorCode::EmptyInput, "negation diagnostic needs records");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));
  order.resize(std::min(sample_size == 0 ? records.size() : sample_size, records.size()));
  std::sort(order.begin(), order.end());

  DivergenceReport report;
  report.n_pairs = order.size();
  std::size_t exact = 0;
  double similarity = 0;
  for (const auto i : order) {
    const auto& r = records[i];
    const std::string pos = generate_one(generator, family.positive(), r, decode);
    const std::string neg = generate_one(generator, family.negative(), r, decode);
    if (normalize_for_comparison(pos) == normalize_for_comparison(neg)) ++exact;
    similarity += token_jaccard(pos, neg);
    if (report.examples.size() < max_examples) report.examples.push_back({r.pair_id, r.argument, pos, neg});
  }
  report.exact_match_fraction = static_cast<double>(exact) / static_cast<double>(report.n_pairs);
  report.normalized_similarity_mean = similarity / static_cast<double>(report.n_pairs);
  return report;
}

}  // namespace kpa
