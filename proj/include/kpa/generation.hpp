#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kpa/corpus.hpp"
#include "kpa/evaluation.hpp"
#include "kpa/prompt.hpp"
#include "kpa/runtime.hpp"

namespace kpa {

/// A positive/negative template pair over one input slot and one answer slot.
class GenerationTemplateFamily {
 public:
  GenerationTemplateFamily(std::string name, PromptTemplate positive, PromptTemplate negative);

  const std::string& name() const { return name_; }
  const PromptTemplate& positive() const { return positive_; }
  const PromptTemplate& negative() const { return negative_; }

 private:
  std::string name_;
  PromptTemplate positive_;
  PromptTemplate negative_;
};

/// T6 ("This means" / "This does not mean") or T7 ("correct" / "wrong").
const GenerationTemplateFamily& builtin_family(std::string_view name);

enum class Phase { train, inference };

/// Train phase picks the positive template for label 1 and the negative one
/// for label 0; inference always uses the positive template.
const PromptTemplate& select_generation_template(const GenerationTemplateFamily& family, std::optional<int> label,
                                                 Phase phase);

/// Renders the generator source for a record (argument bound to the input
/// slot, answer slot masked).
PromptInstance generation_source(const PromptTemplate& tmpl, const ArgKPRecord& record, std::string_view mask_marker);

struct Triple {
  std::string pair_id;
  std::string argument;
  std::string intermediary;
  std::string key_point;
  int label = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

/// Fine-tunes a conditional generator on label-conditioned sources with the
/// gold key point as target.
ModelArtifact train_generator(const Runtime& runtime, const CheckpointRef& checkpoint,
                              const GenerationTemplateFamily& family, std::span<const ArgKPRecord> train,
                              std::span<const ArgKPRecord> dev, const TrainConfig& config,
                              const std::filesystem::path& output_dir);

/// Generated text with special tokens removed and a terminal full stop.
std::string clean_intermediary(std::string_view generated, const CheckpointRef& ref);

/// One triple per record. The inference phase (default) renders every record
/// through the positive template; the train phase conditions on the label.
std::vector<Triple> generate_intermediaries(const Model& generator, const GenerationTemplateFamily& family,
                                            std::span<const ArgKPRecord> records, const DecodeOptions& decode,
                                            Phase phase = Phase::inference);

std::string triples_jsonl(std::span<const Triple> triples, std::string_view family, std::string_view fingerprint);
std::vector<Triple> parse_triples_jsonl(std::string_view text);

/// Generates each sampled record once through the positive and once through
/// the negative template and measures how alike the outputs are.
DivergenceReport negation_divergence(const Model& generator, const GenerationTemplateFamily& family,
                                     std::span<const ArgKPRecord> records, std::size_t sample_size,
                                     std::uint64_t seed, const DecodeOptions& decode, std::size_t max_examples = 5);

}  // namespace kpa
