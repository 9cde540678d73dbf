#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kpa/evaluation.hpp"
#include "kpa/generation.hpp"
#include "kpa/learners.hpp"
#include "kpa/runtime.hpp"
#include "kpa/tfidf.hpp"

namespace kpa {

enum class TripleClassifierKind { naive_bayes, svm, decision_tree, plm };

std::string_view to_string(TripleClassifierKind kind);
TripleClassifierKind parse_triple_classifier_kind(std::string_view name);
bool is_classical(TripleClassifierKind kind);

struct TripleClassifierSpec {
  TripleClassifierKind kind = TripleClassifierKind::naive_bayes;
  std::optional<CheckpointRef> checkpoint;       // plm only
  std::optional<FeaturizerConfig> featurizer;    // classical only
  std::optional<TrainConfig> train_config;       // plm only
};

/// SpecInvalid unless exactly the fields the kind needs are present.
void validate(const TripleClassifierSpec& spec);

inline constexpr std::string_view kClassicalSeparator = " | ";

/// argument | intermediary | key point
std::string classical_text(const Triple& triple);
/// (argument <sep> intermediary, key point) for a pair classifier.
PairExample plm_example(const Triple& triple, const CheckpointRef& checkpoint);

struct Featurized {
  std::vector<SparseRow> rows;
  TfidfVectorizer vectorizer;
};

/// Fits the featurizer on the triples and returns their rows.
Featurized featurize_triples(std::span<const Triple> triples, const FeaturizerConfig& config);
/// Rows under an already fitted vocabulary.
std::vector<SparseRow> featurize_triples(std::span<const Triple> triples, const TfidfVectorizer& vectorizer);

struct SparseFeatureModel {
  TfidfVectorizer vectorizer;
  Learner learner;
};

struct FittedTripleClassifier {
  TripleClassifierSpec spec;
  std::shared_ptr<const SparseFeatureModel> classical;
  std::optional<ModelArtifact> artifact;
  std::shared_ptr<const Model> plm;

  bool fitted() const { return classical || plm; }
  /// Vocabulary hash for classical models, weights hash for the plm path.
  std::string fingerprint() const;
};

/// Classical kinds fit on a canonical ordering of the training triples, so
/// the result does not depend on input order. Writes vocabulary.tsv,
/// learner.bin and spec.json (or a runtime artifact) under output_dir.
FittedTripleClassifier train_triple_classifier(const Runtime& runtime, const TripleClassifierSpec& spec,
                                               std::span<const Triple> train, std::span<const Triple> dev,
                                               const std::filesystem::path& output_dir);

FittedTripleClassifier load_triple_classifier(const Runtime& runtime, const std::filesystem::path& dir);

/// NotFitted on an empty classifier.
std::vector<Prediction> predict_triples(const FittedTripleClassifier& model, std::span<const Triple> triples,
                                        double threshold = 0.5);

nlohmann::ordered_json to_json(const TripleClassifierSpec& spec);
TripleClassifierSpec triple_classifier_spec_from_json(const nlohmann::json& j);

}  // namespace kpa
