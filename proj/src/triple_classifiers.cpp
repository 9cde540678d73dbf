#include "kpa/triple_classifiers.hpp"

#include <algorithm>
#include <numeric>

#include "kpa/csv.hpp"
#include "kpa/digest.hpp"
#include "kpa/error.hpp"

namespace kpa {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::vector<std::string> classical_texts(std::span<const Triple> triples) {
  std::vector<std::string> texts;
  texts.reserve(triples.size());
  for (const auto& t : triples) texts.push_back(classical_text(t));
  return texts;
}

Learner fit_learner(TripleClassifierKind kind, std::span<const SparseRow> rows, std::span<const int> labels,
                    std::size_t n_features) {
  switch (kind) {
    case TripleClassifierKind::naive_bayes: return NaiveBayes::fit(rows, labels, n_features);
    case TripleClassifierKind::svm: return LinearSvm::fit(rows, labels, n_features);
    case TripleClassifierKind::decision_tree: return DecisionTree::fit(rows, labels, n_features);
    case TripleClassifierKind::plm: break;
  }
  fail(ErrorCode::SpecInvalid, "plm is not a classical learner");
}

ordered_json featurizer_json(const FeaturizerConfig& f) {
  ordered_json j{{"max_vocabulary", nullptr},
                 {"ngram_min", f.ngram_min},
                 {"ngram_max", f.ngram_max},
                 {"stopwords", f.stopwords}};
  if (f.max_vocabulary) j["max_vocabulary"] = *f.max_vocabulary;
  return j;
}

}  // namespace

std::string_view to_string(TripleClassifierKind kind) {
  switch (kind) {
    case TripleClassifierKind::naive_bayes: return "naive_bayes";
    case TripleClassifierKind::svm: return "svm";
    case TripleClassifierKind::decision_tree: return "decision_tree";
    case TripleClassifierKind::plm: return "plm";
  }
  return "?";
}

TripleClassifierKind parse_triple_classifier_kind(std::string_view name) {
  if (name == "naive_bayes") return TripleClassifierKind::naive_bayes;
  if (name == "svm") return TripleClassifierKind::svm;
  if (name == "decision_tree") return TripleClassifierKind::decision_tree;
  if (name == "plm") return TripleClassifierKind::plm;
  fail(ErrorCode::ConfigInvalid, "unknown triple classifier kind '" + std::string(name) + "'");
}

bool is_classical(TripleClassifierKind kind) { return kind != TripleClassifierKind::plm; }

void validate(const TripleClassifierSpec& spec) {
  const std::string kind(to_string(spec.kind));
  if (is_classical(spec.kind)) {
    if (!spec.featurizer) fail(ErrorCode::SpecInvalid, kind + " needs a featurizer config");
    if (spec.checkpoint || spec.train_config) fail(ErrorCode::SpecInvalid, kind + " takes no checkpoint or train config");
    validate(*spec.featurizer);
    return;
  }
  if (!spec.checkpoint || !spec.train_config) fail(ErrorCode::SpecInvalid, "plm needs a checkpoint and a train config");
  if (spec.featurizer) fail(ErrorCode::SpecInvalid, "plm takes no featurizer config");
  validate(*spec.train_config);
}

std::string classical_text(const Triple& t) {
  return t.argument + std::string(kClassicalSeparator) + t.intermediary + std::string(kClassicalSeparator) + t.key_point;
}

PairExample plm_example(const Triple& t, const CheckpointRef& checkpoint) {
  return {t.argument + " " + checkpoint.sep_marker + " " + t.intermediary, t.key_point, t.label};
}

Featurized featurize_triples(std::span<const Triple> triples, const FeaturizerConfig& config) {
  if (triples.empty()) fail(ErrorCode::EmptyInput, "cannot fit a featurizer on no triples");
  const auto texts = classical_texts(triples);
  Featurized out{{}, TfidfVectorizer::fit(texts, config)};
  out.rows = out.vectorizer.transform(texts);
  return out;
}

std::vector<SparseRow> featurize_triples(std::span<const Triple> triples, const TfidfVectorizer& vectorizer) {
  return vectorizer.transform(classical_texts(triples));
}

std::string FittedTripleClassifier::fingerprint() const {
  if (classical) return sha256_hex(classical->vectorizer.to_tsv() + learner_to_json(classical->learner).dump());
  if (artifact) return artifact->fingerprint;
  return "";
}

ordered_json to_json(const TripleClassifierSpec& spec) {
  ordered_json j{{"kind", to_string(spec.kind)}, {"checkpoint", nullptr}, {"featurizer", nullptr}, {"train_config", nullptr}};
  if (spec.checkpoint) j["checkpoint"] = spec.checkpoint->model_id;
  if (spec.featurizer) j["featurizer"] = featurizer_json(*spec.featurizer);
  if (spec.train_config) j["train_config"] = to_json(*spec.train_config);
  return j;
}

TripleClassifierSpec triple_classifier_spec_from_json(const nlohmann::json& j) {
  TripleClassifierSpec spec;
  spec.kind = parse_triple_classifier_kind(j.at("kind").get<std::string>());
  if (!j.at("checkpoint").is_null()) spec.checkpoint = checkpoint_by_id(j["checkpoint"].get<std::string>());
  if (!j.at("featurizer").is_null()) {
    const auto& f = j["featurizer"];
    FeaturizerConfig config;
    if (!f.at("max_vocabulary").is_null()) config.max_vocabulary = f["max_vocabulary"].get<std::size_t>();
    config.ngram_min = f.at("ngram_min").get<int>();
    config.ngram_max = f.at("ngram_max").get<int>();
    config.stopwords = f.at("stopwords").get<std::string>();
    spec.featurizer = config;
  }
  if (!j.at("train_config").is_null()) spec.train_config = train_config_from_json(j["train_config"]);
  return spec;
}

FittedTripleClassifier train_triple_classifier(const Runtime& runtime, const TripleClassifierSpec& spec,
                                               std::span<const Triple> train, std::span<const Triple> dev,
                                               const fs::path& output_dir) {
  validate(spec);
  if (train.empty()) fail(ErrorCode::EmptySplit, "triple classifier training split is empty");
  FittedTripleClassifier out;
  out.spec = spec;

  if (is_classical(spec.kind)) {
    const bool has0 = std::any_of(train.begin(), train.end(), [](const Triple& t) { return t.label == 0; });
    const bool has1 = std::any_of(train.begin(), train.end(), [](const Triple& t) { return t.label == 1; });
    if (!has0 || !has1) fail(ErrorCode::SingleClassTraining, std::string(to_string(spec.kind)) + " needs both labels");

    std::vector<Triple> sorted(train.begin(), train.end());
    std::sort(sorted.begin(), sorted.end(), [](const Triple& a, const Triple& b) {
      const auto ta = classical_text(a);
      const auto tb = classical_text(b);
      return ta != tb ? ta < tb : a.label < b.label;
    });
    Featurized features = featurize_triples(sorted, *spec.featurizer);
    std::vector<int> labels;
    for (const auto& t : sorted) labels.push_back(t.label);
    Learner learner = fit_learner(spec.kind, features.rows, labels, features.vectorizer.size());
    auto model = std::make_shared<SparseFeatureModel>(SparseFeatureModel{std::move(features.vectorizer), std::move(learner)});
    if (!output_dir.empty()) {
      fs::create_directories(output_dir);
      write_text_file(output_dir / "vocabulary.tsv", model->vectorizer.to_tsv());
      write_text_file(output_dir / "learner.bin", learner_to_json(model->learner).dump() + "\n");
      write_text_file(output_dir / "spec.json", to_json(spec).dump(2) + "\n");
    }
    out.classical = std::move(model);
    return out;
  }

  const CheckpointRef& checkpoint = *spec.checkpoint;
  const auto pairs = [&](std::span<const Triple> triples) {
    std::vector<PairExample> v;
    for (const auto& t : triples) v.push_back(plm_example(t, checkpoint));
    return v;
  };
  FinetuneRequest request;
  request.checkpoint = checkpoint;
  request.task = Task::pair_classification;
  request.train = pairs(train);
  request.dev = pairs(dev);
  request.config = *spec.train_config;
  request.output_dir = output_dir;
  if (!dev.empty()) {
    GoldLabels gold;
    for (const auto& t : dev) gold.emplace(t.pair_id, t.label);
    const std::vector<Triple> dev_triples(dev.begin(), dev.end());
    request.dev_evaluator = [spec, gold, dev_triples](const Model& model) -> std::optional<double> {
      FittedTripleClassifier probe;
      probe.spec = spec;
      probe.plm = std::shared_ptr<const Model>(&model, [](const Model*) {});
      return macro_f1(predict_triples(probe, dev_triples), gold).macro_f1;
    };
  }
  out.artifact = runtime.finetune(request);
  write_text_file(output_dir / "spec.json", to_json(spec).dump(2) + "\n");
  out.plm = runtime.load(*out.artifact);
  return out;
}

FittedTripleClassifier load_triple_classifier(const Runtime& runtime, const fs::path& dir) {
  FittedTripleClassifier out;
  try {
    out.spec = triple_classifier_spec_from_json(nlohmann::json::parse(read_text_file(dir / "spec.json")));
    if (is_classical(out.spec.kind)) {
      out.classical = std::make_shared<SparseFeatureModel>(SparseFeatureModel{
          TfidfVectorizer::from_tsv(read_text_file(dir / "vocabulary.tsv"), *out.spec.featurizer),
          learner_from_json(nlohmann::json::parse(read_text_file(dir / "learner.bin")))});
    } else {
      out.artifact = read_artifact(dir);
      out.plm = runtime.load(*out.artifact);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ArtifactCorrupt, dir.string() + ": " + e.what());
  }
  return out;
}

std::vector<Prediction> predict_triples(const FittedTripleClassifier& model, std::span<const Triple> triples,
                                        double threshold) {
  if (!model.fitted()) fail(ErrorCode::NotFitted, "triple classifier is not fitted");
  std::vector<Prediction> out;
  out.reserve(triples.size());
  for (const auto& t : triples) {
    double p = 0.5;
    if (model.classical) {
      p = learner_probability(model.classical->learner, model.classical->vectorizer.transform(classical_text(t)));
    } else {
      const PairExample ex = plm_example(t, model.plm->checkpoint());
      p = model.plm->predict_class(ex.text_a, *ex.text_b).match_probability;
    }
    out.push_back({t.pair_id, threshold_label(p, threshold), p});
  }
  return out;
}

}  // namespace kpa
