#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kpa {

/// Sparse row: (column, value) pairs sorted by column.
using SparseRow = std::vector<std::pair<std::uint32_t, double>>;

struct FeaturizerConfig {
  std::optional<std::size_t> max_vocabulary;  // keep the most frequent terms
  int ngram_min = 1;
  int ngram_max = 1;
  std::string stopwords = "english";

  friend bool operator==(const FeaturizerConfig&, const FeaturizerConfig&) = default;
};

void validate(const FeaturizerConfig& config);

/// tf = raw count, idf = ln((1 + N) / (1 + df)) + 1, rows L2-normalized.
/// Columns are the vocabulary in lexicographic order.
class TfidfVectorizer {
 public:
  TfidfVectorizer() = default;
  TfidfVectorizer(FeaturizerConfig config, std::map<std::string, std::uint32_t, std::less<>> vocabulary,
                  std::vector<double> idf);

  /// EmptyVocabulary when every token is filtered out.
  static TfidfVectorizer fit(std::span<const std::string> documents, const FeaturizerConfig& config);

  /// Terms of a document after tokenization, stopword removal and n-grams.
  std::vector<std::string> terms(std::string_view document) const;
  /// Out-of-vocabulary terms are ignored; a document with none is a zero row.
  SparseRow transform(std::string_view document) const;
  std::vector<SparseRow> transform(std::span<const std::string> documents) const;

  const FeaturizerConfig& config() const { return config_; }
  const std::map<std::string, std::uint32_t, std::less<>>& vocabulary() const { return vocabulary_; }
  const std::vector<double>& idf() const { return idf_; }
  std::size_t size() const { return idf_.size(); }
  /// SHA-256 over the vocabulary and idf values.
  std::string fingerprint() const;

  /// "word\tindex\tidf" lines.
  std::string to_tsv() const;
  static TfidfVectorizer from_tsv(std::string_view tsv, FeaturizerConfig config);

 private:
  FeaturizerConfig config_;
  std::map<std::string, std::uint32_t, std::less<>> vocabulary_;
  std::vector<double> idf_;
};

std::vector<std::string> ngram_terms(std::span<const std::string> tokens, int n_min, int n_max);

}  // namespace kpa
