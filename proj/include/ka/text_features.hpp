#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ka/core_math.hpp"

namespace ka {

inline constexpr std::size_t kDefaultVocabularySize = 10000;
// Additive smoothing for term distributions; keeps KL and Renyi finite when
// a term never occurs in one of the compared domains.
inline constexpr double kTermSmoothing = 1e-10;

struct Document {
  std::string text;
  std::optional<int> label;  // 0 or 1 when present

  friend bool operator==(const Document&, const Document&) = default;
};

struct Corpus {
  std::vector<Document> docs;
  std::string domain_id;

  std::size_t size() const noexcept { return docs.size(); }
  bool empty() const noexcept { return docs.empty(); }
  bool fully_labeled() const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct FeatureMatrix {
  std::size_t dim = 0;
  std::vector<SparseVector> rows;
  std::optional<std::vector<int>> labels;
  std::string domain_id;

  std::size_t size() const noexcept { return rows.size(); }
  bool labeled() const noexcept { return labels.has_value(); }

  // Rows (and labels) at the given positions, in that order.
  FeatureMatrix subset(std::span<const std::size_t> positions) const;

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

// Lowercases ASCII, splits on Unicode whitespace and strips leading and
// trailing ASCII punctuation from each token. Empty tokens are dropped.
std::vector<std::string> tokenize(std::string_view text);

// All unigrams followed by all adjacent bigrams ("good book").
std::vector<std::string> extract_ngrams(const std::vector<std::string>& tokens);

class Vocabulary {
 public:
  struct Entry {
    std::string ngram;
    std::uint64_t doc_freq = 0;
  };

  Vocabulary() = default;

  // Entries in index order; idf is recomputed from doc_freq and n_docs.
  Vocabulary(std::uint64_t n_docs, std::vector<Entry> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  std::uint64_t n_docs() const noexcept { return n_docs_; }
  const Entry& entry(std::size_t index) const { return entries_.at(index); }
  double idf(std::size_t index) const { return idf_.at(index); }
  std::optional<std::uint32_t> index_of(std::string_view ngram) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& doc);

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.n_docs_ == b.n_docs_ && a.ngrams() == b.ngrams() && a.doc_freqs() == b.doc_freqs();
  }

 private:
  std::vector<std::string> ngrams() const;
  std::vector<std::uint64_t> doc_freqs() const;

  std::uint64_t n_docs_ = 0;
  std::vector<Entry> entries_;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

inline constexpr int kVocabularyFormatVersion = 1;

// Keeps the max_size most frequent n-grams (ties lexicographic); indices
// follow (descending frequency, lexicographic) order. idf is
// ln((1 + n_docs) / (1 + doc_freq)) + 1.
Vocabulary build_vocabulary(const Corpus& corpus, std::size_t max_size = kDefaultVocabularySize);
Vocabulary build_vocabulary(std::span<const Corpus> corpora,
                            std::size_t max_size = kDefaultVocabularySize);

// count x idf per in-vocabulary n-gram, then L2-normalized rows. Labels are
// attached only when every document is labeled.
FeatureMatrix featurize(const Corpus& corpus, const Vocabulary& vocab);

// Smoothed relative frequency of each vocabulary n-gram over the corpus.
ProbVector term_distribution(const Corpus& corpus, const Vocabulary& vocab,
                             double smoothing = kTermSmoothing);

}  // namespace ka
