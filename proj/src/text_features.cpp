#include "ka/text_features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ka/errors.hpp"

namespace ka {
namespace {

// Byte length of a Unicode whitespace sequence starting at `pos`, or 0.
std::size_t whitespace_length(std::string_view s, std::size_t pos) {
  const auto byte = [&](std::size_t i) -> unsigned char {
    return i < s.size() ? static_cast<unsigned char>(s[i]) : 0;
  };
  const unsigned char c0 = byte(pos);
  if (c0 == ' ' || (c0 >= 0x09 && c0 <= 0x0d)) return 1;
  const unsigned char c1 = byte(pos + 1);
  const unsigned char c2 = byte(pos + 2);
  if (c0 == 0xc2 && (c1 == 0x85 || c1 == 0xa0)) return 2;  // U+0085, U+00A0
  if (c0 == 0xe1 && c1 == 0x9a && c2 == 0x80) return 3;    // U+1680
  if (c0 == 0xe2 && c1 == 0x80) {
    if (c2 <= 0x8a) return 3;                              // U+2000..U+200A
    if (c2 == 0xa8 || c2 == 0xa9 || c2 == 0xaf) return 3;  // U+2028, U+2029, U+202F
  }
  if (c0 == 0xe2 && c1 == 0x81 && c2 == 0x9f) return 3;  // U+205F
  if (c0 == 0xe3 && c1 == 0x80 && c2 == 0x80) return 3;  // U+3000
  return 0;
}

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u) != 0;
}

void push_token(std::string_view raw, std::vector<std::string>& out) {
  std::size_t begin = 0;
  std::size_t end = raw.size();
  while (begin < end && is_ascii_punct(raw[begin])) ++begin;
  while (end > begin && is_ascii_punct(raw[end - 1])) --end;
  if (begin == end) return;
  std::string token(raw.substr(begin, end - begin));
  for (char& c : token) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80) c = static_cast<char>(std::tolower(u));
  }
  out.push_back(std::move(token));
}

double smoothed_idf(std::uint64_t n_docs, std::uint64_t doc_freq) {
  return std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(doc_freq))) +
         1.0;
}

}  // namespace

bool Corpus::fully_labeled() const {
  return std::all_of(docs.begin(), docs.end(), [](const Document& d) { return d.label.has_value(); });
}

FeatureMatrix FeatureMatrix::subset(std::span<const std::size_t> positions) const {
  FeatureMatrix out;
  out.dim = dim;
  out.domain_id = domain_id;
  out.rows.reserve(positions.size());
  if (labels) out.labels.emplace().reserve(positions.size());
  for (std::size_t p : positions) {
    out.rows.push_back(rows.at(p));
    if (labels) out.labels->push_back(labels->at(p));
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t ws = whitespace_length(text, pos);
    if (ws == 0) {
      ++pos;
      continue;
    }
    if (pos > start) push_token(text.substr(start, pos - start), tokens);
    pos += ws;
    start = pos;
  }
  if (start < text.size()) push_token(text.substr(start), tokens);
  return tokens;
}

std::vector<std::string> extract_ngrams(const std::vector<std::string>& tokens) {
  std::vector<std::string> out(tokens);
  if (tokens.size() >= 2) {
    out.reserve(2 * tokens.size() - 1);
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) out.push_back(tokens[i] + ' ' + tokens[i + 1]);
  }
  return out;
}

Vocabulary::Vocabulary(std::uint64_t n_docs, std::vector<Entry> entries)
    : n_docs_(n_docs), entries_(std::move(entries)) {
  idf_.reserve(entries_.size());
  index_.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const Entry& e = entries_[i];
    if (e.doc_freq == 0) throw FormatError("vocabulary entry '" + e.ngram + "' has zero doc_freq");
    if (!index_.emplace(e.ngram, static_cast<std::uint32_t>(i)).second) {
      throw FormatError("duplicate vocabulary entry '" + e.ngram + "'");
    }
    idf_.push_back(smoothed_idf(n_docs_, e.doc_freq));
  }
}

std::optional<std::uint32_t> Vocabulary::index_of(std::string_view ngram) const {
  const auto it = index_.find(std::string(ngram));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Vocabulary::ngrams() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.ngram);
  return out;
}

std::vector<std::uint64_t> Vocabulary::doc_freqs() const {
  std::vector<std::uint64_t> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.doc_freq);
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : entries_) entries.push_back(nlohmann::json::array({e.ngram, e.doc_freq}));
  return {{"version", kVocabularyFormatVersion}, {"n_docs", n_docs_}, {"entries", std::move(entries)}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& doc) {
  try {
    const int version = doc.at("version").get<int>();
    if (version != kVocabularyFormatVersion) {
      throw VersionMismatch("unsupported vocabulary version " + std::to_string(version));
    }
    const auto n_docs = doc.at("n_docs").get<std::uint64_t>();
    std::vector<Entry> entries;
    for (const auto& item : doc.at("entries")) {
      if (!item.is_array() || item.size() != 2) throw FormatError("vocabulary entry must be [ngram, doc_freq]");
      entries.push_back({item[0].get<std::string>(), item[1].get<std::uint64_t>()});
    }
    return Vocabulary(n_docs, std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed vocabulary: ") + e.what());
  }
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_json().dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return from_json(doc);
}

Vocabulary build_vocabulary(const Corpus& corpus, std::size_t max_size) {
  return build_vocabulary(std::span<const Corpus>(&corpus, 1), max_size);
}

Vocabulary build_vocabulary(std::span<const Corpus> corpora, std::size_t max_size) {
  if (max_size == 0) throw InvalidArgument("build_vocabulary: max_size must be >= 1");
  struct Counts {
    std::uint64_t total = 0;
    std::uint64_t docs = 0;
    std::uint64_t last_doc = 0;  // 1-based id of the last document seen
  };
  std::unordered_map<std::string, Counts> counts;
  std::uint64_t n_docs = 0;
  for (const Corpus& corpus : corpora) {
    for (const Document& doc : corpus.docs) {
      ++n_docs;
      for (auto& gram : extract_ngrams(tokenize(doc.text))) {
        Counts& c = counts[std::move(gram)];
        ++c.total;
        if (c.last_doc != n_docs) {
          c.last_doc = n_docs;
          ++c.docs;
        }
      }
    }
  }
  if (n_docs == 0) throw EmptyCorpus("build_vocabulary: no documents");

  std::vector<std::pair<const std::string*, const Counts*>> ranked;
  ranked.reserve(counts.size());
  for (const auto& [gram, c] : counts) ranked.emplace_back(&gram, &c);
  const auto keep = std::min(max_size, ranked.size());
  const auto order = [](const auto& a, const auto& b) {
    if (a.second->total != b.second->total) return a.second->total > b.second->total;
    return *a.first < *b.first;
  };
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), order);

  std::vector<Vocabulary::Entry> entries;
  entries.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) entries.push_back({*ranked[i].first, ranked[i].second->docs});
  return Vocabulary(n_docs, std::move(entries));
}

FeatureMatrix featurize(const Corpus& corpus, const Vocabulary& vocab) {
  FeatureMatrix out;
  out.dim = vocab.size();
  out.domain_id = corpus.domain_id;
  out.rows.reserve(corpus.size());
  const bool labeled = !corpus.empty() && corpus.fully_labeled();
  if (labeled) out.labels.emplace().reserve(corpus.size());

  std::map<std::uint32_t, double> counts;
  for (const Document& doc : corpus.docs) {
    counts.clear();
    for (const auto& gram : extract_ngrams(tokenize(doc.text))) {
      if (auto idx = vocab.index_of(gram)) counts[*idx] += 1.0;
    }
    SparseVector row;
    row.dim = vocab.size();
    double sq = 0.0;
    for (const auto& [idx, count] : counts) {
      const double v = count * vocab.idf(idx);
      row.indices.push_back(idx);
      row.values.push_back(v);
      sq += v * v;
    }
    if (sq > 0.0) {
      const double norm = std::sqrt(sq);
      for (double& v : row.values) v /= norm;
    }
    out.rows.push_back(std::move(row));
    if (labeled) out.labels->push_back(*doc.label);
  }
  return out;
}

ProbVector term_distribution(const Corpus& corpus, const Vocabulary& vocab, double smoothing) {
  if (vocab.size() == 0) throw InvalidArgument("term_distribution: empty vocabulary");
  if (!(smoothing >= 0.0)) throw InvalidArgument("term_distribution: smoothing must be >= 0");
  std::vector<double> counts(vocab.size(), 0.0);
  for (const Document& doc : corpus.docs) {
    for (const auto& gram : extract_ngrams(tokenize(doc.text))) {
      if (auto idx = vocab.index_of(gram)) counts[*idx] += 1.0;
    }
  }
  double total = 0.0;
  for (double& c : counts) {
    c += smoothing;
    total += c;
  }
  if (total == 0.0) {
    // No occurrences and no smoothing: fall back to uniform.
    std::fill(counts.begin(), counts.end(), 1.0 / static_cast<double>(counts.size()));
    return counts;
  }
  for (double& c : counts) c /= total;
  return counts;
}

}  // namespace ka
