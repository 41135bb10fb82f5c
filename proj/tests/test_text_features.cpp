#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "ka/errors.hpp"
#include "ka/text_features.hpp"
#include "support.hpp"

using namespace ka;
using ka::testing::TempDir;

namespace {

Corpus corpus_of(std::vector<std::string> texts, std::string domain = "d") {
  Corpus c;
  c.domain_id = std::move(domain);
  for (auto& t : texts) c.docs.push_back({std::move(t), std::nullopt});
  return c;
}

// Plain whitespace split with no punctuation handling; enough for the
// lowercase, punctuation-free documents the generator below produces.
std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::string> grams(const std::string& text) {
  auto w = words(text);
  std::vector<std::string> out = w;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) out.push_back(w[i] + " " + w[i + 1]);
  return out;
}

Corpus random_corpus(Rng& rng, std::size_t docs, std::size_t alphabet) {
  std::vector<std::string> texts;
  for (std::size_t d = 0; d < docs; ++d) {
    std::string t;
    const std::size_t len = rng.below(7);
    for (std::size_t i = 0; i < len; ++i) {
      if (i) t += ' ';
      t += static_cast<char>('a' + rng.below(alphabet));
    }
    texts.push_back(t);
  }
  return corpus_of(texts);
}

}  // namespace

TEST_CASE("tokenize examples") {
  CHECK(tokenize("Good book!") == std::vector<std::string>{"good", "book"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("It's GREAT, really.") == std::vector<std::string>{"it's", "great", "really"});
}

TEST_CASE("tokenize edge cases") {
  CHECK(tokenize("  \t\n ").empty());
  CHECK(tokenize("!!! ... ???").empty());
  CHECK(tokenize("\"quoted\" (paren)") == std::vector<std::string>{"quoted", "paren"});
  // No-break space and ideographic space separate tokens.
  CHECK(tokenize("a\xC2\xA0" "b\xE3\x80\x80" "c") == std::vector<std::string>{"a", "b", "c"});
  // Non-ASCII letters are kept as-is.
  CHECK(tokenize("CAF\xC3\x89") == std::vector<std::string>{"caf\xC3\x89"});
}

TEST_CASE("extract ngrams lists unigrams then bigrams") {
  CHECK(extract_ngrams({"good", "book", "here"}) ==
        std::vector<std::string>{"good", "book", "here", "good book", "book here"});
  CHECK(extract_ngrams({"x"}) == std::vector<std::string>{"x"});
  CHECK(extract_ngrams({}).empty());
}

TEST_CASE("build vocabulary examples") {
  const Vocabulary v = build_vocabulary(corpus_of({"a b", "a c"}), 2);
  REQUIRE(v.size() == 2);
  CHECK(v.entry(0).ngram == "a");
  CHECK(v.entry(1).ngram == "a b");
  CHECK(v.index_of("a") == 0u);
  CHECK(v.index_of("a b") == 1u);
  CHECK_FALSE(v.index_of("c").has_value());

  const Vocabulary x = build_vocabulary(corpus_of({"x"}), 10);
  REQUIRE(x.size() == 1);
  CHECK(x.entry(0).ngram == "x");
  CHECK(x.idf(0) == 1.0);

  const Vocabulary one = build_vocabulary(corpus_of({"p q r", "s t"}), 1);
  CHECK(one.size() == 1);
}

TEST_CASE("build vocabulary on an empty corpus is an error") {
  CHECK_THROWS_AS(build_vocabulary(corpus_of({})), EmptyCorpus);
}

TEST_CASE("featurize examples") {
  const Vocabulary v(3, {{"a", 2}, {"b", 2}});  // idf = ln(4/3) + 1 for both
  const FeatureMatrix fm = featurize(corpus_of({"zzz", "a", "a a b"}), v);
  REQUIRE(fm.size() == 3);
  CHECK(fm.rows[0].nnz() == 0);
  CHECK(fm.rows[1].nnz() == 1);
  CHECK(fm.rows[1].values[0] == 1.0);
  CHECK(std::abs(fm.rows[2].values[0] - 2.0 / std::sqrt(5.0)) < 1e-12);
  CHECK(std::abs(fm.rows[2].values[1] - 1.0 / std::sqrt(5.0)) < 1e-12);
  CHECK(std::abs(fm.rows[2].values[0] - 0.894427) < 1e-6);
  CHECK(std::abs(fm.rows[2].values[1] - 0.447214) < 1e-6);
  CHECK_FALSE(fm.labeled());
}

TEST_CASE("featurize attaches labels only for fully labeled corpora") {
  Corpus c = corpus_of({"a", "b"});
  const Vocabulary v = build_vocabulary(c);
  c.docs[0].label = 1;
  CHECK_FALSE(featurize(c, v).labeled());
  c.docs[1].label = 0;
  const auto fm = featurize(c, v);
  REQUIRE(fm.labeled());
  CHECK(*fm.labels == std::vector<int>{1, 0});
}

TEST_CASE("term distribution examples") {
  const Vocabulary v(1, {{"a", 1}, {"b", 1}});
  const auto t = term_distribution(corpus_of({"a a b a"}), v, 0.0);
  CHECK(std::abs(t[0] - 0.75) < 1e-15);
  CHECK(std::abs(t[1] - 0.25) < 1e-15);

  const auto uniform = term_distribution(corpus_of({"zzz"}), v);
  CHECK(std::abs(uniform[0] - 0.5) < 1e-15);
  CHECK(std::abs(uniform[1] - 0.5) < 1e-15);

  const auto smooth = term_distribution(corpus_of({"a"}), v, 1.0);
  CHECK(std::abs(smooth[0] - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(smooth[1] - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("vocabulary json round trip and file format") {
  TempDir dir("vocab");
  const Vocabulary v = build_vocabulary(corpus_of({"the good book", "the bad book", "fine"}));
  v.save(dir / "v.json");
  const Vocabulary w = Vocabulary::load(dir / "v.json");
  CHECK(w == v);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(w.idf(i) == v.idf(i));

  const auto doc = v.to_json();
  CHECK(doc["version"] == 1);
  CHECK(doc["n_docs"] == 3);
  CHECK(doc["entries"][0][0] == v.entry(0).ngram);
  CHECK(doc["entries"][0][1] == v.entry(0).doc_freq);
}

TEST_CASE("vocabulary loading errors") {
  using nlohmann::json;
  CHECK_THROWS_AS(Vocabulary::from_json(json{{"version", 2}, {"n_docs", 1}, {"entries", json::array()}}),
                  VersionMismatch);
  CHECK_THROWS_AS(Vocabulary::from_json(json{{"version", 1}, {"n_docs", 1}, {"entries", {{"a", 0}}}}),
                  FormatError);
  CHECK_THROWS_AS(Vocabulary::from_json(json{{"version", 1}, {"n_docs", 2}, {"entries", {{"a", 1}, {"a", 1}}}}),
                  FormatError);
  CHECK_THROWS_AS(Vocabulary::from_json(json::array()), FormatError);
  CHECK_THROWS_AS(Vocabulary::load("/nonexistent/vocab.json"), IoError);

  TempDir dir("vocab-bad");
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(Vocabulary::load(dir / "bad.json"), FormatError);
}

TEST_CASE("pooled vocabulary counts every corpus") {
  const std::vector<Corpus> parts{corpus_of({"a b"}), corpus_of({"a c", "c"})};
  const Vocabulary pooled = build_vocabulary(std::span<const Corpus>(parts));
  CHECK(pooled == build_vocabulary(corpus_of({"a b", "a c", "c"})));
  CHECK(pooled.n_docs() == 3);
}

// ---------------------------------------------------------------------------
// Properties against an independent vocabulary/tf-idf oracle.

TEST_CASE("property: vocabulary matches a brute-force oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const Corpus c = random_corpus(rng, 1 + rng.below(12), 2 + rng.below(5));
    if (std::all_of(c.docs.begin(), c.docs.end(), [](const Document& d) { return d.text.empty(); })) continue;
    std::map<std::string, std::uint64_t> total, df;
    for (const auto& d : c.docs) {
      const auto g = grams(d.text);
      for (const auto& s : g) ++total[s];
      for (const auto& s : std::set<std::string>(g.begin(), g.end())) ++df[s];
    }
    std::vector<std::pair<std::string, std::uint64_t>> ranked(total.begin(), total.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    const std::size_t cap = 1 + rng.below(12);
    const Vocabulary v = build_vocabulary(c, cap);
    REQUIRE(v.size() == std::min(cap, ranked.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(v.entry(i).ngram == ranked[i].first);
      CHECK(v.entry(i).doc_freq == df[ranked[i].first]);
      const double idf = std::log((1.0 + c.size()) / (1.0 + df[ranked[i].first])) + 1.0;
      CHECK(std::abs(v.idf(i) - idf) < 1e-15);
    }

    const FeatureMatrix fm = featurize(c, v);
    for (std::size_t d = 0; d < c.size(); ++d) {
      std::map<std::size_t, double> expect;
      for (const auto& s : grams(c.docs[d].text)) {
        if (auto idx = v.index_of(s)) expect[*idx] += v.idf(*idx);
      }
      double norm = 0.0;
      for (const auto& [k, x] : expect) norm += x * x;
      norm = std::sqrt(norm);
      REQUIRE(fm.rows[d].nnz() == expect.size());
      std::size_t pos = 0;
      for (const auto& [k, x] : expect) {
        CHECK(fm.rows[d].indices[pos] == k);
        CHECK(std::abs(fm.rows[d].values[pos] - x / norm) < 1e-12);
        ++pos;
      }
      if (fm.rows[d].nnz() > 0) CHECK(std::abs(fm.rows[d].norm() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("property: featurize is deterministic and term distributions are valid") {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const Corpus c = random_corpus(rng, 2 + rng.below(10), 3 + rng.below(4));
    if (std::all_of(c.docs.begin(), c.docs.end(), [](const Document& d) { return d.text.empty(); })) continue;
    const Vocabulary v = build_vocabulary(c, 1 + rng.below(20));
    CHECK(featurize(c, v) == featurize(c, v));
    const auto t = term_distribution(c, v);
    double s = 0.0;
    for (double x : t) {
      CHECK(x > 0.0);
      s += x;
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
    CHECK(Vocabulary::from_json(v.to_json()) == v);
  }
}
