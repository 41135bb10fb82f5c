#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ka/core_math.hpp"
#include "ka/mlp.hpp"
#include "ka/text_features.hpp"

namespace ka {

// Reads the JSONL corpus format: one object per line with `text` (string),
// optional `label` (0, 1 or null) and optional `domain` (string). Blank lines
// are skipped. The domain id falls back to the file stem.
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct SplitSpec {
  std::array<double, 3> fractions{1.0, 0.0, 0.0};  // train, dev, test
  std::uint64_t seed = 0;

  void validate() const;
};

struct CorpusSplit {
  Corpus train;
  Corpus dev;
  Corpus test;
};

// Stratified seeded shuffle then contiguous cut. Every part with a positive
// fraction must receive at least one document.
CorpusSplit split(const Corpus& corpus, const SplitSpec& spec);

// Controllable multi-domain sentiment generator. Each domain owns a
// positive and a negative lexicon of vocab_size / 4 terms; a shared_fraction
// of each lexicon is drawn from pools common to all domains, the remainder
// is private to the domain. One random position per document is always
// sentiment-bearing; remaining tokens are neutral filler, split
// between words common to all domains and domain topic words.
struct SynthSpec {
  std::size_t n_domains = 4;
  std::size_t vocab_size = 400;
  double shared_fraction = 0.5;
  double noise_rate = 0.1;  // probability of flipping a document's label
  std::size_t docs_per_domain = 2000;
  std::size_t doc_length_min = 8;
  std::size_t doc_length_max = 30;
  double sentiment_rate = 0.2;  // probability that a non-anchor token is sentiment-bearing
  std::uint64_t seed = 0;

  void validate() const;
};

// Labels are exactly balanced before noise is applied.
std::vector<Corpus> synth_domains(const SynthSpec& spec);

double evaluate_accuracy(const MlpModel& model, const FeatureMatrix& labeled);

struct CurvePoint {
  std::size_t n = 0;  // effective subset size
  double accuracy = 0.0;
};

// Teacher accuracy on the top-n examples by MCD for each n (ascending, >= 1).
std::vector<CurvePoint> mcd_accuracy_curve(const MlpModel& teacher, const FeatureMatrix& labeled_target,
                                           const std::vector<std::size_t>& ns);

// Pearson correlation between per-example MCD and teacher correctness.
Correlation mcd_correlation_report(const MlpModel& teacher, const FeatureMatrix& labeled_target);

// CSV with pc1, pc2, mcd_score, teacher_prediction and, when present, label.
void pca_export(const MlpModel& teacher, const FeatureMatrix& target, const std::filesystem::path& path);

// RFC 4180 field quoting.
std::string csv_field(const std::string& value);
// Shortest round-trippable decimal representation.
std::string format_number(double value);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace ka
