#pragma once

#include <array>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ka/adaptation.hpp"
#include "ka/datasets.hpp"
#include "ka/domain_similarity.hpp"
#include "ka/mlp.hpp"

namespace ka {

enum class Mode {
  Synth,
  Featurize,
  TrainTeacher,
  Similarity,
  Distill,
  DistillMulti,
  McdCurve,
  Evaluate,
  AnalyzePca,
};

std::string_view mode_name(Mode mode);
Mode parse_mode(std::string_view name);

// Students trained by `distill-multi`.
enum class MultiVariant {
  TeacherOnly,         // no student, weighted teacher mixture only
  SourceTeachers,      // student of the similarity-weighted source teachers
  GeneralTeacher,      // student of one teacher trained on all sources
  SourcesPlusGeneral,  // both, general weighted by the mean source weight
  All,
};

std::string_view variant_name(MultiVariant variant);
MultiVariant parse_variant(std::string_view name);

struct ExperimentConfig {
  Mode mode = Mode::Synth;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::string out = "runs";
  bool quiet = false;
  bool save_models = false;

  struct Paths {
    std::vector<std::string> sources;
    std::string target;
    std::string teacher;
    std::string model;
    std::string corpus;
    std::vector<std::string> corpora;
    std::string vocab;
  } paths;

  std::size_t max_vocab = kDefaultVocabularySize;
  TrainConfig train;      // train.epochs == 0 means unset
  DistillConfig distill;  // distill.epochs == 0 means unset
  bool use_mcd = false;
  // Target documents become unlabeled pool / dev / test. When the target
  // corpus already contains unlabeled documents, those form the pool and the
  // labeled ones are divided between dev and test in the same ratio.
  std::array<double, 3> target_split{0.5, 0.1, 0.4};
  DivergenceKind similarity = DivergenceKind::jensen_shannon();
  bool compare_measures = false;
  MultiVariant variant = MultiVariant::SourceTeachers;
  std::size_t teacher_budget = 0;  // total labeled examples across source teachers; 0 = all
  std::vector<std::size_t> curve_ns{50, 100, 200, 500, 1000, 2000};
  SynthSpec synth;

  // Fully resolved document; validate_config(to_json()) reproduces *this.
  nlohmann::ordered_json to_json() const;
};

// Applies defaults and checks a raw configuration document. Unknown keys,
// type mismatches, constraint violations and missing mode-specific fields
// raise ConfigError naming the offending key path.
ExperimentConfig validate_config(const nlohmann::json& raw);

struct RunOutcome {
  std::filesystem::path run_dir;
  nlohmann::ordered_json summary;
};

// Executes the configured pipeline once per seed and writes summary.json
// plus mode-specific CSV/model files into a fresh run directory under
// config.out named <mode>-<config hash>-<UTC timestamp>.
RunOutcome run(const ExperimentConfig& config);

// 2 for configuration errors, 3 for data errors, 1 otherwise.
int exit_code_for(const std::exception& error);

// Stable 64-bit FNV-1a digest, used for run directory names.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace ka
