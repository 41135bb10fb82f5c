// Command-line front end. Each subcommand maps to one harness mode; flags
// override the matching fields of the --config file, which override defaults.

#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ka/errors.hpp"
#include "ka/harness.hpp"

namespace {

using nlohmann::json;

class Overrides {
 public:
  template <typename T>
  void option(CLI::App* app, const std::string& flag, std::vector<std::string> paths, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    if constexpr (std::is_same_v<T, std::vector<std::string>> || std::is_same_v<T, std::vector<std::uint64_t>> ||
                  std::is_same_v<T, std::vector<std::size_t>> || std::is_same_v<T, std::vector<double>>) {
      opt->delimiter(',');
    }
    appliers_.push_back([opt, value, paths](json& doc) {
      if (opt->count() == 0) return;
      for (const auto& p : paths) doc[json::json_pointer(p)] = *value;
    });
  }

  // Presence flag that writes a fixed value.
  void flag(CLI::App* app, const std::string& flag, const std::string& path, bool value, const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, help);
    appliers_.push_back([opt, path, value](json& doc) {
      if (opt->count() > 0) doc[json::json_pointer(path)] = value;
    });
  }

  void apply(json& doc) const {
    for (const auto& f : appliers_) f(doc);
  }

 private:
  std::vector<std::function<void(json&)>> appliers_;
};

json read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ka::ConfigError(path, "cannot open config file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ka::ConfigError(path, std::string("invalid JSON: ") + e.what());
  }
}

void add_common(Overrides& o, CLI::App* cmd, std::string& config_path) {
  cmd->add_option("--config", config_path, "JSON configuration file");
  o.option<std::string>(cmd, "--out", {"/out"}, "directory that receives the run directory");
  o.option<std::vector<std::uint64_t>>(cmd, "--seed", {"/seeds"}, "comma-separated seed list");
  o.flag(cmd, "--quiet", "/quiet", true, "suppress progress output");
}

void add_teacher_training(Overrides& o, CLI::App* cmd, const std::string& epochs_flag) {
  o.option<std::size_t>(cmd, epochs_flag, {"/train/epochs"}, "teacher training epochs");
  o.option<std::size_t>(cmd, "--teacher-hidden", {"/train/hidden_dim"}, "teacher hidden units");
  o.option<double>(cmd, "--dev-fraction", {"/train/dev_fraction"}, "share of source labels held out for model selection");
  o.flag(cmd, "--no-shuffle", "/train/shuffle", false, "keep training order fixed");
}

void add_distillation(Overrides& o, CLI::App* cmd) {
  o.option<std::size_t>(cmd, "--epochs", {"/distill/epochs"}, "student epochs (rounds with --mcd)");
  o.option<std::size_t>(cmd, "--hidden", {"/distill/hidden_dim", "/train/hidden_dim"}, "hidden units of teacher and student (--teacher-hidden wins for the teacher)");
  o.option<double>(cmd, "--tau", {"/distill/tau"}, "softmax temperature");
  o.option<double>(cmd, "--lambda", {"/distill/lambda"}, "teacher share of the pseudo-label target");
  o.option<std::size_t>(cmd, "--n-mcd", {"/distill/n_mcd"}, "pseudo-labelled examples selected by MCD");
  o.option<double>(cmd, "--lr", {"/distill/lr", "/train/lr"}, "Adam learning rate");
  o.option<std::size_t>(cmd, "--batch-size", {"/distill/batch_size", "/train/batch_size"}, "mini-batch size");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain adaptation by teacher-student distillation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ka 1.0");

  struct Command {
    CLI::App* app;
    ka::Mode mode;
    Overrides overrides;
    std::string config_path;
    std::vector<double> split;
  };
  std::vector<std::unique_ptr<Command>> commands;
  const auto add = [&](ka::Mode mode, const std::string& help) -> Command& {
    auto cmd = std::make_unique<Command>();
    cmd->mode = mode;
    cmd->app = app.add_subcommand(std::string(ka::mode_name(mode)), help);
    add_common(cmd->overrides, cmd->app, cmd->config_path);
    commands.push_back(std::move(cmd));
    return *commands.back();
  };
  const auto add_target_split = [](Command& c) {
    c.app->add_option("--split", c.split, "unlabeled,dev,test fractions of the target corpus")
        ->delimiter(',')
        ->expected(3);
  };

  {
    Command& c = add(ka::Mode::Synth, "generate synthetic multi-domain corpora");
    Overrides& o = c.overrides;
    o.option<std::size_t>(c.app, "--domains", {"/synth/n_domains"}, "number of domains");
    o.option<std::size_t>(c.app, "--vocab-size", {"/synth/vocab_size"}, "sentiment vocabulary size");
    o.option<double>(c.app, "--shared-fraction", {"/synth/shared_fraction"}, "share of sentiment terms common to all domains");
    o.option<double>(c.app, "--noise", {"/synth/noise_rate"}, "label flip probability");
    o.option<std::size_t>(c.app, "--docs", {"/synth/docs_per_domain"}, "documents per domain");
    o.option<std::size_t>(c.app, "--min-length", {"/synth/doc_length_min"}, "minimum tokens per document");
    o.option<std::size_t>(c.app, "--max-length", {"/synth/doc_length_max"}, "maximum tokens per document");
    o.option<double>(c.app, "--sentiment-rate", {"/synth/sentiment_rate"}, "probability of a sentiment token");
    o.option<std::uint64_t>(c.app, "--synth-seed", {"/synth/seed"}, "generator seed");
  }
  {
    Command& c = add(ka::Mode::Featurize, "fit a vocabulary and write tf-idf features");
    Overrides& o = c.overrides;
    o.option<std::vector<std::string>>(c.app, "--corpus", {"/paths/corpora"}, "JSONL corpora");
    o.option<std::string>(c.app, "--vocab", {"/paths/vocab"}, "existing vocabulary file");
    o.option<std::size_t>(c.app, "--max-vocab", {"/features/max_vocab"}, "vocabulary size");
  }
  {
    Command& c = add(ka::Mode::TrainTeacher, "train a teacher on labeled source corpora");
    Overrides& o = c.overrides;
    o.option<std::vector<std::string>>(c.app, "--source", {"/paths/sources"}, "labeled source corpora");
    o.option<std::string>(c.app, "--target", {"/paths/target"}, "optional labeled target for reporting");
    o.option<std::string>(c.app, "--vocab", {"/paths/vocab"}, "existing vocabulary file");
    o.option<std::size_t>(c.app, "--max-vocab", {"/features/max_vocab"}, "vocabulary size");
    o.option<std::size_t>(c.app, "--epochs", {"/train/epochs"}, "training epochs");
    o.option<std::size_t>(c.app, "--hidden", {"/train/hidden_dim"}, "hidden units");
    o.option<double>(c.app, "--lr", {"/train/lr"}, "Adam learning rate");
    o.option<std::size_t>(c.app, "--batch-size", {"/train/batch_size"}, "mini-batch size");
    o.option<double>(c.app, "--dev-fraction", {"/train/dev_fraction"}, "share of labels held out for model selection");
    o.flag(c.app, "--no-shuffle", "/train/shuffle", false, "keep training order fixed");
  }
  {
    Command& c = add(ka::Mode::Similarity, "measure source/target divergences and teacher weights");
    Overrides& o = c.overrides;
    o.option<std::vector<std::string>>(c.app, "--source", {"/paths/sources"}, "source corpora");
    o.option<std::string>(c.app, "--target", {"/paths/target"}, "target corpus");
    o.option<std::string>(c.app, "--vocab", {"/paths/vocab"}, "existing vocabulary file");
    o.option<std::size_t>(c.app, "--max-vocab", {"/features/max_vocab"}, "vocabulary size");
    o.option<std::string>(c.app, "--kind", {"/similarity/kind"}, "js, renyi or mmd");
    o.option<double>(c.app, "--alpha", {"/similarity/alpha"}, "Renyi order");
    o.flag(c.app, "--compare", "/similarity/compare", true, "leave-one-domain-out comparison of all measures");
    o.option<std::size_t>(c.app, "--teacher-budget", {"/multi/teacher_budget"}, "labeled examples shared by all teachers");
    add_distillation(o, c.app);
    add_teacher_training(o, c.app, "--teacher-epochs");
    add_target_split(c);
  }
  {
    Command& c = add(ka::Mode::Distill, "distill a student from one teacher");
    Overrides& o = c.overrides;
    o.option<std::vector<std::string>>(c.app, "--source", {"/paths/sources"}, "labeled source corpus");
    o.option<std::string>(c.app, "--teacher", {"/paths/teacher"}, "trained teacher model instead of a source");
    o.option<std::string>(c.app, "--target", {"/paths/target"}, "target corpus");
    o.option<std::string>(c.app, "--vocab", {"/paths/vocab"}, "existing vocabulary file");
    o.option<std::size_t>(c.app, "--max-vocab", {"/features/max_vocab"}, "vocabulary size");
    o.flag(c.app, "--mcd", "/distill/mcd", true, "add MCD-selected pseudo labels");
    o.option<std::size_t>(c.app, "--unsup-epochs", {"/distill/unsup_epochs"}, "soft-target epochs per round");
    o.option<std::size_t>(c.app, "--pseudo-epochs", {"/distill/pseudo_epochs"}, "pseudo-label epochs per round");
    o.flag(c.app, "--save-models", "/save_models", true, "write model files");
    add_distillation(o, c.app);
    add_teacher_training(o, c.app, "--teacher-epochs");
    add_target_split(c);
  }
  {
    Command& c = add(ka::Mode::DistillMulti, "distill a student from several weighted teachers");
    Overrides& o = c.overrides;
    o.option<std::vector<std::string>>(c.app, "--source", {"/paths/sources"}, "labeled source corpora");
    o.option<std::string>(c.app, "--target", {"/paths/target"}, "target corpus");
    o.option<std::string>(c.app, "--vocab", {"/paths/vocab"}, "existing vocabulary file");
    o.option<std::size_t>(c.app, "--max-vocab", {"/features/max_vocab"}, "vocabulary size");
    o.option<std::string>(c.app, "--kind", {"/similarity/kind"}, "js, renyi or mmd");
    o.option<double>(c.app, "--alpha", {"/similarity/alpha"}, "Renyi order");
    o.option<std::string>(c.app, "--variant", {"/multi/variant"}, "teacher-only, sources, general, sources+general or all");
    o.option<std::size_t>(c.app, "--teacher-budget", {"/multi/teacher_budget"}, "labeled examples shared by all teachers");
    o.flag(c.app, "--save-models", "/save_models", true, "write model files");
    add_distillation(o, c.app);
    add_teacher_training(o, c.app, "--teacher-epochs");
    add_target_split(c);
  }
  {
    Command& c = add(ka::Mode::McdCurve, "teacher accuracy on the top-n target examples by MCD");
    Overrides& o = c.overrides;
    o.option<std::vector<std::string>>(c.app, "--source", {"/paths/sources"}, "labeled source corpus");
    o.option<std::string>(c.app, "--teacher", {"/paths/teacher"}, "trained teacher model instead of a source");
    o.option<std::string>(c.app, "--target", {"/paths/target"}, "labeled target corpus");
    o.option<std::string>(c.app, "--vocab", {"/paths/vocab"}, "existing vocabulary file");
    o.option<std::size_t>(c.app, "--max-vocab", {"/features/max_vocab"}, "vocabulary size");
    o.option<std::vector<std::size_t>>(c.app, "--ns", {"/curve/ns"}, "ascending subset sizes");
    add_teacher_training(o, c.app, "--epochs");
    o.option<std::size_t>(c.app, "--hidden", {"/train/hidden_dim"}, "same as --teacher-hidden");
  }
  {
    Command& c = add(ka::Mode::Evaluate, "accuracy of a saved model on a labeled corpus");
    Overrides& o = c.overrides;
    o.option<std::string>(c.app, "--model", {"/paths/model"}, "model file");
    o.option<std::string>(c.app, "--corpus", {"/paths/corpus"}, "labeled corpus");
    o.option<std::string>(c.app, "--vocab", {"/paths/vocab"}, "vocabulary file if the model has none");
  }
  {
    Command& c = add(ka::Mode::AnalyzePca, "export a PCA projection of teacher representations");
    Overrides& o = c.overrides;
    o.option<std::string>(c.app, "--teacher", {"/paths/teacher"}, "teacher model file");
    o.option<std::string>(c.app, "--corpus", {"/paths/corpus"}, "target corpus");
    o.option<std::string>(c.app, "--vocab", {"/paths/vocab"}, "vocabulary file if the model has none");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (const auto& cmd : commands) {
      if (!cmd->app->parsed()) continue;
      json doc = cmd->config_path.empty() ? json::object() : read_config_file(cmd->config_path);
      if (!doc.is_object()) throw ka::ConfigError(cmd->config_path, "configuration must be a JSON object");
      cmd->overrides.apply(doc);
      if (!cmd->split.empty()) {
        doc["target_split"] = {{"unlabeled", cmd->split[0]}, {"dev", cmd->split[1]}, {"test", cmd->split[2]}};
      }
      doc["mode"] = std::string(ka::mode_name(cmd->mode));
      const ka::ExperimentConfig config = ka::validate_config(doc);
      const ka::RunOutcome outcome = ka::run(config);
      std::cout << outcome.run_dir.string() << '\n';
      if (!config.quiet) {
        for (const auto& [key, value] : outcome.summary["mean"].items()) {
          std::cout << "  " << key << " = " << value.get<double>() << " (sd "
                    << outcome.summary["sd"][key].get<double>() << ")\n";
        }
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ka::exit_code_for(e);
  }
  return 0;
}
