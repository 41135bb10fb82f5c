#include "ka/harness.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "ka/errors.hpp"
#include "ka/random.hpp"

namespace ka {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config reading

std::string type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

// One JSON object of the config. Every key looked up is recorded so that
// finish() can reject the ones nobody asked for.
class Section {
 public:
  Section(const json* node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ != nullptr && node_->is_null()) node_ = nullptr;
    if (node_ != nullptr && !node_->is_object()) {
      throw ConfigError(path_, "expected an object, got " + type_name(*node_));
    }
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    known_.insert(key);
    if (node_ == nullptr) return nullptr;
    const auto it = node_->find(key);
    if (it == node_->end() || it->is_null()) return nullptr;
    return &*it;
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_boolean()) mismatch(key, "boolean", *v);
    return v->get<bool>();
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback, std::uint64_t min = 0) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    return as_count(*v, key_path(key), min);
  }

  std::optional<std::uint64_t> optional_count(const std::string& key, std::uint64_t min) {
    const json* v = find(key);
    if (v == nullptr) return std::nullopt;
    return as_count(*v, key_path(key), min);
  }

  double number(const std::string& key, double fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_number()) mismatch(key, "number", *v);
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw ConfigError(key_path(key), "must be finite");
    return d;
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_string()) mismatch(key, "string", *v);
    return v->get<std::string>();
  }

  std::vector<std::string> strings(const std::string& key) {
    const json* v = find(key);
    if (v == nullptr) return {};
    if (!v->is_array()) mismatch(key, "array of strings", *v);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) {
        throw ConfigError(key_path(key) + "[" + std::to_string(i) + "]",
                          "expected a string, got " + type_name((*v)[i]));
      }
      out.push_back((*v)[i].get<std::string>());
    }
    return out;
  }

  template <typename T>
  std::vector<T> counts(const std::string& key, std::vector<T> fallback, std::uint64_t min) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_array()) mismatch(key, "array of integers", *v);
    std::vector<T> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      out.push_back(static_cast<T>(as_count((*v)[i], key_path(key) + "[" + std::to_string(i) + "]", min)));
    }
    return out;
  }

  Section section(const std::string& key) { return Section(find(key), key_path(key)); }

  void finish() const {
    if (node_ == nullptr) return;
    for (const auto& item : node_->items()) {
      if (!known_.count(item.key())) throw ConfigError(key_path(item.key()), "unknown key");
    }
  }

 private:
  [[noreturn]] void mismatch(const std::string& key, const char* expected, const json& got) const {
    throw ConfigError(key_path(key), std::string("expected a ") + expected + ", got " + type_name(got));
  }

  static std::uint64_t as_count(const json& v, const std::string& path, std::uint64_t min) {
    if (!v.is_number_integer()) throw ConfigError(path, "expected a non-negative integer, got " + type_name(v));
    if (v.is_number_unsigned()) {
      const auto u = v.get<std::uint64_t>();
      if (u < min) throw ConfigError(path, "must be >= " + std::to_string(min));
      return u;
    }
    const auto i = v.get<std::int64_t>();
    if (i < 0 || static_cast<std::uint64_t>(i) < min) {
      throw ConfigError(path, "must be >= " + std::to_string(min));
    }
    return static_cast<std::uint64_t>(i);
  }

  const json* node_;
  std::string path_;
  std::set<std::string> known_;
};

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

// ---------------------------------------------------------------------------
// Run bookkeeping

using Metrics = std::vector<std::pair<std::string, double>>;

struct SeedRecord {
  std::optional<std::uint64_t> seed;  // empty for deterministic single-shot modes
  Metrics metrics;
};

class RunContext {
 public:
  RunContext(const ExperimentConfig& config, std::filesystem::path dir)
      : config_(config), dir_(std::move(dir)), start_(std::chrono::steady_clock::now()) {}

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& dir() const { return dir_; }

  void log(const std::string& message) const {
    if (config_.quiet) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ostringstream line;
    line.setf(std::ios::fixed);
    line.precision(1);
    line << "[" << mode_name(config_.mode) << " " << secs << "s] " << message << '\n';
    std::cerr << line.str();
  }

 private:
  const ExperimentConfig& config_;
  std::filesystem::path dir_;
  std::chrono::steady_clock::time_point start_;
};

std::filesystem::path make_run_dir(const ExperimentConfig& config) {
  const std::string digest = [&] {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config.to_json().dump())));
    return std::string(buf, 8);
  }();
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &utc);
  const std::string base = std::string(mode_name(config.mode)) + "-" + digest + "-" + stamp;

  std::error_code ec;
  std::filesystem::create_directories(config.out, ec);
  if (ec) throw IoError("cannot create output directory " + config.out + ": " + ec.message());
  for (int attempt = 0;; ++attempt) {
    const std::filesystem::path dir =
        std::filesystem::path(config.out) / (attempt == 0 ? base : base + "-" + std::to_string(attempt));
    if (std::filesystem::create_directory(dir, ec)) return dir;
    if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  }
}

ordered_json summarize(const ExperimentConfig& config, const std::vector<SeedRecord>& records) {
  ordered_json summary;
  summary["config"] = config.to_json();
  summary["seeds"] = config.seeds;
  ordered_json per_seed = ordered_json::array();
  std::vector<std::string> keys;
  for (const auto& rec : records) {
    ordered_json entry;
    entry["seed"] = rec.seed ? ordered_json(*rec.seed) : ordered_json(nullptr);
    ordered_json metrics = ordered_json::object();
    for (const auto& [k, v] : rec.metrics) {
      metrics[k] = v;
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    entry["metrics"] = std::move(metrics);
    per_seed.push_back(std::move(entry));
  }
  summary["per_seed"] = std::move(per_seed);

  ordered_json mean = ordered_json::object();
  ordered_json sd = ordered_json::object();
  for (const auto& key : keys) {
    std::vector<double> values;
    for (const auto& rec : records) {
      for (const auto& [k, v] : rec.metrics) {
        if (k == key) values.push_back(v);
      }
    }
    const double n = static_cast<double>(values.size());
    const double m = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    mean[key] = m;
    sd[key] = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
  summary["mean"] = std::move(mean);
  summary["sd"] = std::move(sd);
  return summary;
}

void write_json(const std::filesystem::path& path, const ordered_json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Data preparation

std::vector<Corpus> load_all(const std::vector<std::string>& paths) {
  std::vector<Corpus> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(load_corpus(p));
  return out;
}

Corpus labeled_only(const Corpus& corpus) {
  Corpus out;
  out.domain_id = corpus.domain_id;
  for (const auto& doc : corpus.docs) {
    if (doc.label) out.docs.push_back(doc);
  }
  return out;
}

// Vocabulary from paths.vocab, else the model's embedded one, else fitted on
// the pooled corpora (and written to the run directory).
Vocabulary resolve_vocabulary(const RunContext& ctx, std::span<const Corpus> corpora,
                              const std::optional<Vocabulary>& embedded = std::nullopt) {
  const ExperimentConfig& cfg = ctx.config();
  if (!cfg.paths.vocab.empty()) return Vocabulary::load(cfg.paths.vocab);
  if (embedded) return *embedded;
  if (corpora.empty()) {
    throw ConfigError("paths.vocab", "model has no embedded vocabulary; a vocabulary file is required");
  }
  Vocabulary vocab = build_vocabulary(corpora, cfg.max_vocab);
  vocab.save(ctx.dir() / "vocab.json");
  ctx.log("fitted vocabulary of " + std::to_string(vocab.size()) + " n-grams");
  return vocab;
}

struct TargetData {
  FeatureMatrix unlabeled;
  FeatureMatrix dev;
  FeatureMatrix test;
};

TargetData prepare_target(const Corpus& target, const Vocabulary& vocab, const std::array<double, 3>& fractions,
                          std::uint64_t seed) {
  Corpus pool;
  pool.domain_id = target.domain_id;
  for (const auto& doc : target.docs) {
    if (!doc.label) pool.docs.push_back(doc);
  }
  CorpusSplit parts;
  if (pool.empty()) {
    parts = split(target, {fractions, seed});
    pool = std::move(parts.train);
    for (auto& doc : pool.docs) doc.label.reset();
  } else {
    const double rest = fractions[1] + fractions[2];
    if (!(rest > 0.0)) throw InvalidArgument("target_split: dev + test must be positive");
    parts = split(labeled_only(target), {{0.0, fractions[1] / rest, fractions[2] / rest}, seed});
  }
  if (pool.empty()) throw InvalidArgument("target has no documents for the unlabeled pool");
  if (parts.test.empty()) throw InvalidArgument("target has no labeled documents for evaluation");
  return {featurize(pool, vocab), featurize(parts.dev, vocab), featurize(parts.test, vocab)};
}

struct SourceData {
  FeatureMatrix train;
  FeatureMatrix dev;
};

SourceData prepare_source(const Corpus& source, const Vocabulary& vocab, double dev_fraction,
                          std::uint64_t seed, std::size_t budget) {
  Corpus labeled = labeled_only(source);
  if (labeled.empty()) throw InvalidArgument("source " + source.domain_id + " has no labeled documents");
  if (budget > 0 && budget < labeled.size()) {
    const double keep = static_cast<double>(budget) / static_cast<double>(labeled.size());
    labeled = split(labeled, {{keep, 1.0 - keep, 0.0}, derive_seed(seed, 7)}).train;
  }
  const CorpusSplit parts = split(labeled, {{1.0 - dev_fraction, dev_fraction, 0.0}, seed});
  return {featurize(parts.train, vocab), featurize(parts.dev, vocab)};
}

FeatureMatrix concat(const std::vector<FeatureMatrix>& parts, const std::string& domain_id) {
  FeatureMatrix out;
  out.domain_id = domain_id;
  out.dim = parts.empty() ? 0 : parts.front().dim;
  const bool labeled = std::all_of(parts.begin(), parts.end(), [](const FeatureMatrix& m) { return m.labeled(); });
  if (labeled) out.labels.emplace();
  for (const auto& p : parts) {
    out.rows.insert(out.rows.end(), p.rows.begin(), p.rows.end());
    if (labeled) out.labels->insert(out.labels->end(), p.labels->begin(), p.labels->end());
  }
  return out;
}

TrainConfig teacher_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  return tc;
}

DistillConfig student_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  DistillConfig dc = cfg.distill;
  dc.seed = seed;
  return dc;
}

DenseMatrix hidden_matrix(const MlpModel& model, const FeatureMatrix& rows) {
  DenseMatrix out(rows.size(), model.dims().hidden);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto h = forward(model, rows.rows[i]).hidden;
    std::copy(h.begin(), h.end(), out.row(i).begin());
  }
  return out;
}

// Divergence of every source domain from the target. JS and Renyi compare
// term distributions over the shared vocabulary; MMD compares each teacher's
// hidden representations of its own training rows and the target pool.
std::vector<double> source_divergences(const DivergenceKind& kind, const std::vector<Corpus>& sources,
                                       const Corpus& target, const Vocabulary& vocab,
                                       std::span<const MlpModel> teachers,
                                       const std::vector<SourceData>& source_data,
                                       const FeatureMatrix& target_pool) {
  std::vector<double> out;
  if (kind.type == DivergenceKind::Type::Mmd) {
    for (std::size_t i = 0; i < teachers.size(); ++i) {
      out.push_back(mmd(hidden_matrix(teachers[i], source_data[i].train), hidden_matrix(teachers[i], target_pool)));
    }
    return out;
  }
  const ProbVector t = term_distribution(target, vocab);
  for (const auto& s : sources) {
    const ProbVector p = term_distribution(s, vocab);
    out.push_back(kind.type == DivergenceKind::Type::Renyi ? renyi_divergence(p, t, kind.alpha)
                                                           : js_divergence(p, t));
  }
  return out;
}

struct SourceTeachers {
  std::vector<SourceData> data;
  std::vector<MlpModel> models;
};

SourceTeachers train_source_teachers(const RunContext& ctx, const std::vector<Corpus>& sources,
                                     const Vocabulary& vocab, std::uint64_t seed) {
  const ExperimentConfig& cfg = ctx.config();
  const std::size_t per_teacher = cfg.teacher_budget > 0 ? std::max<std::size_t>(1, cfg.teacher_budget / sources.size()) : 0;
  SourceTeachers out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    out.data.push_back(prepare_source(sources[i], vocab, cfg.train.dev_fraction, derive_seed(seed, 10 + i), per_teacher));
    out.models.push_back(train_teacher(out.data[i].train, teacher_config(cfg, derive_seed(seed, 100 + i)), out.data[i].dev));
    ctx.log("seed " + std::to_string(seed) + ": teacher for " + sources[i].domain_id + " trained on " +
            std::to_string(out.data[i].train.size()) + " examples");
  }
  return out;
}

MlpModel train_general_teacher(const ExperimentConfig& cfg, const SourceTeachers& sources, std::uint64_t seed) {
  std::vector<FeatureMatrix> train, dev;
  for (const auto& d : sources.data) {
    train.push_back(d.train);
    dev.push_back(d.dev);
  }
  return train_teacher(concat(train, "general"), teacher_config(cfg, derive_seed(seed, 199)), concat(dev, "general"));
}

std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

// ---------------------------------------------------------------------------
// Pipelines

std::vector<SeedRecord> run_synth(const RunContext& ctx) {
  const auto domains = synth_domains(ctx.config().synth);
  SeedRecord rec;
  for (const auto& corpus : domains) {
    save_corpus(corpus, ctx.dir() / (corpus.domain_id + ".jsonl"));
    const auto positives = std::count_if(corpus.docs.begin(), corpus.docs.end(),
                                         [](const Document& d) { return d.label == 1; });
    rec.metrics.emplace_back(corpus.domain_id + ".docs", static_cast<double>(corpus.size()));
    rec.metrics.emplace_back(corpus.domain_id + ".positive_rate",
                             static_cast<double>(positives) / static_cast<double>(corpus.size()));
  }
  ctx.log("wrote " + std::to_string(domains.size()) + " synthetic domains");
  return {rec};
}

std::vector<SeedRecord> run_featurize(const RunContext& ctx) {
  const auto corpora = load_all(ctx.config().paths.corpora);
  const Vocabulary vocab = resolve_vocabulary(ctx, corpora);
  if (!ctx.config().paths.vocab.empty()) vocab.save(ctx.dir() / "vocab.json");
  SeedRecord rec;
  rec.metrics.emplace_back("vocabulary_size", static_cast<double>(vocab.size()));
  for (const auto& corpus : corpora) {
    const FeatureMatrix fm = featurize(corpus, vocab);
    const auto path = ctx.dir() / (corpus.domain_id + ".features.jsonl");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (std::size_t i = 0; i < fm.size(); ++i) {
      ordered_json row;
      row["label"] = corpus.docs[i].label ? ordered_json(*corpus.docs[i].label) : ordered_json(nullptr);
      ordered_json entries = ordered_json::array();
      for (std::size_t k = 0; k < fm.rows[i].nnz(); ++k) {
        entries.push_back(ordered_json::array({fm.rows[i].indices[k], fm.rows[i].values[k]}));
      }
      row["features"] = std::move(entries);
      out << row.dump() << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
    rec.metrics.emplace_back(corpus.domain_id + ".docs", static_cast<double>(corpus.size()));
  }
  return {rec};
}

std::vector<SeedRecord> run_train_teacher(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.config();
  const auto sources = load_all(cfg.paths.sources);
  std::optional<Corpus> target;
  if (!cfg.paths.target.empty()) target = load_corpus(cfg.paths.target);
  std::vector<Corpus> pooled = sources;
  if (target) pooled.push_back(*target);
  const Vocabulary vocab = resolve_vocabulary(ctx, pooled);

  std::optional<FeatureMatrix> target_eval;
  if (target) {
    const Corpus labeled = labeled_only(*target);
    if (labeled.empty()) throw InvalidArgument("target has no labeled documents");
    target_eval = featurize(labeled, vocab);
  }

  std::vector<SeedRecord> records;
  for (std::uint64_t seed : cfg.seeds) {
    std::vector<FeatureMatrix> train, dev;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      auto d = prepare_source(sources[i], vocab, cfg.train.dev_fraction, derive_seed(seed, 10 + i), 0);
      train.push_back(std::move(d.train));
      dev.push_back(std::move(d.dev));
    }
    const std::string name = sources.size() == 1 ? sources.front().domain_id : "general";
    const FeatureMatrix train_all = concat(train, name);
    const FeatureMatrix dev_all = concat(dev, name);
    const MlpModel teacher = train_teacher(train_all, teacher_config(cfg, derive_seed(seed, 100)), dev_all);
    save_model(teacher, &vocab, ctx.dir() / ("teacher_" + seed_tag(seed) + ".kadp"));

    SeedRecord rec{seed, {}};
    if (dev_all.size() > 0) rec.metrics.emplace_back("dev_accuracy", accuracy(teacher, dev_all));
    if (target_eval) rec.metrics.emplace_back("target_accuracy", accuracy(teacher, *target_eval));
    ctx.log("seed " + std::to_string(seed) + ": teacher trained on " + std::to_string(train_all.size()) + " examples");
    records.push_back(std::move(rec));
  }
  return records;
}

// Measures in the row order of the comparison table.
std::vector<std::pair<std::string, std::optional<DivergenceKind>>> comparison_measures(double alpha) {
  return {{"none", std::nullopt},
          {"renyi", DivergenceKind::renyi(alpha)},
          {"mmd", DivergenceKind::mmd()},
          {"js", DivergenceKind::jensen_shannon()}};
}

std::vector<SeedRecord> run_similarity_comparison(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.config();
  std::vector<std::string> paths = cfg.paths.sources;
  if (!cfg.paths.target.empty()) paths.push_back(cfg.paths.target);
  const auto domains = load_all(paths);
  const Vocabulary vocab = resolve_vocabulary(ctx, domains);
  const auto measures = comparison_measures(cfg.similarity.alpha);

  std::vector<SeedRecord> records;
  for (std::uint64_t seed : cfg.seeds) {
    SeedRecord rec{seed, {}};
    for (std::size_t t = 0; t < domains.size(); ++t) {
      std::vector<Corpus> sources;
      for (std::size_t s = 0; s < domains.size(); ++s) {
        if (s != t) sources.push_back(domains[s]);
      }
      const TargetData target = prepare_target(domains[t], vocab, cfg.target_split, derive_seed(seed, 1));
      const SourceTeachers teachers = train_source_teachers(ctx, sources, vocab, seed);
      for (const auto& [name, kind] : measures) {
        TeacherWeights weights;
        if (kind) {
          weights = similarity_weights(source_divergences(*kind, sources, domains[t], vocab, teachers.models,
                                                          teachers.data, target.unlabeled));
        } else {
          weights.values.assign(sources.size(), 1.0 / static_cast<double>(sources.size()));
        }
        const StudentRun student = distill_multi(teachers.models, weights, target.unlabeled,
                                                 student_config(cfg, derive_seed(seed, 300)), &target.dev);
        const double acc = accuracy(student.model, target.test);
        rec.metrics.emplace_back(name + "." + domains[t].domain_id, acc);
        ctx.log("seed " + std::to_string(seed) + ": target " + domains[t].domain_id + " " + name +
                " student accuracy " + format_number(acc));
      }
    }
    records.push_back(std::move(rec));
  }

  std::vector<std::string> header{"measure"};
  for (const auto& d : domains) header.push_back(d.domain_id);
  std::vector<std::vector<std::string>> rows;
  for (const auto& [name, kind] : measures) {
    std::vector<std::string> row{name};
    for (const auto& d : domains) {
      double sum = 0.0;
      for (const auto& rec : records) {
        for (const auto& [k, v] : rec.metrics) {
          if (k == name + "." + d.domain_id) sum += v;
        }
      }
      row.push_back(format_number(sum / static_cast<double>(records.size())));
    }
    rows.push_back(std::move(row));
  }
  write_csv(ctx.dir() / "table.csv", header, rows);
  return records;
}

std::vector<SeedRecord> run_similarity(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.config();
  if (cfg.compare_measures) return run_similarity_comparison(ctx);

  const auto sources = load_all(cfg.paths.sources);
  const Corpus target = load_corpus(cfg.paths.target);
  std::vector<Corpus> pooled = sources;
  pooled.push_back(target);
  const Vocabulary vocab = resolve_vocabulary(ctx, pooled);
  const bool needs_teachers = cfg.similarity.type == DivergenceKind::Type::Mmd;

  std::vector<SeedRecord> records;
  std::vector<std::vector<std::string>> rows;
  for (std::uint64_t seed : cfg.seeds) {
    SourceTeachers teachers;
    FeatureMatrix pool;
    if (needs_teachers) {
      teachers = train_source_teachers(ctx, sources, vocab, seed);
      pool = prepare_target(target, vocab, cfg.target_split, derive_seed(seed, 1)).unlabeled;
    }
    const auto divs = source_divergences(cfg.similarity, sources, target, vocab, teachers.models, teachers.data, pool);
    const TeacherWeights weights = similarity_weights(divs);
    SeedRecord rec{seed, {}};
    for (std::size_t i = 0; i < sources.size(); ++i) {
      rec.metrics.emplace_back("divergence." + sources[i].domain_id, divs[i]);
      rec.metrics.emplace_back("weight." + sources[i].domain_id, weights[i]);
      rows.push_back({std::to_string(seed), sources[i].domain_id, format_number(divs[i]), format_number(weights[i])});
    }
    records.push_back(std::move(rec));
  }
  write_csv(ctx.dir() / "similarity.csv", {"seed", "source", "divergence", "weight"}, rows);
  return records;
}

struct LoadedTeacher {
  MlpModel model;
  std::optional<Vocabulary> vocab;
};

std::optional<LoadedTeacher> load_teacher_if_given(const ExperimentConfig& cfg) {
  if (cfg.paths.teacher.empty()) return std::nullopt;
  ModelBundle bundle = load_model_bundle(cfg.paths.teacher);
  return LoadedTeacher{std::move(bundle.model), std::move(bundle.vocab)};
}

void check_vocab_matches(const MlpModel& model, const Vocabulary& vocab) {
  if (model.dims().input != vocab.size()) {
    throw FormatError("model input dimension " + std::to_string(model.dims().input) +
                      " does not match vocabulary size " + std::to_string(vocab.size()));
  }
}

std::vector<SeedRecord> run_distill(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.config();
  const Corpus target = load_corpus(cfg.paths.target);
  auto loaded = load_teacher_if_given(cfg);
  std::vector<Corpus> pooled;
  if (!loaded) pooled = load_all(cfg.paths.sources);
  const std::optional<Corpus> source = loaded ? std::nullopt : std::optional<Corpus>(pooled.front());
  pooled.push_back(target);
  const Vocabulary vocab = loaded ? resolve_vocabulary(ctx, {}, loaded->vocab) : resolve_vocabulary(ctx, pooled);
  if (loaded) check_vocab_matches(loaded->model, vocab);

  std::vector<SeedRecord> records;
  for (std::uint64_t seed : cfg.seeds) {
    const TargetData data = prepare_target(target, vocab, cfg.target_split, derive_seed(seed, 1));
    MlpModel teacher;
    if (loaded) {
      teacher = loaded->model;
    } else {
      const SourceData sd = prepare_source(*source, vocab, cfg.train.dev_fraction, derive_seed(seed, 10), 0);
      teacher = train_teacher(sd.train, teacher_config(cfg, derive_seed(seed, 100)), sd.dev);
      if (cfg.save_models) save_model(teacher, &vocab, ctx.dir() / ("teacher_" + seed_tag(seed) + ".kadp"));
    }
    const DistillConfig dc = student_config(cfg, derive_seed(seed, 300));
    const StudentRun student = cfg.use_mcd ? distill_mcd(teacher, data.unlabeled, dc, &data.dev)
                                           : distill_single(teacher, data.unlabeled, dc, &data.dev);
    if (cfg.save_models) save_model(student.model, &vocab, ctx.dir() / ("student_" + seed_tag(seed) + ".kadp"));

    SeedRecord rec{seed, {}};
    rec.metrics.emplace_back("teacher_accuracy", accuracy(teacher, data.test));
    rec.metrics.emplace_back("student_accuracy", accuracy(student.model, data.test));
    rec.metrics.emplace_back("selected_epoch", static_cast<double>(student.history.selected_epoch));
    ctx.log("seed " + std::to_string(seed) + ": teacher " + format_number(rec.metrics[0].second) + ", student " +
            format_number(rec.metrics[1].second));
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<SeedRecord> run_distill_multi(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.config();
  const auto sources = load_all(cfg.paths.sources);
  const Corpus target = load_corpus(cfg.paths.target);
  std::vector<Corpus> pooled = sources;
  pooled.push_back(target);
  const Vocabulary vocab = resolve_vocabulary(ctx, pooled);

  const bool all = cfg.variant == MultiVariant::All;
  const auto wants = [&](MultiVariant v) { return all || cfg.variant == v; };

  std::vector<SeedRecord> records;
  std::vector<std::vector<std::string>> weight_rows;
  for (std::uint64_t seed : cfg.seeds) {
    const TargetData data = prepare_target(target, vocab, cfg.target_split, derive_seed(seed, 1));
    const SourceTeachers teachers = train_source_teachers(ctx, sources, vocab, seed);
    const auto divs = source_divergences(cfg.similarity, sources, target, vocab, teachers.models, teachers.data,
                                         data.unlabeled);
    const TeacherWeights weights = similarity_weights(divs);
    for (std::size_t i = 0; i < sources.size(); ++i) {
      weight_rows.push_back({std::to_string(seed), sources[i].domain_id, format_number(divs[i]), format_number(weights[i])});
    }

    SeedRecord rec{seed, {}};
    rec.metrics.emplace_back("teacher_only", teacher_only_accuracy(teachers.models, weights, data.test));
    const DistillConfig dc = student_config(cfg, derive_seed(seed, 300));
    const auto record_student = [&](const std::string& name, const StudentRun& student) {
      rec.metrics.emplace_back(name, accuracy(student.model, data.test));
      if (cfg.save_models) save_model(student.model, &vocab, ctx.dir() / (name + "_" + seed_tag(seed) + ".kadp"));
    };
    if (wants(MultiVariant::SourceTeachers)) {
      record_student("student_sources", distill_multi(teachers.models, weights, data.unlabeled, dc, &data.dev));
    }
    if (wants(MultiVariant::GeneralTeacher) || wants(MultiVariant::SourcesPlusGeneral)) {
      const MlpModel general = train_general_teacher(cfg, teachers, seed);
      if (wants(MultiVariant::GeneralTeacher)) {
        const std::vector<MlpModel> only{general};
        record_student("student_general", distill_multi(only, TeacherWeights{{1.0}}, data.unlabeled, dc, &data.dev));
      }
      if (wants(MultiVariant::SourcesPlusGeneral)) {
        std::vector<MlpModel> combined = teachers.models;
        combined.push_back(general);
        std::vector<double> raw = weights.values;
        raw.push_back(std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(raw.size()));
        const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
        for (double& w : raw) w /= total;
        record_student("student_sources_general",
                       distill_multi(combined, TeacherWeights{raw}, data.unlabeled, dc, &data.dev));
      }
    }
    std::string line = "seed " + std::to_string(seed) + ":";
    for (const auto& [k, v] : rec.metrics) line += " " + k + "=" + format_number(v);
    ctx.log(line);
    records.push_back(std::move(rec));
  }
  write_csv(ctx.dir() / "weights.csv", {"seed", "source", "divergence", "weight"}, weight_rows);
  return records;
}

std::vector<SeedRecord> run_mcd_curve(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.config();
  const Corpus target = load_corpus(cfg.paths.target);
  auto loaded = load_teacher_if_given(cfg);
  std::vector<Corpus> pooled;
  if (!loaded) pooled = load_all(cfg.paths.sources);
  const std::optional<Corpus> source = loaded ? std::nullopt : std::optional<Corpus>(pooled.front());
  pooled.push_back(target);
  const Vocabulary vocab = loaded ? resolve_vocabulary(ctx, {}, loaded->vocab) : resolve_vocabulary(ctx, pooled);
  if (loaded) check_vocab_matches(loaded->model, vocab);
  const Corpus labeled = labeled_only(target);
  if (labeled.empty()) throw InvalidArgument("mcd-curve: target has no labeled documents");
  const FeatureMatrix eval = featurize(labeled, vocab);

  std::vector<SeedRecord> records;
  std::vector<std::vector<std::string>> rows;
  const auto evaluate = [&](const MlpModel& teacher, std::optional<std::uint64_t> seed) {
    SeedRecord rec{seed, {}};
    const std::string tag = seed ? std::to_string(*seed) : "";
    for (const auto& point : mcd_accuracy_curve(teacher, eval, cfg.curve_ns)) {
      rows.push_back({tag, std::to_string(point.n), format_number(point.accuracy)});
      rec.metrics.emplace_back("accuracy_at_" + std::to_string(point.n), point.accuracy);
    }
    rec.metrics.emplace_back("accuracy_full", accuracy(teacher, eval));
    const Correlation corr = mcd_correlation_report(teacher, eval);
    rec.metrics.emplace_back("pearson_r", corr.r);
    rec.metrics.emplace_back("pearson_p", corr.p);
    records.push_back(std::move(rec));
  };
  if (loaded) {
    evaluate(loaded->model, std::nullopt);
  } else {
    for (std::uint64_t seed : cfg.seeds) {
      const SourceData sd = prepare_source(*source, vocab, cfg.train.dev_fraction, derive_seed(seed, 10), 0);
      evaluate(train_teacher(sd.train, teacher_config(cfg, derive_seed(seed, 100)), sd.dev), seed);
      ctx.log("seed " + std::to_string(seed) + ": curve computed");
    }
  }
  write_csv(ctx.dir() / "curve.csv", {"seed", "n", "accuracy"}, rows);
  return records;
}

std::vector<SeedRecord> run_evaluate(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.config();
  ModelBundle bundle = load_model_bundle(cfg.paths.model);
  const Vocabulary vocab = resolve_vocabulary(ctx, {}, bundle.vocab);
  check_vocab_matches(bundle.model, vocab);
  const Corpus labeled = labeled_only(load_corpus(cfg.paths.corpus));
  if (labeled.empty()) throw InvalidArgument("evaluate: corpus has no labeled documents");
  SeedRecord rec;
  rec.metrics.emplace_back("accuracy", evaluate_accuracy(bundle.model, featurize(labeled, vocab)));
  rec.metrics.emplace_back("examples", static_cast<double>(labeled.size()));
  return {rec};
}

std::vector<SeedRecord> run_analyze_pca(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.config();
  ModelBundle bundle = load_model_bundle(cfg.paths.teacher);
  const Vocabulary vocab = resolve_vocabulary(ctx, {}, bundle.vocab);
  check_vocab_matches(bundle.model, vocab);
  const FeatureMatrix target = featurize(load_corpus(cfg.paths.corpus), vocab);
  pca_export(bundle.model, target, ctx.dir() / "pca.csv");
  SeedRecord rec;
  rec.metrics.emplace_back("examples", static_cast<double>(target.size()));
  return {rec};
}

ordered_json train_to_json(const TrainConfig& t) {
  ordered_json j;
  j["hidden_dim"] = t.hidden_dim;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs > 0 ? ordered_json(t.epochs) : ordered_json(nullptr);
  j["lr"] = t.lr;
  j["dev_fraction"] = t.dev_fraction;
  j["shuffle"] = t.shuffle;
  return j;
}

}  // namespace

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::Synth: return "synth";
    case Mode::Featurize: return "featurize";
    case Mode::TrainTeacher: return "train-teacher";
    case Mode::Similarity: return "similarity";
    case Mode::Distill: return "distill";
    case Mode::DistillMulti: return "distill-multi";
    case Mode::McdCurve: return "mcd-curve";
    case Mode::Evaluate: return "evaluate";
    case Mode::AnalyzePca: return "analyze-pca";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : {Mode::Synth, Mode::Featurize, Mode::TrainTeacher, Mode::Similarity, Mode::Distill,
                 Mode::DistillMulti, Mode::McdCurve, Mode::Evaluate, Mode::AnalyzePca}) {
    if (mode_name(m) == name) return m;
  }
  throw ConfigError("mode", "unknown mode '" + std::string(name) + "'");
}

std::string_view variant_name(MultiVariant variant) {
  switch (variant) {
    case MultiVariant::TeacherOnly: return "teacher-only";
    case MultiVariant::SourceTeachers: return "sources";
    case MultiVariant::GeneralTeacher: return "general";
    case MultiVariant::SourcesPlusGeneral: return "sources+general";
    case MultiVariant::All: return "all";
  }
  return "?";
}

MultiVariant parse_variant(std::string_view name) {
  for (MultiVariant v : {MultiVariant::TeacherOnly, MultiVariant::SourceTeachers, MultiVariant::GeneralTeacher,
                         MultiVariant::SourcesPlusGeneral, MultiVariant::All}) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("multi.variant", "unknown variant '" + std::string(name) +
                                         "' (expected teacher-only, sources, general, sources+general or all)");
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  ordered_json j;
  j["mode"] = std::string(mode_name(mode));
  j["seeds"] = seeds;
  j["out"] = out;
  j["quiet"] = quiet;
  j["save_models"] = save_models;
  ordered_json p;
  p["sources"] = paths.sources;
  p["target"] = paths.target;
  p["teacher"] = paths.teacher;
  p["model"] = paths.model;
  p["corpus"] = paths.corpus;
  p["corpora"] = paths.corpora;
  p["vocab"] = paths.vocab;
  j["paths"] = std::move(p);
  j["features"] = {{"max_vocab", max_vocab}};
  j["train"] = train_to_json(train);
  ordered_json d;
  d["tau"] = distill.tau;
  d["lambda"] = distill.lambda;
  d["n_mcd"] = distill.n_mcd;
  d["epochs"] = distill.epochs > 0 ? ordered_json(distill.epochs) : ordered_json(nullptr);
  d["batch_size"] = distill.batch_size;
  d["lr"] = distill.lr;
  d["hidden_dim"] = distill.hidden_dim;
  d["unsup_epochs"] = distill.unsup_epochs;
  d["pseudo_epochs"] = distill.pseudo_epochs;
  d["mcd"] = use_mcd;
  j["distill"] = std::move(d);
  j["target_split"] = {{"unlabeled", target_split[0]}, {"dev", target_split[1]}, {"test", target_split[2]}};
  ordered_json s;
  s["kind"] = similarity.name();
  s["alpha"] = similarity.alpha;
  s["compare"] = compare_measures;
  j["similarity"] = std::move(s);
  j["multi"] = {{"variant", std::string(variant_name(variant))}, {"teacher_budget", teacher_budget}};
  j["curve"] = {{"ns", curve_ns}};
  ordered_json y;
  y["n_domains"] = synth.n_domains;
  y["vocab_size"] = synth.vocab_size;
  y["shared_fraction"] = synth.shared_fraction;
  y["noise_rate"] = synth.noise_rate;
  y["docs_per_domain"] = synth.docs_per_domain;
  y["doc_length_min"] = synth.doc_length_min;
  y["doc_length_max"] = synth.doc_length_max;
  y["sentiment_rate"] = synth.sentiment_rate;
  y["seed"] = synth.seed;
  j["synth"] = std::move(y);
  return j;
}

ExperimentConfig validate_config(const nlohmann::json& raw) {
  if (!raw.is_object()) throw ConfigError("", "configuration must be a JSON object");
  ExperimentConfig cfg;
  Section root(&raw, "");

  const json* mode = root.find("mode");
  if (mode == nullptr) throw ConfigError("mode", "missing required key");
  if (!mode->is_string()) throw ConfigError("mode", "expected a string, got " + type_name(*mode));
  cfg.mode = parse_mode(mode->get<std::string>());

  cfg.seeds = root.counts<std::uint64_t>("seeds", cfg.seeds, 0);
  require(!cfg.seeds.empty(), "seeds", "must not be empty");
  cfg.out = root.string("out", cfg.out);
  require(!cfg.out.empty(), "out", "must not be empty");
  cfg.quiet = root.boolean("quiet", cfg.quiet);
  cfg.save_models = root.boolean("save_models", cfg.save_models);

  {
    Section p = root.section("paths");
    cfg.paths.sources = p.strings("sources");
    cfg.paths.target = p.string("target", "");
    cfg.paths.teacher = p.string("teacher", "");
    cfg.paths.model = p.string("model", "");
    cfg.paths.corpus = p.string("corpus", "");
    cfg.paths.corpora = p.strings("corpora");
    cfg.paths.vocab = p.string("vocab", "");
    p.finish();
  }
  {
    Section f = root.section("features");
    cfg.max_vocab = f.count("max_vocab", cfg.max_vocab, 1);
    f.finish();
  }
  {
    Section t = root.section("train");
    cfg.train.hidden_dim = t.count("hidden_dim", cfg.train.hidden_dim, 1);
    cfg.train.batch_size = t.count("batch_size", cfg.train.batch_size, 1);
    cfg.train.epochs = t.optional_count("epochs", 1).value_or(0);
    cfg.train.lr = t.number("lr", cfg.train.lr);
    require(cfg.train.lr > 0.0, "train.lr", "must be > 0");
    cfg.train.dev_fraction = t.number("dev_fraction", cfg.train.dev_fraction);
    require(cfg.train.dev_fraction >= 0.0 && cfg.train.dev_fraction < 1.0, "train.dev_fraction", "must be in [0,1)");
    cfg.train.shuffle = t.boolean("shuffle", cfg.train.shuffle);
    t.finish();
  }
  {
    Section d = root.section("distill");
    cfg.distill.tau = d.number("tau", cfg.distill.tau);
    require(cfg.distill.tau > 0.0, "distill.tau", "must be > 0");
    cfg.distill.lambda = d.number("lambda", cfg.distill.lambda);
    require(cfg.distill.lambda >= 0.0 && cfg.distill.lambda <= 1.0, "distill.lambda", "must be in [0,1]");
    cfg.distill.n_mcd = d.count("n_mcd", cfg.distill.n_mcd, 1);
    cfg.distill.epochs = d.optional_count("epochs", 1).value_or(0);
    cfg.distill.batch_size = d.count("batch_size", cfg.distill.batch_size, 1);
    cfg.distill.lr = d.number("lr", cfg.distill.lr);
    require(cfg.distill.lr > 0.0, "distill.lr", "must be > 0");
    cfg.distill.hidden_dim = d.count("hidden_dim", cfg.distill.hidden_dim, 1);
    cfg.distill.unsup_epochs = d.count("unsup_epochs", cfg.distill.unsup_epochs);
    cfg.distill.pseudo_epochs = d.count("pseudo_epochs", cfg.distill.pseudo_epochs);
    require(cfg.distill.unsup_epochs + cfg.distill.pseudo_epochs > 0, "distill.pseudo_epochs",
            "unsup_epochs and pseudo_epochs cannot both be 0");
    cfg.use_mcd = d.boolean("mcd", cfg.use_mcd);
    d.finish();
  }
  {
    Section s = root.section("target_split");
    cfg.target_split = {s.number("unlabeled", cfg.target_split[0]), s.number("dev", cfg.target_split[1]),
                        s.number("test", cfg.target_split[2])};
    for (std::size_t i = 0; i < 3; ++i) {
      static const char* names[3] = {"target_split.unlabeled", "target_split.dev", "target_split.test"};
      require(cfg.target_split[i] >= 0.0, names[i], "must be >= 0");
    }
    require(std::abs(cfg.target_split[0] + cfg.target_split[1] + cfg.target_split[2] - 1.0) <= 1e-9,
            "target_split", "fractions must sum to 1");
    require(cfg.target_split[2] > 0.0, "target_split.test", "must be > 0");
    s.finish();
  }
  {
    Section s = root.section("similarity");
    const double alpha = s.number("alpha", kDefaultRenyiAlpha);
    require(alpha > 0.0 && alpha != 1.0, "similarity.alpha", "must be > 0 and != 1");
    const std::string kind = s.string("kind", "js");
    try {
      cfg.similarity = DivergenceKind::parse(kind, alpha);
    } catch (const InvalidArgument& e) {
      throw ConfigError("similarity.kind", e.what());
    }
    cfg.similarity.alpha = alpha;
    cfg.compare_measures = s.boolean("compare", cfg.compare_measures);
    s.finish();
  }
  {
    Section m = root.section("multi");
    cfg.variant = parse_variant(m.string("variant", std::string(variant_name(cfg.variant))));
    cfg.teacher_budget = m.count("teacher_budget", cfg.teacher_budget);
    m.finish();
  }
  {
    Section c = root.section("curve");
    cfg.curve_ns = c.counts<std::size_t>("ns", cfg.curve_ns, 1);
    require(!cfg.curve_ns.empty(), "curve.ns", "must not be empty");
    require(std::is_sorted(cfg.curve_ns.begin(), cfg.curve_ns.end()), "curve.ns", "must be ascending");
    c.finish();
  }
  {
    Section y = root.section("synth");
    SynthSpec& s = cfg.synth;
    s.n_domains = y.count("n_domains", s.n_domains, 1);
    s.vocab_size = y.count("vocab_size", s.vocab_size, 4);
    s.shared_fraction = y.number("shared_fraction", s.shared_fraction);
    require(s.shared_fraction >= 0.0 && s.shared_fraction <= 1.0, "synth.shared_fraction", "must be in [0,1]");
    s.noise_rate = y.number("noise_rate", s.noise_rate);
    require(s.noise_rate >= 0.0 && s.noise_rate < 0.5, "synth.noise_rate", "must be in [0,0.5)");
    s.docs_per_domain = y.count("docs_per_domain", s.docs_per_domain, 1);
    s.doc_length_min = y.count("doc_length_min", s.doc_length_min, 1);
    s.doc_length_max = y.count("doc_length_max", s.doc_length_max, 1);
    require(s.doc_length_max >= s.doc_length_min, "synth.doc_length_max", "must be >= doc_length_min");
    s.sentiment_rate = y.number("sentiment_rate", s.sentiment_rate);
    require(s.sentiment_rate > 0.0 && s.sentiment_rate <= 1.0, "synth.sentiment_rate", "must be in (0,1]");
    s.seed = y.count("seed", s.seed);
    y.finish();
  }
  root.finish();

  // Mode-specific requirements, reported together.
  std::vector<std::string> missing;
  const auto need = [&missing](bool ok, const char* path) {
    if (!ok) missing.emplace_back(path);
  };
  const bool has_teacher = !cfg.paths.teacher.empty();
  switch (cfg.mode) {
    case Mode::Synth:
      break;
    case Mode::Featurize:
      need(!cfg.paths.corpora.empty(), "paths.corpora");
      break;
    case Mode::TrainTeacher:
      need(!cfg.paths.sources.empty(), "paths.sources");
      need(cfg.train.epochs > 0, "train.epochs");
      break;
    case Mode::Similarity:
      need(!cfg.paths.sources.empty(), "paths.sources");
      if (cfg.compare_measures) {
        need(cfg.train.epochs > 0, "train.epochs");
        need(cfg.distill.epochs > 0, "distill.epochs");
      } else {
        need(!cfg.paths.target.empty(), "paths.target");
        if (cfg.similarity.type == DivergenceKind::Type::Mmd) need(cfg.train.epochs > 0, "train.epochs");
      }
      break;
    case Mode::Distill:
      need(!cfg.paths.target.empty(), "paths.target");
      need(has_teacher || !cfg.paths.sources.empty(), "paths.teacher");
      if (!has_teacher) need(cfg.train.epochs > 0, "train.epochs");
      need(cfg.distill.epochs > 0, "distill.epochs");
      break;
    case Mode::DistillMulti:
      need(!cfg.paths.sources.empty(), "paths.sources");
      need(!cfg.paths.target.empty(), "paths.target");
      need(cfg.train.epochs > 0, "train.epochs");
      if (cfg.variant != MultiVariant::TeacherOnly) need(cfg.distill.epochs > 0, "distill.epochs");
      break;
    case Mode::McdCurve:
      need(!cfg.paths.target.empty(), "paths.target");
      need(has_teacher || !cfg.paths.sources.empty(), "paths.teacher");
      if (!has_teacher) need(cfg.train.epochs > 0, "train.epochs");
      break;
    case Mode::Evaluate:
      need(!cfg.paths.model.empty(), "paths.model");
      need(!cfg.paths.corpus.empty(), "paths.corpus");
      break;
    case Mode::AnalyzePca:
      need(has_teacher, "paths.teacher");
      need(!cfg.paths.corpus.empty(), "paths.corpus");
      break;
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ConfigError(missing.front(), "missing required field(s) for " + std::string(mode_name(cfg.mode)) + ": " + list);
  }
  if ((cfg.mode == Mode::Distill || cfg.mode == Mode::McdCurve) && !has_teacher) {
    require(cfg.paths.sources.size() == 1, "paths.sources", "single-source mode takes exactly one source");
  }
  if (cfg.mode == Mode::Similarity && cfg.compare_measures) {
    const std::size_t domains = cfg.paths.sources.size() + (cfg.paths.target.empty() ? 0 : 1);
    require(domains >= 2, "paths.sources", "the comparison needs at least two domains");
  }
  return cfg;
}

RunOutcome run(const ExperimentConfig& config) {
  const std::filesystem::path dir = make_run_dir(config);
  RunContext ctx(config, dir);
  ctx.log("run directory " + dir.string());
  std::vector<SeedRecord> records;
  switch (config.mode) {
    case Mode::Synth: records = run_synth(ctx); break;
    case Mode::Featurize: records = run_featurize(ctx); break;
    case Mode::TrainTeacher: records = run_train_teacher(ctx); break;
    case Mode::Similarity: records = run_similarity(ctx); break;
    case Mode::Distill: records = run_distill(ctx); break;
    case Mode::DistillMulti: records = run_distill_multi(ctx); break;
    case Mode::McdCurve: records = run_mcd_curve(ctx); break;
    case Mode::Evaluate: records = run_evaluate(ctx); break;
    case Mode::AnalyzePca: records = run_analyze_pca(ctx); break;
  }
  RunOutcome outcome{dir, summarize(config, records)};
  write_json(dir / "summary.json", outcome.summary);
  ctx.log("done");
  return outcome;
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error) != nullptr) return 2;
  if (dynamic_cast<const DataError*>(&error) != nullptr) return 3;
  return 1;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ka
