// Acceptance gate: runs every criterion once and prints one line each.
//   acceptance [--amazon-dir DIR] [--only AC-5,AC-9] [--work DIR]
// Exit status is 0 when nothing failed; skipped criteria do not count.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "ka/adaptation.hpp"
#include "ka/datasets.hpp"
#include "ka/domain_similarity.hpp"
#include "ka/errors.hpp"
#include "ka/harness.hpp"
#include "support.hpp"

using namespace ka;
namespace fs = std::filesystem;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict = Verdict::Fail;
  std::string detail;
};

struct Criterion {
  std::string id;
  double limit_seconds;  // 0 = no runtime bound
  std::function<Outcome()> run;
};

// Desk-scale settings shared by the synthetic experiments.
constexpr std::size_t kHidden = 64;
constexpr std::size_t kVocab = 3000;
constexpr std::size_t kEpochs = 5;

fs::path g_work;
fs::path g_amazon;

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = g_work / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Writes synthetic domains through the harness and returns their paths.
std::vector<std::string> synth_files(const std::string& name, const SynthSpec& spec) {
  ExperimentConfig cfg;
  cfg.mode = Mode::Synth;
  cfg.out = fresh_dir(name).string();
  cfg.quiet = true;
  cfg.synth = spec;
  const auto outcome = run(cfg);
  std::vector<std::string> paths;
  for (std::size_t d = 0; d < spec.n_domains; ++d) {
    paths.push_back((outcome.run_dir / ("domain" + std::to_string(d) + ".jsonl")).string());
  }
  return paths;
}

SynthSpec shifted(std::size_t n_domains, std::uint64_t seed) {
  SynthSpec s;
  s.n_domains = n_domains;
  s.docs_per_domain = 2000;
  s.shared_fraction = 0.5;
  s.noise_rate = 0.1;
  s.seed = seed;
  return s;
}

ExperimentConfig desk_config(Mode mode, const std::string& out) {
  ExperimentConfig cfg;
  cfg.mode = mode;
  cfg.out = fresh_dir(out).string();
  cfg.quiet = true;
  cfg.max_vocab = kVocab;
  cfg.train.hidden_dim = kHidden;
  cfg.train.epochs = kEpochs;
  cfg.distill.hidden_dim = kHidden;
  cfg.distill.epochs = kEpochs;
  return cfg;
}

double mean_metric(const nlohmann::ordered_json& summary, const std::string& key) {
  return summary["mean"][key].get<double>();
}

// ---------------------------------------------------------------------------

double fd_loss(MlpModel& m, std::size_t t, std::size_t i, double value, const TargetBatch& b, const LossOptions& o) {
  auto tensors = m.params.tensors();
  const double saved = tensors[t][i];
  tensors[t][i] = value;
  const double loss = loss_and_gradients(m, b, o).loss;
  tensors[t][i] = saved;
  return loss;
}

Outcome gradient_oracle() {
  Rng rng(1001);
  const double step = 1e-5;
  std::map<std::string, double> worst;
  for (int trial = 0; trial < 20; ++trial) {
    MlpModel model = testing::random_model(rng, 20, 7, 2);
    TargetBatch base;
    for (int i = 0; i < 4; ++i) {
      base.features.push_back(testing::random_sparse(rng, 20, 0.3));
      base.labels.push_back(static_cast<int>(rng.below(2)));
      base.soft.push_back(testing::random_prob(rng, 2));
    }
    struct Case {
      std::string name;
      TargetKind kind;
      LossOptions options;
    };
    const Case cases[] = {{"hard", TargetKind::Hard, {1.0, false}},
                          {"soft", TargetKind::Soft, {5.0, false}},
                          {"mixed", TargetKind::Mixed, {5.0, true}}};
    for (const auto& c : cases) {
      TargetBatch b = base;
      b.kind = c.kind;
      b.lambda = 0.2;
      const auto analytic = loss_and_gradients(model, b, c.options).grads;
      const auto grads = analytic.tensors();
      auto params = model.params.tensors();
      for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].size(); ++i) {
          const double x = params[t][i];
          const double numeric =
              (fd_loss(model, t, i, x + step, b, c.options) - fd_loss(model, t, i, x - step, b, c.options)) / (2 * step);
          const double err = std::abs(numeric - grads[t][i]) /
                             std::max({std::abs(numeric), std::abs(grads[t][i]), 1e-6});
          worst[c.name] = std::max(worst[c.name], err);
        }
      }
    }
  }
  bool ok = true;
  std::string detail = "max relative error";
  for (const auto& [k, v] : worst) {
    ok = ok && v < 1e-4;
    detail += " " + k + "=" + sci(v);
  }
  return verdict(ok, detail + " (bound 1e-4)");
}

Outcome divergence_closed_forms() {
  const double ln2 = std::log(2.0);
  const double js = js_divergence(ProbVector{1, 0}, ProbVector{0, 1});
  const double kl = kl_divergence(ProbVector{0.3, 0.7}, ProbVector{0.3, 0.7});
  const double renyi = renyi_divergence(ProbVector{1, 0}, ProbVector{0.5, 0.5}, 0.99);
  Rng rng(1002);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 2 + rng.below(8);
    const auto p = testing::random_prob(rng, n, 0.01);
    const auto q = testing::random_prob(rng, n, 0.01);
    worst = std::max(worst, std::abs(renyi_divergence(p, q, 1.0 - 1e-6) - kl_divergence(p, q)));
  }
  const bool ok = std::abs(js - ln2) <= 1e-9 && std::abs(kl) <= 1e-12 && std::abs(renyi - ln2) <= 1e-9 && worst < 1e-3;
  return verdict(ok, "|JS-ln2|=" + sci(std::abs(js - ln2)) + " |KL(p,p)|=" + sci(std::abs(kl)) +
                         " |Renyi-ln2|=" + sci(std::abs(renyi - ln2)) +
                         " max|Renyi(1-1e-6)-KL|=" + sci(worst));
}

Outcome mcd_reductions() {
  Rng rng(1003);
  std::size_t mismatches = 0;
  double worst_scale = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t d = 2 + rng.below(30);
    Centroids c;
    c.means = DenseMatrix::from_rows({testing::random_dense(rng, d), testing::random_dense(rng, d)});
    c.counts = {1, 1};
    auto h = testing::random_dense(rng, d);
    const double s = mcd_score(c, h);
    if (mcd_score_multi(c, h) != s) ++mismatches;
    const double alpha = std::exp(rng.uniform(-5, 5));
    for (auto& v : h) v *= alpha;
    worst_scale = std::max(worst_scale, std::abs(mcd_score(c, h) - s));
  }
  return verdict(mismatches == 0 && worst_scale <= 1e-12,
                 std::to_string(mismatches) + "/1000 bit mismatches, max rescale drift " + sci(worst_scale));
}

// Teacher on 40% of domain A, student on a disjoint 50% with labels removed,
// agreement measured on the remaining 10%.
Outcome same_domain_sanity() {
  SynthSpec spec;
  spec.n_domains = 1;
  spec.docs_per_domain = 2000;
  spec.noise_rate = 0.1;
  double total = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    spec.seed = 40 + seed;
    const Corpus a = synth_domains(spec)[0];
    const auto parts = split(a, {{0.4, 0.5, 0.1}, seed});
    const Vocabulary vocab = build_vocabulary(a, kVocab);
    TrainConfig tc;
    tc.hidden_dim = kHidden;
    tc.epochs = kEpochs;
    tc.seed = derive_seed(seed, 1);
    const FeatureMatrix no_dev;
    const MlpModel teacher = train_teacher(featurize(parts.train, vocab), tc, no_dev);
    Corpus unlabeled = parts.dev;
    for (auto& d : unlabeled.docs) d.label.reset();
    DistillConfig dc;
    dc.hidden_dim = kHidden;
    dc.epochs = kEpochs;
    dc.seed = derive_seed(seed, 2);
    const MlpModel student = distill_single(teacher, featurize(unlabeled, vocab), dc).model;
    const FeatureMatrix held_out = featurize(parts.test, vocab);
    std::size_t agree = 0;
    for (const auto& x : held_out.rows) agree += predict(teacher, x) == predict(student, x);
    const double rate = static_cast<double>(agree) / static_cast<double>(held_out.size());
    total += rate;
    per_seed += " " + fmt(rate, 3);
  }
  const double mean = total / 5.0;
  return verdict(mean >= 0.95, "mean agreement " + fmt(mean) + " (>= 0.95), per seed" + per_seed);
}

Outcome multi_source_ordering() {
  const auto files = synth_files("ac5-data", shifted(4, 55));
  auto cfg = desk_config(Mode::DistillMulti, "ac5");
  cfg.paths.sources = {files[0], files[1], files[2]};
  cfg.paths.target = files[3];
  cfg.variant = MultiVariant::SourceTeachers;
  const auto summary = run(cfg).summary;
  const double teacher_only = mean_metric(summary, "teacher_only");
  const double student = mean_metric(summary, "student_sources");
  return verdict(student >= teacher_only + 0.02, "mean over 10 seeds: student " + fmt(student) + " vs teacher-only " +
                                                     fmt(teacher_only) + " (need margin >= 0.02)");
}

Outcome similarity_harness() {
  const auto files = synth_files("ac6-data", shifted(4, 66));
  auto cfg = desk_config(Mode::Similarity, "ac6");
  cfg.paths.sources = files;
  cfg.compare_measures = true;
  cfg.seeds = {0, 1};
  const auto outcome = run(cfg);
  std::ifstream in(outcome.run_dir / "table.csv");
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    rows.push_back(fields);
  }
  bool ok = rows.size() == 5;
  std::set<std::string> measures;
  for (std::size_t r = 0; ok && r < rows.size(); ++r) {
    ok = rows[r].size() == 5;
    if (!ok || r == 0) continue;
    measures.insert(rows[r][0]);
    for (std::size_t c = 1; c < 5; ++c) {
      const double v = std::stod(rows[r][c]);
      ok = ok && std::isfinite(v) && v >= 0.0 && v <= 1.0;
    }
  }
  ok = ok && measures == std::set<std::string>{"none", "renyi", "mmd", "js"};
  std::string detail = "table.csv " + std::to_string(rows.size()) + " lines;";
  for (std::size_t r = 1; r < rows.size(); ++r) {
    detail += " " + rows[r][0] + "=[";
    for (std::size_t c = 1; c < rows[r].size(); ++c) detail += (c > 1 ? " " : "") + rows[r][c].substr(0, 6);
    detail += "]";
  }
  return verdict(ok, detail);
}

// Teacher trained on the source half of pair k, evaluated on all of the target.
struct SinglePair {
  MlpModel teacher;
  FeatureMatrix target;
};

SinglePair single_pair(std::uint64_t k) {
  const auto domains = synth_domains(shifted(2, 700 + k));
  const Vocabulary vocab = build_vocabulary(std::span<const Corpus>(domains), kVocab);
  const auto parts = split(domains[0], {{0.9, 0.1, 0.0}, k});
  TrainConfig tc;
  tc.hidden_dim = kHidden;
  tc.epochs = kEpochs;
  tc.seed = derive_seed(k, 100);
  return {train_teacher(featurize(parts.train, vocab), tc, featurize(parts.dev, vocab)), featurize(domains[1], vocab)};
}

Outcome mcd_selection_quality() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t k = 0; k < 5; ++k) {
    const auto pair = single_pair(k);
    const auto curve = mcd_accuracy_curve(pair.teacher, pair.target, {100, pair.target.size()});
    wins += curve[0].accuracy >= curve[1].accuracy;
    detail += " " + fmt(curve[0].accuracy, 3) + "/" + fmt(curve[1].accuracy, 3);
  }
  return verdict(wins >= 4, std::to_string(wins) + "/5 pairs with top-100 >= full (top100/full:" + detail + ")");
}

Outcome mcd_correlation() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t k = 0; k < 5; ++k) {
    const auto pair = single_pair(k);
    const auto c = mcd_correlation_report(pair.teacher, pair.target);
    wins += c.r > 0.0 && c.p < 0.05;
    char buf[64];
    std::snprintf(buf, sizeof buf, " r=%.3f,p=%.2g", c.r, c.p);
    detail += buf;
  }
  return verdict(wins >= 4, std::to_string(wins) + "/5 pairs with r > 0 and p < 0.05:" + detail);
}

Outcome ts_mcd_vs_ts() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t k = 0; k < 3; ++k) {
    const auto files = synth_files("ac9-data-" + std::to_string(k), shifted(2, 900 + k));
    auto cfg = desk_config(Mode::Distill, "ac9-" + std::to_string(k));
    cfg.paths.sources = {files[0]};
    cfg.paths.target = files[1];
    const double plain = mean_metric(run(cfg).summary, "student_accuracy");
    cfg.use_mcd = true;
    const double mcd = mean_metric(run(cfg).summary, "student_accuracy");
    wins += mcd >= plain;
    detail += " " + fmt(mcd) + "/" + fmt(plain);
  }
  return verdict(wins >= 2, std::to_string(wins) + "/3 pairs with mean TS-MCD >= TS (mcd/plain:" + detail + ")");
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = s.str();
  }
  return out;
}

Outcome determinism() {
  SynthSpec spec = shifted(3, 1010);
  spec.docs_per_domain = 300;
  const auto files = synth_files("ac10-data", spec);

  const auto small = [&](Mode mode) {
    auto cfg = desk_config(mode, "ac10-" + std::string(mode_name(mode)));
    cfg.seeds = {0, 3};
    cfg.save_models = true;
    cfg.max_vocab = 800;
    cfg.train.hidden_dim = cfg.distill.hidden_dim = 16;
    cfg.train.epochs = cfg.distill.epochs = 2;
    cfg.distill.n_mcd = 50;
    cfg.curve_ns = {10, 50, 100};
    cfg.paths.sources = {files[0], files[1]};
    cfg.paths.target = files[2];
    cfg.synth = spec;
    return cfg;
  };

  std::vector<ExperimentConfig> configs;
  configs.push_back(small(Mode::Synth));
  auto featurize_cfg = small(Mode::Featurize);
  featurize_cfg.paths.corpora = files;
  configs.push_back(featurize_cfg);
  configs.push_back(small(Mode::TrainTeacher));
  configs.push_back(small(Mode::Similarity));
  auto mmd = small(Mode::Similarity);
  mmd.similarity = DivergenceKind::mmd();
  configs.push_back(mmd);
  auto distill = small(Mode::Distill);
  distill.paths.sources = {files[0]};
  distill.use_mcd = true;
  configs.push_back(distill);
  auto multi = small(Mode::DistillMulti);
  multi.variant = MultiVariant::All;
  configs.push_back(multi);
  auto curve = small(Mode::McdCurve);
  curve.paths.sources = {files[0]};
  configs.push_back(curve);

  std::size_t compared = 0;
  std::vector<std::string> diffs;
  fs::path teacher_model;
  const auto check = [&](const ExperimentConfig& cfg) {
    const auto a = run(cfg);
    const auto b = run(cfg);
    const auto ca = dir_contents(a.run_dir);
    const auto cb = dir_contents(b.run_dir);
    if (ca != cb) diffs.emplace_back(mode_name(cfg.mode));
    compared += ca.size();
    if (cfg.mode == Mode::TrainTeacher) teacher_model = a.run_dir / "teacher_seed0.kadp";
  };
  for (const auto& cfg : configs) check(cfg);

  auto evaluate = small(Mode::Evaluate);
  evaluate.paths.model = teacher_model.string();
  evaluate.paths.corpus = files[2];
  check(evaluate);
  auto pca = small(Mode::AnalyzePca);
  pca.paths.teacher = teacher_model.string();
  pca.paths.corpus = files[2];
  check(pca);

  std::string detail = std::to_string(compared) + " files compared across " + std::to_string(configs.size() + 2) +
                       " pipelines";
  for (const auto& d : diffs) detail += "; differs: " + d;
  return verdict(diffs.empty(), detail);
}

Outcome benchmark_reproduction() {
  static const std::pair<const char*, double> kTargets[] = {
      {"books", 0.7918}, {"dvd", 0.7968}, {"electronics", 0.8203}, {"kitchen", 0.8523}};
  if (g_amazon.empty()) return {Verdict::Skip, "no benchmark directory (pass --amazon-dir)"};
  std::vector<std::string> files;
  for (const auto& [name, expected] : kTargets) {
    const fs::path p = g_amazon / (std::string(name) + ".jsonl");
    if (!fs::exists(p)) return {Verdict::Skip, "missing " + p.string()};
    files.push_back(p.string());
  }
  bool ok = true;
  std::string detail;
  for (std::size_t t = 0; t < 4; ++t) {
    ExperimentConfig cfg;
    cfg.mode = Mode::DistillMulti;
    cfg.out = fresh_dir("ac11-" + std::string(kTargets[t].first)).string();
    cfg.quiet = true;
    cfg.train.epochs = 10;
    cfg.distill.epochs = 10;
    for (std::size_t s = 0; s < 4; ++s) {
      if (s != t) cfg.paths.sources.push_back(files[s]);
    }
    cfg.paths.target = files[t];
    const double acc = mean_metric(run(cfg).summary, "student_sources");
    const bool hit = std::abs(acc - kTargets[t].second) <= 0.02;
    ok = ok && hit;
    detail += std::string(" ") + kTargets[t].first + "=" + fmt(acc) + (hit ? "" : "(off)") + "/" + fmt(kTargets[t].second);
  }
  return verdict(ok, "student accuracy vs reference within 0.02:" + detail);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance gate"};
  std::string amazon, work, only;
  app.add_option("--amazon-dir", amazon, "directory with books/dvd/electronics/kitchen .jsonl");
  app.add_option("--work", work, "scratch directory (default: a temporary one)");
  app.add_option("--only", only, "comma-separated criterion ids");
  CLI11_PARSE(app, argc, argv);

  std::unique_ptr<testing::TempDir> temp;
  if (work.empty()) {
    temp = std::make_unique<testing::TempDir>("acceptance");
    g_work = temp->path();
  } else {
    g_work = work;
    fs::create_directories(g_work);
  }
  g_amazon = amazon;
  if (g_amazon.empty() && fs::exists(fs::path(KA_SOURCE_DIR) / "data" / "amazon")) {
    g_amazon = fs::path(KA_SOURCE_DIR) / "data" / "amazon";
  }

  const std::vector<Criterion> criteria = {
      {"AC-1", 5, gradient_oracle},
      {"AC-2", 1, divergence_closed_forms},
      {"AC-3", 1, mcd_reductions},
      {"AC-4", 120, same_domain_sanity},
      {"AC-5", 300, multi_source_ordering},
      {"AC-6", 600, similarity_harness},
      {"AC-7", 120, mcd_selection_quality},
      {"AC-8", 60, mcd_correlation},
      {"AC-9", 600, ts_mcd_vs_ts},
      {"AC-10", 0, determinism},
      {"AC-11", 0, benchmark_reproduction},
  };
  std::set<std::string> selected;
  {
    std::stringstream ss(only);
    std::string id;
    while (std::getline(ss, id, ',')) selected.insert(id);
  }

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.verdict == Verdict::Pass && c.limit_seconds > 0 && secs >= c.limit_seconds) {
      o = {Verdict::Fail, o.detail + "; over the " + fmt(c.limit_seconds, 0) + " s budget"};
    }
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Skip ? "SKIP" : "FAIL";
    std::printf("%-5s %s  %s [%.1f s]\n", c.id.c_str(), tag, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += o.verdict == Verdict::Fail;
  }
  return failures == 0 ? 0 : 1;
}
