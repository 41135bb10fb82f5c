#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ka/errors.hpp"
#include "ka/harness.hpp"
#include "support.hpp"

using namespace ka;
using ka::testing::TempDir;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string config_error(const json& raw) {
  try {
    validate_config(raw);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

int cli(const std::string& args) {
  const std::string cmd = std::string(KA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json plain(const nlohmann::ordered_json& j) { return json::parse(j.dump()); }

// Four small synthetic domains written under dir; returns their paths.
std::vector<std::string> small_domains(const std::filesystem::path& dir) {
  ExperimentConfig cfg;
  cfg.mode = Mode::Synth;
  cfg.out = (dir / "synth").string();
  cfg.quiet = true;
  std::filesystem::create_directories(cfg.out);
  cfg.synth.docs_per_domain = 150;
  cfg.synth.seed = 12;
  const auto outcome = run(cfg);
  std::vector<std::string> paths;
  for (int d = 0; d < 4; ++d) paths.push_back((outcome.run_dir / ("domain" + std::to_string(d) + ".jsonl")).string());
  return paths;
}

}  // namespace

TEST_CASE("config defaults") {
  const auto cfg = validate_config(json{{"mode", "synth"}});
  CHECK(cfg.mode == Mode::Synth);
  CHECK(cfg.seeds.size() == 10);
  CHECK(cfg.distill.tau == 5.0);
  CHECK(cfg.distill.batch_size == 10);
  CHECK(cfg.train.batch_size == 10);
  CHECK(cfg.distill.lr == 0.001);
  CHECK(cfg.train.lr == 0.001);
  CHECK(cfg.train.hidden_dim == 1000);
  CHECK(cfg.distill.hidden_dim == 1000);
  CHECK(cfg.max_vocab == 10000);
  CHECK(cfg.distill.lambda == 0.2);
  CHECK(cfg.distill.n_mcd == 500);

  const auto echo = cfg.to_json();
  CHECK(echo["distill"]["tau"] == 5.0);
  CHECK(echo["distill"]["batch_size"] == 10);
  CHECK(echo["distill"]["lr"] == 0.001);
  CHECK(plain(validate_config(plain(echo)).to_json()) == plain(echo));
}

TEST_CASE("config round trip with every section set") {
  const json raw = {
      {"mode", "distill-multi"},
      {"seeds", {3, 1}},
      {"out", "x"},
      {"quiet", true},
      {"paths", {{"sources", {"a.jsonl", "b.jsonl"}}, {"target", "t.jsonl"}}},
      {"features", {{"max_vocab", 77}}},
      {"train", {{"epochs", 2}, {"hidden_dim", 5}, {"dev_fraction", 0.2}, {"shuffle", false}}},
      {"distill", {{"epochs", 3}, {"tau", 2.5}, {"lambda", 0.4}, {"n_mcd", 9}, {"mcd", true}}},
      {"target_split", {{"unlabeled", 0.6}, {"dev", 0.1}, {"test", 0.3}}},
      {"similarity", {{"kind", "renyi"}, {"alpha", 0.5}}},
      {"multi", {{"variant", "all"}, {"teacher_budget", 100}}},
      {"curve", {{"ns", {5, 10}}}},
      {"synth", {{"n_domains", 2}, {"noise_rate", 0.0}}},
  };
  const auto cfg = validate_config(raw);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 1});
  CHECK(cfg.max_vocab == 77);
  CHECK(cfg.train.epochs == 2);
  CHECK_FALSE(cfg.train.shuffle);
  CHECK(cfg.distill.tau == 2.5);
  CHECK(cfg.use_mcd);
  CHECK(cfg.similarity.type == DivergenceKind::Type::Renyi);
  CHECK(cfg.similarity.alpha == 0.5);
  CHECK(cfg.variant == MultiVariant::All);
  CHECK(cfg.teacher_budget == 100);
  CHECK(cfg.synth.n_domains == 2);
  const auto again = validate_config(plain(cfg.to_json()));
  CHECK(plain(again.to_json()) == plain(cfg.to_json()));
}

TEST_CASE("config errors name the offending path") {
  const auto missing = config_error(json{{"mode", "distill"}});
  CHECK(contains(missing, "paths.target"));
  CHECK(contains(missing, "paths.teacher"));
  CHECK(contains(missing, "distill.epochs"));

  CHECK(contains(config_error(json{{"mode", "distill"}, {"distill", {{"tau", -1}}}}), "distill.tau"));
  CHECK(contains(config_error(json{{"mode", "synth"}, {"distill", {{"temperature", 5}}}}), "distill.temperature"));
  CHECK(contains(config_error(json{{"mode", "synth"}, {"colour", 1}}), "colour"));
  const auto type = config_error(json{{"mode", "synth"}, {"train", {{"batch_size", "ten"}}}});
  CHECK(contains(type, "train.batch_size"));
  CHECK(contains(type, "string"));
  CHECK(contains(config_error(json{{"mode", "synth"}, {"seeds", json::array()}}), "seeds"));
  CHECK(contains(config_error(json{{"mode", "fly"}}), "mode"));
  CHECK(contains(config_error(json::object()), "mode"));
  CHECK(contains(config_error(json::array()), "JSON object"));
  CHECK(contains(config_error(json{{"mode", "synth"}, {"target_split", {{"dev", 0.5}}}}), "target_split"));
  CHECK(contains(config_error(json{{"mode", "synth"}, {"curve", {{"ns", {10, 5}}}}}), "curve.ns"));
  CHECK(contains(config_error(json{{"mode", "synth"}, {"similarity", {{"kind", "cosine"}}}}), "similarity.kind"));
  CHECK(config_error(json{{"mode", "synth"}}).empty());
}

TEST_CASE("exit codes by error family") {
  CHECK(exit_code_for(ConfigError("a", "b")) == 2);
  CHECK(exit_code_for(IoError("x")) == 3);
  CHECK(exit_code_for(ParseError(3, "x")) == 3);
  CHECK(exit_code_for(ChecksumMismatch("x")) == 3);
  CHECK(exit_code_for(InvalidArgument("x")) == 1);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("fnv1a digest") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("synth runs are byte-identical") {
  TempDir dir("harness-synth");
  ExperimentConfig cfg;
  cfg.mode = Mode::Synth;
  cfg.out = dir.path().string();
  cfg.quiet = true;
  cfg.synth.n_domains = 2;
  cfg.synth.docs_per_domain = 50;
  const auto a = run(cfg);
  const auto b = run(cfg);
  CHECK(a.run_dir != b.run_dir);
  for (const char* f : {"domain0.jsonl", "domain1.jsonl"}) {
    CHECK_FALSE(slurp(a.run_dir / f).empty());
    CHECK(slurp(a.run_dir / f) == slurp(b.run_dir / f));
  }
  CHECK(a.summary["per_seed"].size() == 1);
  CHECK(a.summary["mean"]["domain0.docs"] == 50.0);
  CHECK(json::parse(slurp(a.run_dir / "summary.json")) == plain(a.summary));
}

TEST_CASE("distill-multi reports one entry per seed and reproduces from its embedded config") {
  TempDir dir("harness-multi");
  const auto domains = small_domains(dir.path());
  ExperimentConfig cfg;
  cfg.mode = Mode::DistillMulti;
  cfg.out = dir.path().string();
  cfg.quiet = true;
  cfg.seeds = {0, 1};
  cfg.paths.sources = {domains[0], domains[1], domains[2]};
  cfg.paths.target = domains[3];
  cfg.max_vocab = 500;
  cfg.train.epochs = 1;
  cfg.train.hidden_dim = 8;
  cfg.distill.epochs = 1;
  cfg.distill.hidden_dim = 8;
  cfg.variant = MultiVariant::All;
  const auto first = run(cfg);
  const auto& per_seed = first.summary["per_seed"];
  REQUIRE(per_seed.size() == 2);
  CHECK(per_seed[0]["seed"] == 0);
  CHECK(per_seed[1]["seed"] == 1);
  for (const char* k : {"teacher_only", "student_sources", "student_general", "student_sources_general"}) {
    CHECK(per_seed[0]["metrics"].contains(k));
    CHECK(first.summary["mean"].contains(k));
    CHECK(first.summary["sd"].contains(k));
  }
  CHECK(std::filesystem::exists(first.run_dir / "weights.csv"));

  const auto replay = run(validate_config(plain(first.summary["config"])));
  CHECK(replay.summary["per_seed"] == per_seed);
  CHECK(slurp(replay.run_dir / "weights.csv") == slurp(first.run_dir / "weights.csv"));
}

TEST_CASE("cli exit codes") {
  TempDir dir("harness-cli");
  const std::string out = " --out " + dir.path().string() + " --quiet";
  CHECK(cli("synth --domains 1 --docs 20" + out) == 0);
  CHECK(cli("evaluate --model " + (dir / "missing.kadp").string() + " --corpus " + (dir / "missing.jsonl").string() + out) == 3);
  CHECK(cli("distill" + out) == 2);
  CHECK(cli("distill --tau -1" + out) == 2);
  CHECK(cli("synth --no-such-flag" + out) == 2);
  CHECK(cli("no-such-command") == 2);
  CHECK(cli("--help") == 0);

  std::ofstream(dir / "bad.json") << "{ nope";
  CHECK(cli("synth --config " + (dir / "bad.json").string() + out) == 2);
}
