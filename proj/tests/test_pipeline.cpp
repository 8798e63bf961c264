#include <doctest.h>

#include <sys/wait.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiermil/common.hpp"
#include "hiermil/dataset.hpp"
#include "hiermil/pipeline.hpp"
#include "hiermil/rng.hpp"
#include "hiermil/scorer_bank.hpp"
#include "hiermil/synth.hpp"

using namespace hiermil;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir() {
  static std::atomic<int> counter{0};
  const auto tick =
      std::chrono::steady_clock::now().time_since_epoch().count();
  fs::path dir = fs::temp_directory_path() /
                 ("hiermil_pipe_" + std::to_string(tick) + "_" +
                  std::to_string(counter.fetch_add(1)));
  fs::create_directories(dir);
  return dir;
}

// Small enough that a full run finishes in well under a second.
const char* kTinyConfig = R"({
  "seed": 9,
  "gen": {"num_source_classes": 4, "num_target_classes": 2,
          "images_per_class": 6, "proposals_per_image": 12,
          "feature_dim": 8},
  "bank": {"train": {"epochs": 6}},
  "mil": {"num_folds": 3, "max_iterations": 3, "train": {"epochs": 6}},
  "strategies": ["none", "generic"],
  "emit": ["table", "csv", "similarity_plot_data"]
})";

void expect_config_error(const std::string& text, const std::string& needle) {
  try {
    parse_pipeline_config(text);
    FAIL("no error for ", text);
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK_MESSAGE(what.find(needle) != std::string::npos,
                  "wanted '", needle, "' in '", what, "'");
  }
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  return read_file(a) == read_file(b);
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("defaults cover a full benchmark invocation") {
  const PipelineConfig cfg;
  CHECK(cfg.seed == 42);
  REQUIRE(cfg.strategies.size() == 6);
  const char* expected[] = {"none",   "generic", "closest-sources",
                            "closest-ancestor", "visual", "best-oracle"};
  for (int i = 0; i < 6; ++i) {
    CHECK(cfg.strategies[i].to_string() == expected[i]);
  }
  REQUIRE(cfg.lambda_candidates.size() == 11);
  CHECK(cfg.lambda_candidates.front() == 0.0);
  CHECK(cfg.lambda_candidates[3] == 0.3);
  CHECK(cfg.lambda_candidates.back() == 1.0);
  CHECK(cfg.emit == std::set<std::string>{"table", "csv"});
}

TEST_CASE("empty config parses to resolved defaults") {
  const PipelineConfig cfg = parse_pipeline_config("{}");
  CHECK(cfg.seed == 42);
  CHECK(cfg.gen.rng_seed == 42);
  CHECK(cfg.experiment.bank.train.rng_seed == derive_seed(42, "bank"));
  CHECK(cfg.experiment.mil.rng_seed == derive_seed(42, "mil"));
  CHECK(cfg.strategies.size() == 6);
}

TEST_CASE("parser reports the offending field path") {
  expect_config_error("{ nope", "invalid JSON");
  expect_config_error("3", "config: expected an object");
  expect_config_error(R"({"bogus": 1})", "config.bogus: unknown field");
  expect_config_error(R"({"seed": "abc"})",
                      "config.seed: expected a non-negative integer");
  expect_config_error(R"({"seed": -1})",
                      "config.seed: expected a non-negative integer");
  expect_config_error(R"({"seed": 2.5})",
                      "config.seed: expected a non-negative integer");
  expect_config_error(R"({"gen": {"feature_dim": "x"}})",
                      "config.gen.feature_dim: expected an integer");
  expect_config_error(R"({"gen": {"class_separation": "big"}})",
                      "config.gen.class_separation: expected a number");
  expect_config_error(R"({"gen": {"rng_seed": 3}})",
                      "config.gen.rng_seed: unknown field");
  expect_config_error(R"({"bank": {"positive_iou": []}})",
                      "config.bank.positive_iou: expected a number");
  expect_config_error(R"({"mil": {"lambda": true}})",
                      "config.mil.lambda: expected a number");
  expect_config_error(R"({"mil": {"train": {"epochs": 2.5}}})",
                      "config.mil.train.epochs: expected an integer");
  expect_config_error(R"({"mil": {"train": {"surprise": 1}}})",
                      "config.mil.train.surprise: unknown field");
  expect_config_error(
      R"({"mil": {"train": {"learning_rate": {"decay": 5}}}})",
      "config.mil.train.learning_rate.decay: expected a string");
  expect_config_error(
      R"({"bank": {"train": {"learning_rate": {"warmup": 1}}}})",
      "config.bank.train.learning_rate.warmup: unknown field");
  expect_config_error(R"({"parallel": 1})",
                      "config.parallel: expected a boolean");
  expect_config_error(R"({"strategies": []})",
                      "config.strategies: expected a non-empty array");
  expect_config_error(R"({"strategies": [3]})", "expected strategy strings");
  CHECK_THROWS_AS(parse_pipeline_config(R"({"strategies": ["frobnicate"]})"),
                  ConfigError);
  expect_config_error(R"({"lambda_by_strategy": 3})",
                      "config.lambda_by_strategy: expected an object");
  expect_config_error(R"({"lambda_by_strategy": {"generic": "x"}})",
                      "config.lambda_by_strategy.generic: expected a number");
  CHECK_THROWS_AS(
      parse_pipeline_config(R"({"lambda_by_strategy": {"nope": 0.5}})"),
      ConfigError);
  expect_config_error(R"({"lambda_candidates": []})",
                      "config.lambda_candidates: expected a non-empty array");
  expect_config_error(R"({"lambda_candidates": [0.5, "x"]})",
                      "config.lambda_candidates: expected numbers");
  expect_config_error(R"({"emit": "csv"})", "config.emit: expected an array");
  expect_config_error(R"({"emit": ["png"]})", "unknown artifact 'png'");
}

TEST_CASE("parsed fields land where they belong") {
  const PipelineConfig cfg = parse_pipeline_config(R"({
    "seed": 7,
    "gen": {"num_source_classes": 5, "context_signal": 0.4},
    "bank": {"positive_iou": 0.6, "train": {"epochs": 3}},
    "mil": {"lambda": 0.25, "num_folds": 4,
            "train": {"learning_rate": {"initial": 0.5, "decay": "inv_epoch"}}},
    "strategies": ["generic", "ancestor-n=2"],
    "lambda_by_strategy": {"generic": 0.8},
    "lambda_candidates": [0.0, 0.5, 1.0],
    "nms_iou": 0.45,
    "parallel": false,
    "emit": ["csv"]
  })");
  CHECK(cfg.seed == 7);
  CHECK(cfg.gen.num_source_classes == 5);
  CHECK(cfg.gen.context_signal == 0.4);
  CHECK(cfg.gen.rng_seed == 7);
  CHECK(cfg.experiment.bank.positive_iou == 0.6);
  CHECK(cfg.experiment.bank.train.epochs == 3);
  CHECK(cfg.experiment.bank.train.rng_seed == derive_seed(7, "bank"));
  CHECK(cfg.experiment.mil.lambda == 0.25);
  CHECK(cfg.experiment.mil.num_folds == 4);
  CHECK(cfg.experiment.mil.train.learning_rate.initial == 0.5);
  CHECK(cfg.experiment.mil.train.learning_rate.decay == "inv_epoch");
  CHECK(cfg.experiment.mil.rng_seed == derive_seed(7, "mil"));
  REQUIRE(cfg.strategies.size() == 2);
  CHECK(cfg.strategies[1].to_string() == "ancestor-n=2");
  CHECK(cfg.experiment.lambda_by_strategy.at("generic") == 0.8);
  CHECK(cfg.lambda_candidates == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(cfg.experiment.nms_iou == 0.45);
  CHECK_FALSE(cfg.experiment.parallel);
  CHECK(cfg.emit == std::set<std::string>{"csv"});
}

TEST_CASE("serialized config is a fixpoint of the parser") {
  const PipelineConfig cfg = parse_pipeline_config(kTinyConfig);
  const std::string once = pipeline_config_to_json(cfg);
  const std::string twice = pipeline_config_to_json(parse_pipeline_config(once));
  CHECK(once == twice);

  PipelineConfig defaults;
  resolve_seeds(&defaults);
  const std::string d1 = pipeline_config_to_json(defaults);
  CHECK(pipeline_config_to_json(parse_pipeline_config(d1)) == d1);
}

TEST_CASE("seed resolution fans the root seed out by label") {
  PipelineConfig cfg;
  cfg.seed = 123;
  resolve_seeds(&cfg);
  CHECK(cfg.gen.rng_seed == 123);
  CHECK(cfg.experiment.bank.train.rng_seed == derive_seed(123, "bank"));
  CHECK(cfg.experiment.mil.rng_seed == derive_seed(123, "mil"));
  CHECK(cfg.experiment.bank.train.rng_seed != cfg.experiment.mil.rng_seed);
}

namespace {

// One shared end-to-end run: gen, bank, two identical runs, kept on disk
// for the assertions below.
struct PipelineFixture {
  PipelineConfig cfg = parse_pipeline_config(kTinyConfig);
  fs::path root = make_temp_dir();
  std::string ds, bank, run1, run2;
  ExperimentResult result;

  PipelineFixture() {
    ds = (root / "dataset").string();
    bank = (root / "bank").string();
    run1 = (root / "run1").string();
    run2 = (root / "run2").string();
    cmd_gen(cfg, ds);
    cmd_train_bank(cfg, ds, bank);
    result = cmd_run(cfg, ds, bank, run1);
    cmd_run(cfg, ds, bank, run2);
  }
};

const PipelineFixture& pipeline_fixture() {
  static PipelineFixture fx;
  return fx;
}

}  // namespace

TEST_CASE("gen writes a dataset that loads back at the configured shape") {
  const PipelineFixture& fx = pipeline_fixture();
  const Dataset d = load_dataset(fx.ds);
  CHECK(d.train_source.size() == 4 * 6);
  CHECK(d.train_target.size() == 2 * 6);
  CHECK(d.test_target.size() == 2 * 6);
  CHECK(d.hierarchy.digest() == generate(fx.cfg.gen).hierarchy.digest());
}

TEST_CASE("run writes every artifact and they match the returned result") {
  const PipelineFixture& fx = pipeline_fixture();
  const RunPaths paths{fx.run1};

  CHECK(report_from_json(read_file(paths.report_json())) == fx.result.report);
  CHECK(read_file(paths.report_text()) == render_report_text(fx.result.report));
  CHECK(read_file(paths.report_csv()) == report_to_csv(fx.result.report));

  const std::string resolved = read_file(paths.resolved_config());
  CHECK(pipeline_config_to_json(parse_pipeline_config(resolved)) == resolved);

  const auto manifest = nlohmann::json::parse(read_file(paths.manifest()));
  CHECK(manifest.at("format") == "hiermil-run");
  CHECK(manifest.at("version") == 1);
  CHECK(manifest.at("rng_algorithm") == kRngAlgorithm);
  CHECK(manifest.at("seed") == 9);
  CHECK(manifest.at("derived_seeds").at("bank") == derive_seed(9, "bank"));
  CHECK(manifest.at("dataset").at("source") == fx.ds);
  CHECK(manifest.at("bank_digest") == bank_digest(fx.result.bank));

  // Per-strategy traces and selections, one file per target class.
  for (const auto& [cls, name] : fx.result.report.class_names) {
    for (const StrategyRun& run : fx.result.runs) {
      const std::string strat = run.strategy.to_string();
      const fs::path trace =
          fs::path(fx.run1) / "traces" / strat / (name + ".json");
      const fs::path sel =
          fs::path(fx.run1) / "selections" / strat / (name + ".json");
      CHECK(fs::exists(trace));
      CHECK(fs::exists(sel));
      const auto t = nlohmann::json::parse(read_file(trace));
      CHECK(t.at("class") == name);
      CHECK(t.at("iterations").size() == run.per_class.at(cls).trace.size());
    }
  }

  // similarity_plot_data was requested and both baseline strategies ran.
  const auto sim = nlohmann::json::parse(
      read_file(fs::path(fx.run1) / "similarity_table.json"));
  CHECK(sim.at("rows").size() == fx.result.report.class_names.size());
  const std::string sim_csv = read_file(fs::path(fx.run1) / "similarity_table.csv");
  CHECK(sim_csv.rfind("target,max_lin_similarity,corloc_delta\n", 0) == 0);
}

TEST_CASE("two runs from one config produce identical artifacts") {
  const PipelineFixture& fx = pipeline_fixture();
  for (const char* name : {"resolved_config.json", "run_manifest.json",
                           "report.json", "report.txt", "report.csv",
                           "similarity_table.json", "similarity_table.csv"}) {
    CAPTURE(name);
    CHECK(same_bytes(fs::path(fx.run1) / name, fs::path(fx.run2) / name));
  }
}

TEST_CASE("emit list controls which report files appear") {
  const PipelineFixture& fx = pipeline_fixture();
  PipelineConfig cfg = fx.cfg;
  cfg.strategies = {TransferStrategy::parse("none")};
  cfg.emit = {"table"};
  const fs::path out = make_temp_dir() / "run";
  const ExperimentResult r = cmd_run(cfg, "", fx.bank, out.string());
  CHECK(r.report.columns.size() == 1);
  const RunPaths paths{out.string()};
  CHECK(fs::exists(paths.report_json()));
  CHECK(fs::exists(paths.report_text()));
  CHECK_FALSE(fs::exists(paths.report_csv()));
  const auto manifest = nlohmann::json::parse(read_file(paths.manifest()));
  CHECK(manifest.at("dataset").at("source") == "generated");
}

TEST_CASE("similarity plot data requires both baseline columns") {
  const PipelineFixture& fx = pipeline_fixture();
  PipelineConfig cfg = fx.cfg;
  cfg.strategies = {TransferStrategy::parse("generic")};
  cfg.emit = {"similarity_plot_data"};
  const fs::path out = make_temp_dir() / "run";
  CHECK_THROWS_AS(cmd_run(cfg, fx.ds, fx.bank, out.string()), ConfigError);
}

TEST_CASE("a bank from a different hierarchy is rejected") {
  const PipelineFixture& fx = pipeline_fixture();
  PipelineConfig cfg = fx.cfg;
  cfg.gen.num_source_classes = 5;  // different tree, different digest
  const fs::path out = make_temp_dir() / "run";
  CHECK_THROWS_AS(cmd_run(cfg, "", fx.bank, out.string()), DataError);
}

TEST_CASE("select-lambda writes its scan when asked") {
  const PipelineFixture& fx = pipeline_fixture();
  PipelineConfig cfg = fx.cfg;
  cfg.lambda_candidates = {0.0, 1.0};

  const LambdaSelection silent = cmd_select_lambda(cfg, fx.ds, "generic", "");
  CHECK((silent.best == 0.0 || silent.best == 1.0));

  const fs::path out_file = make_temp_dir() / "lambda.json";
  const LambdaSelection s =
      cmd_select_lambda(cfg, fx.ds, "generic", out_file.string());
  CHECK(s.best == silent.best);
  const auto j = nlohmann::json::parse(read_file(out_file));
  CHECK(j.at("strategy") == "generic");
  CHECK(j.at("best_lambda") == s.best);
  CHECK(j.at("corloc_by_lambda").size() == 2);
}

TEST_CASE("analyze writes the similarity table and the oracle summary") {
  const PipelineFixture& fx = pipeline_fixture();
  const fs::path out = make_temp_dir() / "analysis";
  cmd_analyze(fx.cfg, fx.ds, out.string());

  const auto best = nlohmann::json::parse(read_file(out / "best_source.json"));
  CHECK(best.at("median_closest_source_count").get<int>() >= 1);
  CHECK(best.at("per_target").size() == 2);
  for (const auto& [name, entry] : best.at("per_target").items()) {
    CHECK(entry.contains("source"));
    CHECK(entry.at("corloc_05").get<double>() >= 0.0);
  }
  CHECK(fs::exists(out / "similarity_table.csv"));
  const EvalReport rep = report_from_json(read_file(out / "report.json"));
  CHECK(rep.columns.size() == 3);
}

TEST_CASE("stored reports render back to text") {
  const PipelineFixture& fx = pipeline_fixture();
  const RunPaths paths{fx.run1};
  CHECK(cmd_report(paths.report_json()) ==
        render_report_text(fx.result.report));
  CHECK_THROWS_AS(cmd_report((fs::path(fx.run1) / "absent.json").string()),
                  IoError);
}

namespace {

int run_cli(const std::string& args) {
  const char* cli = std::getenv("HIERMIL_CLI");
  REQUIRE_MESSAGE(cli != nullptr, "HIERMIL_CLI must point at the binary");
  const std::string cmd = "HIERMIL_QUIET=1 '" + std::string(cli) + "' " +
                          args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("command line maps error kinds to exit codes") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("frobnicate") == 2);
  const std::string out = (make_temp_dir() / "x").string();
  CHECK(run_cli("run --strategy bogus -o '" + out + "'") == 2);
  CHECK(run_cli("gen -c /nonexistent/config.json -o '" + out + "'") == 3);
  CHECK(run_cli("report /nonexistent/report.json") == 3);
}

TEST_CASE("generating twice from one seed gives byte-identical datasets") {
  const fs::path root = make_temp_dir();
  const fs::path cfg_file = root / "config.json";
  write_file_atomic(cfg_file, kTinyConfig);

  const fs::path g1 = root / "g1";
  const fs::path g2 = root / "g2";
  const std::string common = "gen -c '" + cfg_file.string() + "' --seed 7 -o '";
  REQUIRE(run_cli(common + g1.string() + "'") == 0);
  REQUIRE(run_cli(common + g2.string() + "'") == 0);

  std::vector<fs::path> rel;
  for (const auto& entry : fs::recursive_directory_iterator(g1)) {
    if (entry.is_regular_file()) rel.push_back(fs::relative(entry.path(), g1));
  }
  CHECK(rel.size() >= 4);  // manifest, hierarchy, three splits
  for (const fs::path& r : rel) {
    CAPTURE(r.string());
    REQUIRE(fs::exists(g2 / r));
    CHECK(same_bytes(g1 / r, g2 / r));
  }
}

TEST_SUITE_END();
