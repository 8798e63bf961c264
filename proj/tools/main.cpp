// hiermil command line: dataset generation, scorer-bank training, MIL runs
// with transfer strategies, lambda selection, and analysis reports.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hiermil/pipeline.hpp"
#include "hiermil/report.hpp"

namespace {

bool quiet() {
  const char* v = std::getenv("HIERMIL_QUIET");
  return v != nullptr && std::string(v) == "1";
}

void note(const std::string& line) {
  if (!quiet()) std::fprintf(stderr, "%s\n", line.c_str());
}

struct Args {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string dataset_dir;
  std::string bank_dir;
  std::string out;
  std::vector<std::string> strategies;
  double lambda = 0.0;
  bool lambda_set = false;
  std::string one_strategy;
  std::string report_path;
};

hiermil::PipelineConfig make_config(const Args& a) {
  hiermil::PipelineConfig cfg;
  if (!a.config_path.empty()) cfg = hiermil::load_pipeline_config(a.config_path);
  if (a.seed_set) {
    cfg.seed = a.seed;
    hiermil::resolve_seeds(&cfg);
  }
  if (!a.strategies.empty()) {
    cfg.strategies.clear();
    for (const std::string& s : a.strategies) {
      cfg.strategies.push_back(hiermil::TransferStrategy::parse(s));
    }
  }
  if (a.lambda_set) {
    if (a.lambda < 0.0 || a.lambda > 1.0) {
      throw hiermil::ConfigError("--lambda must lie in [0, 1]");
    }
    // A command-line lambda overrides any per-strategy table from the file.
    cfg.experiment.mil.lambda = a.lambda;
    cfg.experiment.lambda_by_strategy.clear();
  }
  return cfg;
}

CLI::Option* add_common(CLI::App* sub, Args* a) {
  sub->add_option("-c,--config", a->config_path, "JSON config file");
  return sub->add_option("--seed", a->seed, "Root seed override");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised localization with hierarchical transfer"};
  app.require_subcommand(1);
  Args a;

  std::vector<CLI::Option*> seed_opts;
  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  seed_opts.push_back(add_common(gen, &a));
  gen->add_option("-o,--out", a.out, "Output dataset directory")->required();

  CLI::App* bank =
      app.add_subcommand("train-bank", "Train per-node scorers on the source split");
  seed_opts.push_back(add_common(bank, &a));
  bank->add_option("-d,--dataset", a.dataset_dir,
                   "Dataset directory (default: generate from config)");
  bank->add_option("-o,--out", a.out, "Output bank directory")->required();

  CLI::App* run =
      app.add_subcommand("run", "Run MIL with transfer strategies and evaluate");
  seed_opts.push_back(add_common(run, &a));
  run->add_option("-d,--dataset", a.dataset_dir,
                  "Dataset directory (default: generate from config)");
  run->add_option("-b,--bank", a.bank_dir,
                  "Trained bank directory (default: train in process)");
  run->add_option("-o,--out", a.out, "Run output directory")->required();
  run->add_option("--strategy", a.strategies,
                  "Strategy to run, repeatable (replaces the config list)");
  auto* lam = run->add_option("--lambda", a.lambda,
                              "Score blend weight for every listed strategy");

  CLI::App* sel =
      app.add_subcommand("select-lambda", "Pick lambda on a source-only pseudo split");
  seed_opts.push_back(add_common(sel, &a));
  sel->add_option("-d,--dataset", a.dataset_dir,
                  "Dataset directory (default: generate from config)");
  sel->add_option("--strategy", a.one_strategy, "Strategy to tune")
      ->default_val("generic");
  sel->add_option("-o,--out", a.out, "Output JSON file (optional)");

  CLI::App* ana = app.add_subcommand(
      "analyze", "Similarity-vs-improvement table and best-source oracle");
  seed_opts.push_back(add_common(ana, &a));
  ana->add_option("-d,--dataset", a.dataset_dir,
                  "Dataset directory (default: generate from config)");
  ana->add_option("-o,--out", a.out, "Analysis output directory")->required();

  CLI::App* rep = app.add_subcommand("report", "Render a stored report as text");
  rep->add_option("report", a.report_path, "Path to report.json")->required();

  try {
    app.parse(argc, argv);
    for (const CLI::Option* o : seed_opts) {
      if (o->count() > 0) a.seed_set = true;
    }
    a.lambda_set = lam->count() > 0;

    if (gen->parsed()) {
      hiermil::cmd_gen(make_config(a), a.out);
      note("wrote dataset to " + a.out);
    } else if (bank->parsed()) {
      hiermil::cmd_train_bank(make_config(a), a.dataset_dir, a.out);
      note("wrote bank to " + a.out);
    } else if (run->parsed()) {
      const hiermil::ExperimentResult result =
          hiermil::cmd_run(make_config(a), a.dataset_dir, a.bank_dir, a.out);
      note("wrote run to " + a.out);
      if (!quiet()) std::fputs(hiermil::render_report_text(result.report).c_str(), stdout);
    } else if (sel->parsed()) {
      const hiermil::LambdaSelection s =
          hiermil::cmd_select_lambda(make_config(a), a.dataset_dir, a.one_strategy, a.out);
      std::printf("best_lambda %.2f\n", s.best);
    } else if (ana->parsed()) {
      hiermil::cmd_analyze(make_config(a), a.dataset_dir, a.out);
      note("wrote analysis to " + a.out);
    } else if (rep->parsed()) {
      std::fputs(hiermil::cmd_report(a.report_path).c_str(), stdout);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const hiermil::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const hiermil::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
