#pragma once

#include <set>
#include <string>
#include <vector>

#include "hiermil/experiment.hpp"
#include "hiermil/report.hpp"

namespace hiermil {

// Everything one experiment needs, parsed from a single JSON config file.
// Every field has a default; the fully resolved form is echoed into each
// run directory and can be fed back as a config verbatim. All component
// seeds derive from the one root seed, so artifacts are reproducible from
// (config, code) alone.
struct PipelineConfig {
  std::uint64_t seed = 42;
  GenConfig gen;
  ExperimentConfig experiment;
  std::vector<TransferStrategy> strategies;
  std::vector<double> lambda_candidates;
  std::set<std::string> emit;  // subset of {table, csv, similarity_plot_data}

  PipelineConfig();
};

// Strict parser: unknown keys and ill-typed values fail with the offending
// field path. Component rng seeds are not configurable; they are derived
// from the root seed during parsing/resolution.
PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::string& path);
std::string pipeline_config_to_json(const PipelineConfig& cfg);

// seed -> gen.rng_seed (verbatim), bank and mil seeds (labeled derivation).
void resolve_seeds(PipelineConfig* cfg);

struct RunPaths {
  std::string dir;
  std::string resolved_config() const { return dir + "/resolved_config.json"; }
  std::string manifest() const { return dir + "/run_manifest.json"; }
  std::string report_json() const { return dir + "/report.json"; }
  std::string report_text() const { return dir + "/report.txt"; }
  std::string report_csv() const { return dir + "/report.csv"; }
};

// Subcommand bodies, shared between the CLI binary and the tests.
void cmd_gen(const PipelineConfig& cfg, const std::string& out_dir);
void cmd_train_bank(const PipelineConfig& cfg, const std::string& dataset_dir,
                    const std::string& out_dir);
// dataset_dir empty: generate in memory from cfg.gen. bank_dir empty: train.
ExperimentResult cmd_run(const PipelineConfig& cfg,
                         const std::string& dataset_dir,
                         const std::string& bank_dir,
                         const std::string& out_dir);
LambdaSelection cmd_select_lambda(const PipelineConfig& cfg,
                                  const std::string& dataset_dir,
                                  const std::string& strategy,
                                  const std::string& out_file);
void cmd_analyze(const PipelineConfig& cfg, const std::string& dataset_dir,
                 const std::string& out_dir);
std::string cmd_report(const std::string& report_json_path);

}  // namespace hiermil
