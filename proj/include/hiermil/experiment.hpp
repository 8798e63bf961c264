#pragma once

#include <utility>

#include "hiermil/mil.hpp"
#include "hiermil/synth.hpp"

namespace hiermil {

struct ExperimentConfig {
  BankConfig bank;
  MilConfig mil;
  // Per-strategy lambda override keyed by the strategy's string form;
  // unlisted strategies use mil.lambda, except `none` which is always 1.
  std::map<std::string, double> lambda_by_strategy;
  // Per-image suppression of lower-scored detections overlapping a kept one
  // above this IoU, applied before ranking; <= 0 keeps every proposal.
  double nms_iou = 0.3;
  bool parallel = true;

  double lambda_for(const TransferStrategy& strategy) const;
};

struct StrategyRun {
  TransferStrategy strategy;
  double lambda = 1.0;
  bool oracle = false;
  std::map<ClassId, MilResult> per_class;
  std::map<ClassId, ClassId> oracle_pick;  // best-oracle only
};

struct ExperimentResult {
  EvalReport report;
  std::vector<StrategyRun> runs;
  ScorerBank bank;
};

// The full pipeline on an in-memory dataset: bank training on the source
// split (or reuse of a prebuilt bank), one MIL run per strategy and target
// class (classes in parallel), CorLoc on the target training split and
// detector mAP on the test split.
ExperimentResult run_experiment(const Dataset& d,
                                const std::vector<TransferStrategy>& strategies,
                                const ExperimentConfig& cfg,
                                const ScorerBank* prebuilt = nullptr);

struct OracleOutcome {
  ClassId source = -1;
  std::map<ClassId, double> corloc_by_source;
  MilResult best_run;
};

// Runs MIL once per source leaf with that leaf's scorer and returns the one
// with the best CorLoc@0.5 on the target training ground truth. This peeks
// at ground truth by design; it is an analysis tool, not a strategy usable
// in a weakly supervised setting.
OracleOutcome best_source_oracle(ClassId target,
                                 const std::vector<ImageBag>& train_images,
                                 const Hierarchy& h, const ScorerBank& bank,
                                 const MilConfig& cfg);

struct LambdaSelection {
  double best = 1.0;
  // (lambda, mean pseudo-target CorLoc@0.5), ascending by lambda.
  std::vector<std::pair<double, double>> corloc_by_lambda;
};

// Picks lambda on the source set alone: re-designates a seeded 20% of the
// source classes as pseudo-targets, trains a bank on the rest, and keeps the
// lambda whose MIL runs localize the pseudo-targets best. Ties prefer the
// smaller lambda; a single candidate is returned unchanged.
LambdaSelection select_lambda(const Dataset& d, const BankConfig& bank_cfg,
                              const TransferStrategy& strategy,
                              const std::vector<double>& candidates,
                              const MilConfig& cfg);

struct SimilarityRow {
  ClassId target = -1;
  double max_lin_similarity = 0.0;
  double corloc_delta = 0.0;  // with transfer minus without
};

struct SimilarityTable {
  std::vector<SimilarityRow> rows;
  double pearson_r = 0.0;
};

// Plot-ready relation between a target's semantic closeness to the sources
// and how much transfer improved its localization.
SimilarityTable similarity_improvement_table(
    const std::map<ClassId, double>& corloc_baseline,
    const std::map<ClassId, double>& corloc_transfer, const Hierarchy& h,
    const std::vector<double>& ic);

std::map<ClassId, int> source_box_counts(const std::vector<ImageBag>& images);

// Detector scores for every proposal of every image, optionally thinned by
// per-image greedy non-maximum suppression.
std::vector<Detection> score_detections(const LinearModel& detector,
                                        ClassId cls,
                                        const std::vector<ImageBag>& images,
                                        double nms_iou);

}  // namespace hiermil
