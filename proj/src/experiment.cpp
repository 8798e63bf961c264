#include "hiermil/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "hiermil/rng.hpp"

namespace hiermil {

double ExperimentConfig::lambda_for(const TransferStrategy& strategy) const {
  if (strategy.kind == StrategyKind::none) return 1.0;
  auto it = lambda_by_strategy.find(strategy.to_string());
  return it == lambda_by_strategy.end() ? mil.lambda : it->second;
}

std::map<ClassId, int> source_box_counts(const std::vector<ImageBag>& images) {
  std::map<ClassId, int> counts;
  for (const ImageBag& bag : images) {
    for (const GtBox& g : bag.gt_boxes) counts[g.cls] += 1;
  }
  return counts;
}

std::vector<Detection> score_detections(const LinearModel& detector,
                                        ClassId cls,
                                        const std::vector<ImageBag>& images,
                                        double nms_iou) {
  std::vector<Detection> detections;
  std::vector<std::pair<double, int>> ranked;  // (-score, index) per image
  for (const ImageBag& bag : images) {
    ranked.clear();
    for (std::size_t i = 0; i < bag.proposals.size(); ++i) {
      ranked.emplace_back(-score(detector, bag.proposals[i].features),
                          static_cast<int>(i));
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<int> kept;
    for (const auto& [neg_score, idx] : ranked) {
      const BoundingBox& box = bag.proposals[idx].box;
      bool suppressed = false;
      if (nms_iou > 0.0) {
        for (int k : kept) {
          if (iou(box, bag.proposals[k].box) > nms_iou) {
            suppressed = true;
            break;
          }
        }
      }
      if (!suppressed) {
        kept.push_back(idx);
        detections.push_back(Detection{bag.image_id, cls, box, -neg_score});
      }
    }
  }
  return detections;
}

namespace {

// One target class under one strategy, with privileged access to the image
// bags so the two analysis strategies can resolve their source pick. The MIL
// run itself only ever sees stripped views.
MilResult run_one_class(ClassId target, const std::vector<ImageBag>& train_images,
                        const Hierarchy& h, const ScorerBank& bank,
                        const TransferStrategy& strategy, const MilConfig& cfg,
                        const ComposeAux& base_aux,
                        OracleOutcome* oracle_out = nullptr) {
  if (strategy.kind == StrategyKind::best_source_oracle) {
    OracleOutcome outcome = best_source_oracle(target, train_images, h, bank, cfg);
    MilResult result = std::move(outcome.best_run);
    if (oracle_out) {
      outcome.best_run = MilResult{};
      *oracle_out = std::move(outcome);
    }
    return result;
  }
  ComposeAux aux = base_aux;
  return run_mil(target, views_of(train_images), h, bank, strategy, cfg, aux);
}

ComposeAux aux_for_target(ClassId target,
                          const std::map<ClassId, FeatureVector>& source_means,
                          const std::map<ClassId, FeatureVector>& target_means) {
  ComposeAux aux;
  aux.source_class_means = source_means;
  auto it = target_means.find(target);
  if (it != target_means.end()) aux.target_mean = it->second;
  return aux;
}

double corloc_at(const MilResult& result,
                 const std::vector<ImageBag>& train_images, double threshold) {
  return corloc(result.final_boxes,
                ground_truth_for(train_images, result.target), threshold);
}

}  // namespace

OracleOutcome best_source_oracle(ClassId target,
                                 const std::vector<ImageBag>& train_images,
                                 const Hierarchy& h, const ScorerBank& bank,
                                 const MilConfig& cfg) {
  if (h.source_leaves().empty()) {
    throw DataError("best_source_oracle: hierarchy has no source leaves");
  }
  OracleOutcome outcome;
  double best = -1.0;
  for (ClassId s : h.source_leaves()) {
    TransferStrategy fixed;
    fixed.kind = StrategyKind::fixed_source;
    fixed.fixed_class = h.node(s).name;
    MilResult run =
        run_mil(target, views_of(train_images), h, bank, fixed, cfg);
    const double c = corloc_at(run, train_images, 0.5);
    outcome.corloc_by_source[s] = c;
    if (c > best) {  // ascending loop: ties keep the smaller class id
      best = c;
      outcome.source = s;
      outcome.best_run = std::move(run);
    }
  }
  return outcome;
}

ExperimentResult run_experiment(const Dataset& d,
                                const std::vector<TransferStrategy>& strategies,
                                const ExperimentConfig& cfg,
                                const ScorerBank* prebuilt) {
  if (strategies.empty()) throw ConfigError("no strategies requested");
  cfg.mil.validate();
  for (const TransferStrategy& strategy : strategies) {
    MilConfig check = cfg.mil;
    check.lambda = cfg.lambda_for(strategy);
    check.validate_with(strategy);
  }

  ExperimentResult out;
  if (prebuilt) {
    if (prebuilt->hierarchy_digest != d.hierarchy.digest()) {
      throw DataError("prebuilt bank belongs to a different hierarchy");
    }
    out.bank = *prebuilt;
  } else {
    out.bank = train_bank(d.hierarchy, d.train_source, cfg.bank);
  }

  const std::map<ClassId, FeatureVector> source_means =
      class_mean_features(views_of(d.train_source));
  const std::map<ClassId, FeatureVector> target_means =
      class_mean_features(strip_gt(d));

  const std::vector<ClassId>& targets = d.hierarchy.target_leaves();
  for (ClassId t : targets) {
    out.report.class_names[t] = d.hierarchy.node(t).name;
  }

  for (const TransferStrategy& strategy : strategies) {
    StrategyRun run;
    run.strategy = strategy;
    run.lambda = cfg.lambda_for(strategy);
    run.oracle = strategy.kind == StrategyKind::best_source_oracle;

    auto run_class = [&](ClassId t) {
      MilConfig mil_cfg = cfg.mil;
      mil_cfg.lambda = run.lambda;
      mil_cfg.rng_seed = derive_seed(cfg.mil.rng_seed, "class", t);
      OracleOutcome oracle;
      MilResult result = run_one_class(
          t, d.train_target, d.hierarchy, out.bank, strategy, mil_cfg,
          aux_for_target(t, source_means, target_means),
          run.oracle ? &oracle : nullptr);
      return std::make_pair(std::move(result), oracle.source);
    };

    if (cfg.parallel) {
      std::vector<std::pair<ClassId, std::future<std::pair<MilResult, ClassId>>>>
          futures;
      for (ClassId t : targets) {
        futures.emplace_back(
            t, std::async(std::launch::async, run_class, t));
      }
      for (auto& [t, fut] : futures) {
        auto [result, pick] = fut.get();
        if (run.oracle) run.oracle_pick[t] = pick;
        run.per_class[t] = std::move(result);
      }
    } else {
      for (ClassId t : targets) {
        auto [result, pick] = run_class(t);
        if (run.oracle) run.oracle_pick[t] = pick;
        run.per_class[t] = std::move(result);
      }
    }

    EvalColumn column;
    column.label = strategy.to_string();
    column.lambda = run.lambda;
    column.oracle = run.oracle;
    for (const auto& [t, result] : run.per_class) {
      ClassEval eval;
      eval.corloc_05 = corloc_at(result, d.train_target, 0.5);
      eval.corloc_07 = corloc_at(result, d.train_target, 0.7);
      const std::vector<Detection> dets =
          score_detections(result.detector, t, d.test_target, cfg.nms_iou);
      const GroundTruthBoxes gt = ground_truth_for(d.test_target, t);
      eval.ap_05 = average_precision(dets, gt, 0.5);
      eval.ap_07 = average_precision(dets, gt, 0.7);
      column.per_class[t] = eval;
    }
    out.report.columns.push_back(std::move(column));
    out.runs.push_back(std::move(run));
  }
  return out;
}

LambdaSelection select_lambda(const Dataset& d, const BankConfig& bank_cfg,
                              const TransferStrategy& strategy,
                              const std::vector<double>& candidates,
                              const MilConfig& cfg) {
  if (candidates.empty()) throw ConfigError("select_lambda: no candidates");
  std::vector<double> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  for (double l : sorted) {
    if (l < 0.0 || l > 1.0) {
      throw ConfigError("select_lambda: candidate outside [0,1]");
    }
  }
  LambdaSelection selection;
  if (sorted.size() == 1) {
    selection.best = sorted.front();
    return selection;
  }

  const std::vector<ClassId>& sources = d.hierarchy.source_leaves();
  if (sources.size() < 3) {
    throw DataError("select_lambda needs at least 3 source classes");
  }

  // Seeded 80/20 re-designation of the source classes. At least two classes
  // go to the pseudo-target side so each one's MIL run can draw negative
  // images from the other's.
  SplitRng rng(derive_seed(cfg.rng_seed, "pseudo_split"));
  const std::vector<int> perm =
      rng.permutation(static_cast<int>(sources.size()));
  int num_pseudo_targets = std::max(
      2, static_cast<int>(std::lround(0.2 * static_cast<double>(sources.size()))));
  num_pseudo_targets =
      std::min(num_pseudo_targets, static_cast<int>(sources.size()) - 1);

  std::set<ClassId> pseudo_targets, pseudo_sources;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (static_cast<int>(i) < num_pseudo_targets) {
      pseudo_targets.insert(sources[perm[i]]);
    } else {
      pseudo_sources.insert(sources[perm[i]]);
    }
  }
  std::set<ClassId> all_targets = pseudo_targets;
  for (ClassId t : d.hierarchy.target_leaves()) all_targets.insert(t);
  const Hierarchy pseudo_h = d.hierarchy.with_roles(pseudo_sources, all_targets);

  std::vector<ImageBag> source_side, target_side;
  for (const ImageBag& bag : d.train_source) {
    const bool is_target_image =
        std::any_of(bag.image_labels.begin(), bag.image_labels.end(),
                    [&](ClassId c) { return pseudo_targets.count(c) != 0; });
    (is_target_image ? target_side : source_side).push_back(bag);
  }
  if (source_side.empty() || target_side.empty()) {
    throw DataError("select_lambda: pseudo split left an empty side");
  }

  BankConfig pseudo_bank_cfg = bank_cfg;
  pseudo_bank_cfg.train.rng_seed = derive_seed(cfg.rng_seed, "pseudo_bank");
  const ScorerBank pseudo_bank =
      train_bank(pseudo_h, source_side, pseudo_bank_cfg);

  const std::map<ClassId, FeatureVector> source_means =
      class_mean_features(views_of(source_side));
  const std::map<ClassId, FeatureVector> target_means =
      class_mean_features(views_of(target_side));

  double best_corloc = -1.0;
  for (double lambda : sorted) {
    double total = 0.0;
    int evaluated = 0;
    for (ClassId t : pseudo_targets) {
      MilConfig mil_cfg = cfg;
      mil_cfg.lambda = lambda;
      mil_cfg.rng_seed = derive_seed(cfg.rng_seed, "class", t);
      const MilResult result =
          run_one_class(t, target_side, pseudo_h, pseudo_bank, strategy,
                        mil_cfg, aux_for_target(t, source_means, target_means));
      total += corloc_at(result, target_side, 0.5);
      ++evaluated;
    }
    const double mean = total / static_cast<double>(evaluated);
    selection.corloc_by_lambda.emplace_back(lambda, mean);
    if (mean > best_corloc) {  // ascending candidates: ties keep smaller
      best_corloc = mean;
      selection.best = lambda;
    }
  }
  return selection;
}

SimilarityTable similarity_improvement_table(
    const std::map<ClassId, double>& corloc_baseline,
    const std::map<ClassId, double>& corloc_transfer, const Hierarchy& h,
    const std::vector<double>& ic) {
  if (corloc_baseline.size() != corloc_transfer.size()) {
    throw DataError("similarity table: target sets differ");
  }
  SimilarityTable table;
  std::vector<double> xs, ys;
  for (const auto& [t, base] : corloc_baseline) {
    auto it = corloc_transfer.find(t);
    if (it == corloc_transfer.end()) {
      throw DataError("similarity table: target sets differ");
    }
    SimilarityRow row;
    row.target = t;
    row.corloc_delta = it->second - base;
    double best = 0.0;
    for (ClassId s : h.source_leaves()) {
      best = std::max(best, lin_similarity(h, ic, t, s));
    }
    row.max_lin_similarity = best;
    xs.push_back(row.max_lin_similarity);
    ys.push_back(row.corloc_delta);
    table.rows.push_back(row);
  }
  table.pearson_r =
      table.rows.size() >= 2 ? pearson_correlation(xs, ys) : 0.0;
  return table;
}

}  // namespace hiermil
