#include "hiermil/mil.hpp"

#include <algorithm>
#include <cmath>

#include "hiermil/rng.hpp"

namespace hiermil {

void MilConfig::validate() const {
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must be in [0,1]");
  if (num_folds < 2) throw ConfigError("num_folds must be >= 2");
  if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (min_changed_fraction < 0.0 || min_changed_fraction > 1.0) {
    throw ConfigError("min_changed_fraction must be in [0,1]");
  }
  if (init_boundary_fraction < 0.0 || init_boundary_fraction >= 0.45) {
    throw ConfigError("init_boundary_fraction must be in [0, 0.45)");
  }
  train.validate();
}

void MilConfig::validate_with(const TransferStrategy& strategy) const {
  validate();
  if (strategy.kind == StrategyKind::none && lambda != 1.0) {
    throw ConfigError(
        "strategy 'none' has no transfer term; it requires lambda = 1");
  }
}

InitExemplar initialize(const MilImageView& image, const MilConfig& cfg) {
  InitExemplar init;
  const double fx = image.width() * cfg.init_boundary_fraction;
  const double fy = image.height() * cfg.init_boundary_fraction;
  init.box = BoundingBox{fx, fy, image.width() - fx, image.height() - fy};

  const std::vector<Proposal>& props = image.proposals();
  FeatureVector pooled(props.front().features.size(), 0.0);
  int count = 0;
  for (const Proposal& p : props) {
    if (iou(p.box, init.box) > 0.5) {
      for (std::size_t i = 0; i < pooled.size(); ++i) {
        pooled[i] += p.features[i];
      }
      ++count;
    }
  }
  if (count > 0) {
    for (double& v : pooled) v /= static_cast<double>(count);
    init.features = std::move(pooled);
    init.pooled_proposals = count;
  } else {
    std::size_t best = 0;
    for (std::size_t i = 1; i < props.size(); ++i) {
      if (props[i].box.area() > props[best].box.area()) best = i;
    }
    init.features = props[best].features;
    init.used_fallback = true;
  }
  return init;
}

std::map<ImageId, int> assign_folds(const std::vector<ImageId>& image_ids,
                                    int num_folds, std::uint64_t rng_seed) {
  if (num_folds < 2) throw ConfigError("num_folds must be >= 2");
  if (static_cast<int>(image_ids.size()) < num_folds) {
    throw DataError("cannot split " + std::to_string(image_ids.size()) +
                    " images into " + std::to_string(num_folds) + " folds");
  }
  SplitRng rng(rng_seed);
  const std::vector<int> order =
      rng.permutation(static_cast<int>(image_ids.size()));
  std::map<ImageId, int> fold_of;
  for (std::size_t i = 0; i < order.size(); ++i) {
    fold_of[image_ids[order[i]]] = static_cast<int>(i) % num_folds;
  }
  if (fold_of.size() != image_ids.size()) {
    throw DataError("duplicate image ids in fold assignment");
  }
  return fold_of;
}

namespace {

// Shared trainer behind both the initialization round and retrain: one
// positive feature per image, one complement model per fold.
FoldModels train_fold_models(const std::vector<ImageId>& ids,
                             const std::vector<const FeatureVector*>& features,
                             const std::map<ImageId, int>& fold_of_image,
                             const std::vector<FeatureVector>& negative_pool,
                             const MilConfig& cfg) {
  int num_folds = cfg.num_folds;
  FoldModels out;
  out.models.resize(num_folds);
  out.trained_on.resize(num_folds);
  for (int k = 0; k < num_folds; ++k) {
    std::vector<FeatureVector> positives;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (fold_of_image.at(ids[i]) == k) continue;
      positives.push_back(*features[i]);
      out.trained_on[k].push_back(ids[i]);
    }
    if (positives.empty()) {
      throw DataError("fold " + std::to_string(k) +
                      ": complement has no positive images");
    }
    TrainConfig fold_cfg = cfg.train;
    fold_cfg.rng_seed = derive_seed(cfg.rng_seed, "train", k);
    out.models[k] = train_binary(positives, negative_pool, fold_cfg);
  }
  return out;
}

struct RelocalizeOutcome {
  std::map<ImageId, int> selections;
  double mean_selected_score = 0.0;
};

RelocalizeOutcome relocalize_impl(
    const std::vector<MilImageView>& positive_images, const FoldModels& models,
    const std::map<ImageId, int>& fold_of_image, const TransferFunction& tf,
    const std::vector<ScoreTable>& scores, double lambda) {
  if (lambda < 1.0 && scores.size() != positive_images.size()) {
    throw DataError("relocalize: transfer scores missing for some images");
  }
  RelocalizeOutcome out;
  double total = 0.0;
  for (std::size_t i = 0; i < positive_images.size(); ++i) {
    const MilImageView& image = positive_images[i];
    const LinearModel& model = models.models.at(fold_of_image.at(image.image_id()));
    const std::vector<Proposal>& props = image.proposals();
    int best = 0;
    double best_value = 0.0;
    for (std::size_t p = 0; p < props.size(); ++p) {
      double value;
      if (lambda == 1.0) {
        value = score(model, props[p].features);
      } else if (lambda == 0.0) {
        value = evaluate(tf, scores[i], static_cast<int>(p));
      } else {
        value = lambda * score_sigmoid(model, props[p].features) +
                (1.0 - lambda) * evaluate(tf, scores[i], static_cast<int>(p));
      }
      if (p == 0 || value > best_value) {
        best = static_cast<int>(p);
        best_value = value;
      }
    }
    out.selections[image.image_id()] = best;
    total += best_value;
  }
  out.mean_selected_score =
      positive_images.empty() ? 0.0
                              : total / static_cast<double>(positive_images.size());
  return out;
}

}  // namespace

FoldModels retrain(const std::vector<MilImageView>& positive_images,
                   const std::map<ImageId, int>& selections,
                   const std::map<ImageId, int>& fold_of_image,
                   const std::vector<FeatureVector>& negative_pool,
                   const MilConfig& cfg) {
  std::vector<ImageId> ids;
  std::vector<const FeatureVector*> features;
  ids.reserve(positive_images.size());
  features.reserve(positive_images.size());
  for (const MilImageView& image : positive_images) {
    auto it = selections.find(image.image_id());
    if (it == selections.end()) {
      throw DataError("retrain: no selection for image '" + image.image_id() +
                      "'");
    }
    const auto& props = image.proposals();
    if (it->second < 0 || it->second >= static_cast<int>(props.size())) {
      throw DataError("retrain: selection out of range for image '" +
                      image.image_id() + "'");
    }
    ids.push_back(image.image_id());
    features.push_back(&props[it->second].features);
  }
  return train_fold_models(ids, features, fold_of_image, negative_pool, cfg);
}

std::map<ImageId, int> relocalize(
    const std::vector<MilImageView>& positive_images, const FoldModels& models,
    const std::map<ImageId, int>& fold_of_image, const TransferFunction& tf,
    const std::vector<ScoreTable>& scores, double lambda) {
  return relocalize_impl(positive_images, models, fold_of_image, tf, scores,
                         lambda)
      .selections;
}

MilResult run_mil(ClassId target,
                  const std::vector<MilImageView>& train_images,
                  const Hierarchy& h, const ScorerBank& bank,
                  const TransferStrategy& strategy, const MilConfig& cfg,
                  const ComposeAux& aux, const MilHooks& hooks) {
  cfg.validate_with(strategy);
  if (!h.is_target_leaf(target)) {
    throw ConfigError("run_mil: class " + std::to_string(target) +
                      " is not a target leaf");
  }

  std::vector<MilImageView> positives;
  std::vector<FeatureVector> negative_pool;
  for (const MilImageView& image : train_images) {
    if (image.has_label(target)) {
      positives.push_back(image);
    } else {
      for (const Proposal& p : image.proposals()) {
        negative_pool.push_back(p.features);
      }
    }
  }
  if (positives.empty()) {
    throw DataError("run_mil: no positive images for '" + h.node(target).name +
                    "'");
  }
  if (negative_pool.empty()) {
    throw DataError("run_mil: no negative images for '" + h.node(target).name +
                    "'");
  }

  MilResult result;
  result.target = target;
  result.transfer = compose(h, bank, target, strategy, aux);

  std::vector<ScoreTable> scores;
  if (cfg.lambda < 1.0) {
    scores.reserve(positives.size());
    for (const MilImageView& image : positives) {
      scores.push_back(apply_bank(bank, image));
    }
  }

  std::vector<ImageId> ids;
  ids.reserve(positives.size());
  for (const MilImageView& image : positives) ids.push_back(image.image_id());
  const std::map<ImageId, int> fold_of_image =
      assign_folds(ids, cfg.num_folds, derive_seed(cfg.rng_seed, "folds"));

  std::vector<InitExemplar> init;
  init.reserve(positives.size());
  for (const MilImageView& image : positives) {
    init.push_back(initialize(image, cfg));
  }

  for (int iteration = 1; iteration <= cfg.max_iterations; ++iteration) {
    FoldModels models;
    if (iteration == 1) {
      std::vector<const FeatureVector*> features;
      features.reserve(init.size());
      for (const InitExemplar& e : init) features.push_back(&e.features);
      models = train_fold_models(ids, features, fold_of_image, negative_pool,
                                 cfg);
    } else {
      models = retrain(positives, result.selections, fold_of_image,
                       negative_pool, cfg);
    }

    RelocalizeOutcome outcome = relocalize_impl(
        positives, models, fold_of_image, result.transfer, scores, cfg.lambda);

    int changed = 0;
    for (const auto& [id, sel] : outcome.selections) {
      auto it = result.selections.find(id);
      if (it == result.selections.end() || it->second != sel) ++changed;
    }

    MilIterationStats stats{changed, outcome.mean_selected_score};
    if (hooks.on_iteration) {
      MilIterationInfo info;
      info.iteration = iteration;
      info.selections = &outcome.selections;
      info.previous_selections = &result.selections;
      info.fold_of_image = &fold_of_image;
      info.fold_trained_on = &models.trained_on;
      info.stats = stats;
      hooks.on_iteration(info);
    }
    result.trace.push_back(stats);
    result.selections = std::move(outcome.selections);

    const double changed_fraction =
        static_cast<double>(changed) / static_cast<double>(positives.size());
    if (changed_fraction < cfg.min_changed_fraction) break;
  }

  std::vector<FeatureVector> final_features;
  final_features.reserve(positives.size());
  for (const MilImageView& image : positives) {
    const int sel = result.selections.at(image.image_id());
    final_features.push_back(image.proposals()[sel].features);
    result.final_boxes[image.image_id()] = image.proposals()[sel].box;
  }
  TrainConfig detector_cfg = cfg.train;
  detector_cfg.rng_seed = derive_seed(cfg.rng_seed, "detector");
  result.detector = train_binary(final_features, negative_pool, detector_cfg);
  return result;
}

}  // namespace hiermil
