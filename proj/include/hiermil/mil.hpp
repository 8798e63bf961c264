#pragma once

#include <cstdint>
#include <functional>
#include <map>

#include "hiermil/transfer.hpp"

namespace hiermil {

struct MilConfig {
  // Mixing weight: 1 = trust the appearance model alone, 0 = trust the
  // transferred scores alone.
  double lambda = 0.5;
  int num_folds = 10;
  int max_iterations = 10;
  // Converged when fewer than this fraction of images change selection.
  double min_changed_fraction = 0.02;
  // Margin trimmed off the whole-image box used as the first positive.
  double init_boundary_fraction = 0.05;
  TrainConfig train;
  std::uint64_t rng_seed = 0;

  void validate() const;
  // Also rejects combinations that leave the mixed score undefined: the
  // `none` strategy has no transfer term, so it requires lambda == 1.
  void validate_with(const TransferStrategy& strategy) const;
};

// The first training round has no selected proposals yet; each positive
// image instead contributes one synthetic example built from the
// whole-image-minus-boundary box.
struct InitExemplar {
  BoundingBox box;
  FeatureVector features;   // mean over proposals overlapping the box
  int pooled_proposals = 0; // 0 means the fallback was taken
  bool used_fallback = false;
};

InitExemplar initialize(const MilImageView& image, const MilConfig& cfg);

// Seeded partition into folds whose sizes differ by at most one.
std::map<ImageId, int> assign_folds(const std::vector<ImageId>& image_ids,
                                    int num_folds, std::uint64_t rng_seed);

// models[k] was trained without any sample from fold k, so images of fold k
// may be re-localized by it without self-confirmation.
struct FoldModels {
  std::vector<LinearModel> models;
  std::vector<std::vector<ImageId>> trained_on;
};

FoldModels retrain(const std::vector<MilImageView>& positive_images,
                   const std::map<ImageId, int>& selections,
                   const std::map<ImageId, int>& fold_of_image,
                   const std::vector<FeatureVector>& negative_pool,
                   const MilConfig& cfg);

// Picks per image the proposal maximizing
//   lambda * appearance + (1 - lambda) * transfer,
// appearance read from the image's fold-complement model. At lambda == 1 the
// raw model score is used directly (scores may then be empty); otherwise the
// appearance term is sigmoid-squashed to share the transfer term's [0,1]
// scale. Ties go to the lowest proposal index.
std::map<ImageId, int> relocalize(
    const std::vector<MilImageView>& positive_images, const FoldModels& models,
    const std::map<ImageId, int>& fold_of_image, const TransferFunction& tf,
    const std::vector<ScoreTable>& scores, double lambda);

struct MilIterationStats {
  int changed_count = 0;
  double mean_selected_score = 0.0;
};

// Instrumentation window passed to the per-iteration hook; pointers remain
// valid only during the call.
struct MilIterationInfo {
  int iteration = 0;  // 1-based
  const std::map<ImageId, int>* selections = nullptr;
  const std::map<ImageId, int>* previous_selections = nullptr;
  const std::map<ImageId, int>* fold_of_image = nullptr;
  const std::vector<std::vector<ImageId>>* fold_trained_on = nullptr;
  MilIterationStats stats;
};

struct MilHooks {
  std::function<void(const MilIterationInfo&)> on_iteration;
};

struct MilResult {
  ClassId target = -1;
  TransferFunction transfer;
  std::map<ImageId, int> selections;
  std::map<ImageId, BoundingBox> final_boxes;
  LinearModel detector;
  std::vector<MilIterationStats> trace;
};

// The alternating loop: initialize, then re-train / re-localize until the
// selections settle or max_iterations is reached, then fit one detector on
// the final selections of all positive images (no folding). Ground truth is
// unreachable from here by construction: only MilImageView comes in.
MilResult run_mil(ClassId target,
                  const std::vector<MilImageView>& train_images,
                  const Hierarchy& h, const ScorerBank& bank,
                  const TransferStrategy& strategy, const MilConfig& cfg,
                  const ComposeAux& aux = {}, const MilHooks& hooks = {});

}  // namespace hiermil
