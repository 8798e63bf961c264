#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hiermil/scorer_bank.hpp"

namespace hiermil {

enum class StrategyKind {
  none,             // no transfer; MIL runs on appearance alone
  class_generic,    // the root scorer
  closest_sources,  // average of the nearest source-leaf scorers
  closest_ancestor, // the nearest ancestor that has source leaves below it
  ancestor_min_n,   // nearest ancestor with at least n source leaves
  fixed_source,     // one designated source-leaf scorer
  visual_similarity,   // fixed source chosen by feature-space proximity
  best_source_oracle,  // fixed source chosen by peeking at ground truth
};

struct TransferStrategy {
  StrategyKind kind = StrategyKind::class_generic;
  int min_sources = 1;      // ancestor_min_n only
  std::string fixed_class;  // fixed_source only, leaf name

  // Round-trips the CLI/config spelling: none | generic | closest-sources |
  // closest-ancestor | ancestor-n=<k> | fixed=<class> | visual | best-oracle.
  static TransferStrategy parse(const std::string& text);
  std::string to_string() const;

  bool operator==(const TransferStrategy&) const = default;
};

// Extra inputs for the two resolved-at-runtime strategies.
struct ComposeAux {
  // visual_similarity: per-source-class mean features and the target's mean.
  std::map<ClassId, FeatureVector> source_class_means;
  FeatureVector target_mean;
  // best_source_oracle: the source picked by the oracle analysis loop.
  std::optional<ClassId> oracle_source;
};

// The transfer scoring rule for one target class: which bank nodes
// contribute. Empty node set only for the `none` strategy.
struct TransferFunction {
  ClassId target = -1;
  TransferStrategy strategy;
  std::vector<ClassId> contributing_nodes;  // ascending
};

TransferFunction compose(const Hierarchy& h, const ScorerBank& bank,
                         ClassId target, const TransferStrategy& strategy,
                         const ComposeAux& aux = {});

// Mean of the contributing nodes' scores for one proposal; 0 for `none`.
double evaluate(const TransferFunction& tf, const ScoreTable& scores,
                int proposal);

// Lower median of |closest sources| over the target leaves.
int median_closest_source_count(const Hierarchy& h);

// Feature-space class prototypes: mean over a class's images of the mean
// proposal feature, for the visual_similarity strategy.
FeatureVector mean_image_feature(const MilImageView& image);
std::map<ClassId, FeatureVector> class_mean_features(
    const std::vector<MilImageView>& images);

}  // namespace hiermil
