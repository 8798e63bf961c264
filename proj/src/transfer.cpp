#include "hiermil/transfer.hpp"

#include <algorithm>
#include <cmath>

namespace hiermil {

TransferStrategy TransferStrategy::parse(const std::string& text) {
  TransferStrategy s;
  if (text == "none") {
    s.kind = StrategyKind::none;
  } else if (text == "generic") {
    s.kind = StrategyKind::class_generic;
  } else if (text == "closest-sources") {
    s.kind = StrategyKind::closest_sources;
  } else if (text == "closest-ancestor") {
    s.kind = StrategyKind::closest_ancestor;
  } else if (text.rfind("ancestor-n=", 0) == 0) {
    s.kind = StrategyKind::ancestor_min_n;
    const std::string arg = text.substr(11);
    std::size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(arg, &used);
    } catch (const std::exception&) {
      throw ConfigError("bad ancestor-n count in '" + text + "'");
    }
    if (used != arg.size() || n < 1) {
      throw ConfigError("bad ancestor-n count in '" + text + "'");
    }
    s.min_sources = n;
  } else if (text.rfind("fixed=", 0) == 0) {
    s.kind = StrategyKind::fixed_source;
    s.fixed_class = text.substr(6);
    if (s.fixed_class.empty()) {
      throw ConfigError("fixed= strategy needs a class name");
    }
  } else if (text == "visual") {
    s.kind = StrategyKind::visual_similarity;
  } else if (text == "best-oracle") {
    s.kind = StrategyKind::best_source_oracle;
  } else {
    throw ConfigError("unknown strategy '" + text + "'");
  }
  return s;
}

std::string TransferStrategy::to_string() const {
  switch (kind) {
    case StrategyKind::none: return "none";
    case StrategyKind::class_generic: return "generic";
    case StrategyKind::closest_sources: return "closest-sources";
    case StrategyKind::closest_ancestor: return "closest-ancestor";
    case StrategyKind::ancestor_min_n:
      return "ancestor-n=" + std::to_string(min_sources);
    case StrategyKind::fixed_source: return "fixed=" + fixed_class;
    case StrategyKind::visual_similarity: return "visual";
    case StrategyKind::best_source_oracle: return "best-oracle";
  }
  throw ConfigError("corrupt strategy kind");
}

namespace {

double squared_distance(const FeatureVector& a, const FeatureVector& b) {
  if (a.size() != b.size()) {
    throw DataError("feature dimension mismatch in similarity computation");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

ClassId nearest_source_by_features(const ComposeAux& aux) {
  if (aux.source_class_means.empty() || aux.target_mean.empty()) {
    throw ConfigError(
        "visual strategy needs source class means and a target mean");
  }
  ClassId best = -1;
  double best_d = 0.0;
  for (const auto& [cls, mean] : aux.source_class_means) {
    const double d = squared_distance(mean, aux.target_mean);
    if (best < 0 || d < best_d) {  // map order breaks ties toward smaller id
      best = cls;
      best_d = d;
    }
  }
  return best;
}

}  // namespace

TransferFunction compose(const Hierarchy& h, const ScorerBank& bank,
                         ClassId target, const TransferStrategy& strategy,
                         const ComposeAux& aux) {
  if (!h.is_target_leaf(target)) {
    throw ConfigError("compose: class " + std::to_string(target) +
                      " is not a target leaf");
  }
  TransferFunction tf;
  tf.target = target;
  tf.strategy = strategy;

  switch (strategy.kind) {
    case StrategyKind::none:
      return tf;  // no contributing nodes by definition
    case StrategyKind::class_generic:
      tf.contributing_nodes = {kRootId};
      break;
    case StrategyKind::closest_sources:
      tf.contributing_nodes = h.closest_sources(target);
      break;
    case StrategyKind::closest_ancestor:
      tf.contributing_nodes = {h.closest_ancestor_with_min_sources(target, 1)};
      break;
    case StrategyKind::ancestor_min_n:
      tf.contributing_nodes = {
          h.closest_ancestor_with_min_sources(target, strategy.min_sources)};
      break;
    case StrategyKind::fixed_source: {
      const auto id = h.find_by_name(strategy.fixed_class);
      if (!id || !h.is_source_leaf(*id)) {
        throw ConfigError("fixed= strategy: '" + strategy.fixed_class +
                          "' is not a source leaf");
      }
      tf.contributing_nodes = {*id};
      break;
    }
    case StrategyKind::visual_similarity: {
      const ClassId best = nearest_source_by_features(aux);
      if (!h.is_source_leaf(best)) {
        throw ConfigError("visual strategy resolved to a non-source class");
      }
      tf.contributing_nodes = {best};
      break;
    }
    case StrategyKind::best_source_oracle: {
      if (!aux.oracle_source) {
        throw ConfigError(
            "best-oracle strategy needs the oracle's source pick");
      }
      if (!h.is_source_leaf(*aux.oracle_source)) {
        throw ConfigError("oracle source is not a source leaf");
      }
      tf.contributing_nodes = {*aux.oracle_source};
      break;
    }
  }

  for (ClassId node : tf.contributing_nodes) {
    if (!bank.is_trained(node)) {
      throw DataError("strategy " + strategy.to_string() +
                      " needs untrained node '" + h.node(node).name + "'");
    }
  }
  return tf;
}

double evaluate(const TransferFunction& tf, const ScoreTable& scores,
                int proposal) {
  if (tf.contributing_nodes.empty()) return 0.0;
  double sum = 0.0;
  for (ClassId node : tf.contributing_nodes) sum += scores.at(proposal, node);
  return sum / static_cast<double>(tf.contributing_nodes.size());
}

int median_closest_source_count(const Hierarchy& h) {
  const std::vector<ClassId>& targets = h.target_leaves();
  if (targets.empty()) throw DataError("hierarchy has no target leaves");
  std::vector<int> counts;
  counts.reserve(targets.size());
  for (ClassId t : targets) {
    counts.push_back(static_cast<int>(h.closest_sources(t).size()));
  }
  std::sort(counts.begin(), counts.end());
  return counts[(counts.size() - 1) / 2];
}

FeatureVector mean_image_feature(const MilImageView& image) {
  const std::vector<Proposal>& props = image.proposals();
  if (props.empty()) throw DataError("image without proposals");
  FeatureVector mean(props.front().features.size(), 0.0);
  for (const Proposal& p : props) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p.features[i];
  }
  for (double& v : mean) v /= static_cast<double>(props.size());
  return mean;
}

std::map<ClassId, FeatureVector> class_mean_features(
    const std::vector<MilImageView>& images) {
  std::map<ClassId, FeatureVector> sums;
  std::map<ClassId, int> counts;
  for (const MilImageView& image : images) {
    const FeatureVector f = mean_image_feature(image);
    for (ClassId c : image.image_labels()) {
      auto [it, fresh] = sums.try_emplace(c, FeatureVector(f.size(), 0.0));
      if (!fresh && it->second.size() != f.size()) {
        throw DataError("feature dimension varies across images");
      }
      for (std::size_t i = 0; i < f.size(); ++i) it->second[i] += f[i];
      counts[c] += 1;
    }
  }
  for (auto& [c, sum] : sums) {
    for (double& v : sum) v /= static_cast<double>(counts[c]);
  }
  return sums;
}

}  // namespace hiermil
