#include "hiermil/linear_model.hpp"

#include <cmath>
#include <sstream>

#include "hiermil/rng.hpp"

namespace hiermil {

void TrainConfig::validate() const {
  if (!(regularization_strength > 0.0)) {
    throw ConfigError("regularization_strength must be positive");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate.initial > 0.0)) {
    throw ConfigError("learning_rate.initial must be positive");
  }
  if (learning_rate.decay != "inv_epoch" && learning_rate.decay != "constant") {
    throw ConfigError("unknown learning-rate decay '" + learning_rate.decay +
                      "'");
  }
  if (negative_subsample_cap < 1) {
    throw ConfigError("negative_subsample_cap must be >= 1");
  }
}

static void check_features(const std::vector<FeatureVector>& fs,
                           const char* what, std::size_t dim) {
  for (const FeatureVector& f : fs) {
    if (f.size() != dim) {
      throw DataError(std::string(what) + ": feature dimension " +
                      std::to_string(f.size()) + " != " + std::to_string(dim));
    }
    for (double v : f) {
      if (!std::isfinite(v)) {
        throw DataError(std::string(what) + ": non-finite feature value");
      }
    }
  }
}

double score(const LinearModel& m, const FeatureVector& f) {
  if (f.size() != m.weights.size()) {
    throw DataError("score: feature dimension " + std::to_string(f.size()) +
                    " != model dimension " + std::to_string(m.weights.size()));
  }
  double s = m.bias;
  for (std::size_t i = 0; i < f.size(); ++i) s += m.weights[i] * f[i];
  return s;
}

double score_sigmoid(const LinearModel& m, const FeatureVector& f) {
  return 1.0 / (1.0 + std::exp(-score(m, f)));
}

double hinge_objective(const LinearModel& m,
                       const std::vector<FeatureVector>& positives,
                       const std::vector<FeatureVector>& negatives,
                       double regularization_strength, double pos_weight,
                       double neg_weight) {
  double reg = 0.0;
  for (double w : m.weights) reg += w * w;
  reg *= 0.5 * regularization_strength;

  double loss = 0.0;
  for (const FeatureVector& f : positives) {
    loss += pos_weight * std::max(0.0, 1.0 - score(m, f));
  }
  for (const FeatureVector& f : negatives) {
    loss += neg_weight * std::max(0.0, 1.0 + score(m, f));
  }
  const double n = static_cast<double>(positives.size() + negatives.size());
  return reg + loss / n;
}

Gradient hinge_subgradient(const LinearModel& m,
                           const std::vector<FeatureVector>& positives,
                           const std::vector<FeatureVector>& negatives,
                           double regularization_strength, double pos_weight,
                           double neg_weight) {
  Gradient g;
  g.weights.assign(m.weights.size(), 0.0);
  const double n = static_cast<double>(positives.size() + negatives.size());
  auto add = [&](const FeatureVector& f, double y, double weight) {
    if (y * score(m, f) < 1.0) {
      const double c = -weight * y / n;
      for (std::size_t i = 0; i < f.size(); ++i) g.weights[i] += c * f[i];
      g.bias += c;
    }
  };
  for (const FeatureVector& f : positives) add(f, +1.0, pos_weight);
  for (const FeatureVector& f : negatives) add(f, -1.0, neg_weight);
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    g.weights[i] += regularization_strength * m.weights[i];
  }
  return g;
}

namespace {

// Cycles through a sample list in seeded shuffled order, reshuffling on wrap.
class ShuffledCycle {
 public:
  ShuffledCycle(int n, SplitRng* rng) : n_(n), rng_(rng) { reshuffle(); }

  int next() {
    if (pos_ == n_) reshuffle();
    return order_[pos_++];
  }

 private:
  void reshuffle() {
    order_ = rng_->permutation(n_);
    pos_ = 0;
  }

  int n_;
  SplitRng* rng_;
  std::vector<int> order_;
  int pos_ = 0;
};

}  // namespace

LinearModel train_binary(const std::vector<FeatureVector>& positives,
                         const std::vector<FeatureVector>& negatives,
                         const TrainConfig& cfg,
                         std::vector<double>* objective_trace) {
  cfg.validate();
  if (positives.empty()) throw DataError("train_binary: no positive samples");
  if (negatives.empty()) throw DataError("train_binary: no negative samples");
  const std::size_t dim = positives.front().size();
  if (dim == 0) throw DataError("train_binary: zero-dimensional features");
  check_features(positives, "positives", dim);
  check_features(negatives, "negatives", dim);

  // Cap the negative pool with a seeded draw.
  std::vector<FeatureVector> capped;
  const std::vector<FeatureVector>* neg = &negatives;
  if (static_cast<int>(negatives.size()) > cfg.negative_subsample_cap) {
    SplitRng cap_rng(derive_seed(cfg.rng_seed, "negcap"));
    std::vector<int> keep = cap_rng.sample_indices(
        static_cast<int>(negatives.size()), cfg.negative_subsample_cap);
    capped.reserve(keep.size());
    for (int i : keep) capped.push_back(negatives[i]);
    neg = &capped;
  }

  const int np = static_cast<int>(positives.size());
  const int nn = static_cast<int>(neg->size());
  // An epoch passes once over the larger class, but large negative pools do
  // not need full coverage every epoch; the shuffled cycles still visit all
  // of them across epochs.
  constexpr int kMaxStepsPerEpoch = 2000;
  const int steps_per_epoch = std::max(np, std::min(nn, kMaxStepsPerEpoch));
  const double total = static_cast<double>(np + nn);
  const double pos_weight = total / (2.0 * np);
  const double neg_weight = total / (2.0 * nn);

  LinearModel m;
  m.weights.assign(dim, 0.0);

  SplitRng rng(derive_seed(cfg.rng_seed, "sgd"));
  ShuffledCycle pos_cycle(np, &rng);
  ShuffledCycle neg_cycle(nn, &rng);

  // SGD iterates are noisy, so an epoch is accepted only when it does not
  // worsen the balanced objective; a rejected epoch restarts from the best
  // iterate with the next (smaller) learning rate. The returned model is the
  // best one seen and the trace is non-increasing by construction.
  LinearModel best = m;
  double best_objective = hinge_objective(
      m, positives, *neg, cfg.regularization_strength, pos_weight, neg_weight);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double eta = cfg.learning_rate.initial;
    if (cfg.learning_rate.decay == "inv_epoch") {
      eta /= 1.0 + static_cast<double>(epoch);
    }
    for (int step = 0; step < steps_per_epoch; ++step) {
      const FeatureVector& fp = positives[pos_cycle.next()];
      const FeatureVector& fn = (*neg)[neg_cycle.next()];
      const bool hp = score(m, fp) < 1.0;   // positive inside margin
      const bool hn = -score(m, fn) < 1.0;  // negative inside margin
      const double shrink = 1.0 - eta * cfg.regularization_strength;
      for (std::size_t i = 0; i < dim; ++i) {
        double w = shrink * m.weights[i];
        if (hp) w += eta * 0.5 * fp[i];
        if (hn) w -= eta * 0.5 * fn[i];
        m.weights[i] = w;
      }
      if (hp) m.bias += eta * 0.5;
      if (hn) m.bias -= eta * 0.5;
    }
    const double objective =
        hinge_objective(m, positives, *neg, cfg.regularization_strength,
                        pos_weight, neg_weight);
    if (objective <= best_objective) {
      best = m;
      best_objective = objective;
    } else {
      m = best;
    }
    if (objective_trace) objective_trace->push_back(best_objective);
  }
  return best;
}

std::string model_to_text(const LinearModel& m,
                          const std::string& config_digest) {
  std::ostringstream out;
  out << "hiermil-model 1\n";
  out << "dim " << m.dim() << "\n";
  out << "bias " << format_double(m.bias) << "\n";
  out << "weights";
  for (double w : m.weights) out << ' ' << format_double(w);
  out << "\n";
  out << "config " << config_digest << "\n";
  return out.str();
}

LinearModel model_from_text(const std::string& text,
                            std::string* config_digest) {
  std::istringstream in(text);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "hiermil-model" || version != 1) {
    throw DataError("not a hiermil-model v1 record");
  }
  std::string key;
  int dim = -1;
  LinearModel m;
  in >> key >> dim;
  if (key != "dim" || dim < 0) throw DataError("model record: bad dim");
  in >> key >> m.bias;
  if (key != "bias") throw DataError("model record: bad bias");
  in >> key;
  if (key != "weights") throw DataError("model record: bad weights");
  m.weights.resize(dim);
  for (int i = 0; i < dim; ++i) {
    if (!(in >> m.weights[i])) {
      throw DataError("model record: truncated weights");
    }
  }
  std::string digest;
  in >> key >> digest;
  if (key != "config") throw DataError("model record: bad config digest");
  if (config_digest) *config_digest = digest;
  return m;
}

std::string train_config_digest(const TrainConfig& cfg) {
  std::ostringstream out;
  out << format_double(cfg.regularization_strength) << '|' << cfg.epochs << '|'
      << format_double(cfg.learning_rate.initial) << '|'
      << cfg.learning_rate.decay << '|' << cfg.negative_subsample_cap << '|'
      << cfg.rng_seed;
  return content_digest(out.str());
}

}  // namespace hiermil
