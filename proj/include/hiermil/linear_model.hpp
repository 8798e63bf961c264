#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hiermil/common.hpp"

namespace hiermil {

using FeatureVector = std::vector<double>;

struct LinearModel {
  FeatureVector weights;
  double bias = 0.0;

  int dim() const { return static_cast<int>(weights.size()); }

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

struct LearningRateSchedule {
  double initial = 1.0;
  std::string decay = "inv_epoch";  // inv_epoch: initial/(1+epoch); constant
};

struct TrainConfig {
  double regularization_strength = 0.01;
  int epochs = 20;
  LearningRateSchedule learning_rate;
  int negative_subsample_cap = 5000;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Raw margin weights.f + bias.
double score(const LinearModel& m, const FeatureVector& f);

// 1/(1+exp(-score)); strictly monotone in the raw score.
double score_sigmoid(const LinearModel& m, const FeatureVector& f);

// (reg/2)|w|^2 + weighted mean hinge loss over both classes. With unit
// weights this is the plain mean over all samples; the trainer minimizes
// the class-balanced variant (pos_weight = N/(2 Np), neg_weight = N/(2 Nn)).
double hinge_objective(const LinearModel& m,
                       const std::vector<FeatureVector>& positives,
                       const std::vector<FeatureVector>& negatives,
                       double regularization_strength,
                       double pos_weight = 1.0, double neg_weight = 1.0);

struct Gradient {
  FeatureVector weights;
  double bias = 0.0;
};

// Subgradient of hinge_objective at m (samples exactly on the margin
// contribute zero).
Gradient hinge_subgradient(const LinearModel& m,
                           const std::vector<FeatureVector>& positives,
                           const std::vector<FeatureVector>& negatives,
                           double regularization_strength,
                           double pos_weight = 1.0, double neg_weight = 1.0);

// L2-regularized hinge loss via stochastic subgradient descent. Each step
// consumes one positive and one negative sample so both classes contribute
// equally regardless of pool sizes. Negatives beyond the subsample cap are
// dropped by a seeded draw. An epoch that worsens the class-balanced
// objective is rolled back, so the returned model is the best iterate seen.
// Deterministic given (data, cfg). If objective_trace is non-null it
// receives the accepted objective after every epoch (non-increasing).
LinearModel train_binary(const std::vector<FeatureVector>& positives,
                         const std::vector<FeatureVector>& negatives,
                         const TrainConfig& cfg,
                         std::vector<double>* objective_trace = nullptr);

// Versioned text record: dimension, weights, bias, config digest.
std::string model_to_text(const LinearModel& m,
                          const std::string& config_digest);
LinearModel model_from_text(const std::string& text,
                            std::string* config_digest = nullptr);

std::string train_config_digest(const TrainConfig& cfg);

}  // namespace hiermil
