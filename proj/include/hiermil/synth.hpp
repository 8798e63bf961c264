#pragma once

#include <cstdint>
#include <string>

#include "hiermil/dataset.hpp"

namespace hiermil {

// Knobs for the synthetic benchmark generator. Defaults are the standard
// benchmark used throughout the test suite.
struct GenConfig {
  int num_source_classes = 8;
  int num_target_classes = 4;
  int hierarchy_branching = 2;
  int images_per_class = 40;
  int proposals_per_image = 30;
  int feature_dim = 16;

  // Distance of every class mean from the background mean (the origin).
  double class_separation = 5.0;
  double feature_noise = 1.0;
  // Fraction of non-injected proposals placed at random locations instead of
  // jittered around the ground truth.
  double distractor_fraction = 0.5;
  // Corner noise for jittered proposals, as a fraction of the box side.
  double proposal_jitter = 0.3;
  // 0: every class mean is an independent direction. 1: all classes share
  // one mean. In between, classes near each other in the hierarchy share
  // more of their mean than distant ones.
  double semantic_feature_sharing = 0.5;
  // Scale of the class-correlated background signal. Proposals off the
  // object still carry some of the class's identity coordinates (context:
  // the stuff around an object looks like the object's habitat), scaled by
  // (1 - overlap) and a per-proposal draw. Only true overlap excites the
  // shared object-vs-background coordinate, so context fools a scorer that
  // keyed on class identity but not one that keyed on objectness.
  double context_signal = 1.2;
  // Noise on the per-proposal objectness channel (0 = oracle quality).
  double noisy_objectness_sigma = 0.25;

  std::uint64_t rng_seed = 42;

  void validate() const;
  std::string digest() const;
};

Dataset generate(const GenConfig& cfg);

}  // namespace hiermil
