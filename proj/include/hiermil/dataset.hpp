#pragma once

#include <string>
#include <vector>

#include "hiermil/box.hpp"
#include "hiermil/hierarchy.hpp"
#include "hiermil/linear_model.hpp"
#include "hiermil/metrics.hpp"

namespace hiermil {

// One candidate object location inside an image. The objectness scalar is a
// dataset-provided channel (a noisy location prior), distinct from anything
// a trained model produces.
struct Proposal {
  BoundingBox box;
  FeatureVector features;
  double objectness = 0.0;
};

struct GtBox {
  ClassId cls = -1;
  BoundingBox box;
};

struct ImageBag {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<Proposal> proposals;
  std::vector<ClassId> image_labels;  // sorted, unique leaf labels
  std::vector<GtBox> gt_boxes;

  bool has_label(ClassId c) const;
};

// Read-only window onto an ImageBag that deliberately lacks any ground-truth
// accessor. MIL code is written against this type, so it cannot peek at the
// boxes even by accident.
class MilImageView {
 public:
  explicit MilImageView(const ImageBag* bag) : bag_(bag) {}

  const std::string& image_id() const { return bag_->image_id; }
  double width() const { return bag_->width; }
  double height() const { return bag_->height; }
  const std::vector<Proposal>& proposals() const { return bag_->proposals; }
  const std::vector<ClassId>& image_labels() const {
    return bag_->image_labels;
  }
  bool has_label(ClassId c) const { return bag_->has_label(c); }

 private:
  const ImageBag* bag_;
};

struct Dataset {
  Hierarchy hierarchy;
  std::vector<ImageBag> train_source;
  std::vector<ImageBag> train_target;
  std::vector<ImageBag> test_target;
  std::string config_digest;  // digest of the generator config, "" if loaded
                              // from external files without one
};

// Ground-truth-free views over the target training split, the only access
// path the MIL engine gets.
std::vector<MilImageView> strip_gt(const Dataset& d);
std::vector<MilImageView> views_of(const std::vector<ImageBag>& images);

// Throws DataError describing the first violated invariant: non-empty
// proposals, boxes inside image bounds, finite uniform-dimension features,
// sorted unique leaf labels, gt classes matching labels.
void validate_image(const ImageBag& bag, const Hierarchy& h, int feature_dim);
void validate_dataset(const Dataset& d);

int feature_dimension(const Dataset& d);

// Collects per-image ground-truth boxes of one class, for evaluation.
GroundTruthBoxes ground_truth_for(const std::vector<ImageBag>& images,
                                  ClassId cls);

// Directory layout: manifest.json + hierarchy.tsv + one JSONL file per split.
// The manifest names the PRNG algorithm and carries content digests of every
// file, so a byte-level comparison of two directories is meaningful.
void save_dataset(const std::string& dir, const Dataset& d);
Dataset load_dataset(const std::string& dir);

}  // namespace hiermil
