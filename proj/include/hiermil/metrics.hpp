#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hiermil/box.hpp"
#include "hiermil/hierarchy.hpp"

namespace hiermil {

using ImageId = std::string;

struct Detection {
  ImageId image;
  ClassId cls = -1;
  BoundingBox box;
  double score = 0.0;
};

using GroundTruthBoxes = std::map<ImageId, std::vector<BoundingBox>>;

// Fraction of images whose selected box overlaps some ground-truth instance
// with IoU strictly above the threshold. Every selected image must appear in
// the ground truth.
double corloc(const std::map<ImageId, BoundingBox>& selections,
              const GroundTruthBoxes& ground_truth, double iou_threshold);

// All-point interpolated average precision for one class. Detections are
// ranked by descending score (ties by image id, then box order); each is
// greedily matched to the highest-IoU unmatched ground-truth box in its
// image with IoU strictly above the threshold.
double average_precision(std::vector<Detection> detections,
                         const GroundTruthBoxes& ground_truth,
                         double iou_threshold);

struct MeanApResult {
  std::map<ClassId, double> per_class;  // classes with >= 1 GT instance
  double mean = 0.0;
};

MeanApResult mean_ap(
    const std::map<ClassId, std::vector<Detection>>& per_class_detections,
    const std::map<ClassId, GroundTruthBoxes>& ground_truth,
    double iou_threshold);

// One evaluated configuration: per-target-class metrics plus their means.
struct ClassEval {
  std::optional<double> corloc_05, corloc_07, ap_05, ap_07;

  bool operator==(const ClassEval&) const = default;
};

struct EvalColumn {
  std::string label;        // strategy string, e.g. "generic"
  double lambda = 0.0;
  bool oracle = false;      // uses ground truth to pick its source
  std::map<ClassId, ClassEval> per_class;

  ClassEval aggregates() const;  // arithmetic mean of present values

  bool operator==(const EvalColumn&) const = default;
};

struct EvalReport {
  std::map<ClassId, std::string> class_names;
  std::vector<EvalColumn> columns;

  bool operator==(const EvalReport&) const = default;
};

double pearson_correlation(const std::vector<double>& xs,
                           const std::vector<double>& ys);

}  // namespace hiermil
