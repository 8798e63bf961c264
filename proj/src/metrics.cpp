#include "hiermil/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace hiermil {

double corloc(const std::map<ImageId, BoundingBox>& selections,
              const GroundTruthBoxes& ground_truth, double iou_threshold) {
  if (iou_threshold <= 0.0 || iou_threshold >= 1.0) {
    throw ConfigError("corloc threshold must be in (0,1)");
  }
  if (selections.empty()) {
    throw DataError("corloc: no selections");
  }
  int correct = 0;
  for (const auto& [image, box] : selections) {
    auto it = ground_truth.find(image);
    if (it == ground_truth.end() || it->second.empty()) {
      throw DataError("corloc: image '" + image + "' has no ground truth");
    }
    for (const BoundingBox& gt : it->second) {
      if (iou(box, gt) > iou_threshold) {
        ++correct;
        break;
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(selections.size());
}

static bool detection_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.image != b.image) return a.image < b.image;
  return box_less(a.box, b.box);
}

double average_precision(std::vector<Detection> detections,
                         const GroundTruthBoxes& ground_truth,
                         double iou_threshold) {
  std::size_t num_gt = 0;
  for (const auto& [image, boxes] : ground_truth) num_gt += boxes.size();
  if (detections.empty() || num_gt == 0) return 0.0;

  for (std::size_t i = 1; i < detections.size(); ++i) {
    if (detections[i].cls != detections[0].cls) {
      throw DataError("average_precision: detections span multiple classes");
    }
  }

  std::sort(detections.begin(), detections.end(), detection_order);

  std::map<ImageId, std::vector<bool>> matched;
  for (const auto& [image, boxes] : ground_truth) {
    matched[image].assign(boxes.size(), false);
  }

  // Cumulative precision/recall after each detection.
  std::vector<double> precision(detections.size());
  std::vector<double> recall(detections.size());
  int tp = 0;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const Detection& det = detections[i];
    auto it = ground_truth.find(det.image);
    int best = -1;
    double best_iou = iou_threshold;  // strict: must exceed the threshold
    if (it != ground_truth.end()) {
      const auto& boxes = it->second;
      auto& used = matched[det.image];
      for (std::size_t g = 0; g < boxes.size(); ++g) {
        if (used[g]) continue;
        const double v = iou(det.box, boxes[g]);
        if (v > best_iou) {
          best_iou = v;
          best = static_cast<int>(g);
        }
      }
    }
    if (best >= 0) {
      matched[det.image][best] = true;
      ++tp;
    }
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }

  // Area under the monotonized curve: running max of precision from the
  // right, summed over recall increments.
  double ap = 0.0;
  double max_prec = 0.0;
  for (std::size_t i = detections.size(); i-- > 0;) {
    max_prec = std::max(max_prec, precision[i]);
    const double prev_recall = i == 0 ? 0.0 : recall[i - 1];
    if (recall[i] != prev_recall) {
      ap += (recall[i] - prev_recall) * max_prec;
    }
  }
  return ap;
}

MeanApResult mean_ap(
    const std::map<ClassId, std::vector<Detection>>& per_class_detections,
    const std::map<ClassId, GroundTruthBoxes>& ground_truth,
    double iou_threshold) {
  MeanApResult out;
  double sum = 0.0;
  for (const auto& [cls, gt] : ground_truth) {
    std::size_t num_gt = 0;
    for (const auto& [image, boxes] : gt) num_gt += boxes.size();
    if (num_gt == 0) continue;  // classes with no instances are excluded
    std::vector<Detection> dets;
    auto it = per_class_detections.find(cls);
    if (it != per_class_detections.end()) dets = it->second;
    const double ap = average_precision(std::move(dets), gt, iou_threshold);
    out.per_class[cls] = ap;
    sum += ap;
  }
  if (out.per_class.empty()) {
    throw DataError("mean_ap: no class has ground-truth instances");
  }
  out.mean = sum / static_cast<double>(out.per_class.size());
  return out;
}

ClassEval EvalColumn::aggregates() const {
  ClassEval agg;
  auto mean_of = [&](std::optional<double> ClassEval::*field) {
    double sum = 0.0;
    int n = 0;
    for (const auto& [cls, ev] : per_class) {
      if ((ev.*field).has_value()) {
        sum += *(ev.*field);
        ++n;
      }
    }
    return n == 0 ? std::optional<double>{}
                  : std::optional<double>{sum / n};
  };
  agg.corloc_05 = mean_of(&ClassEval::corloc_05);
  agg.corloc_07 = mean_of(&ClassEval::corloc_07);
  agg.ap_05 = mean_of(&ClassEval::ap_05);
  agg.ap_07 = mean_of(&ClassEval::ap_07);
  return agg;
}

double pearson_correlation(const std::vector<double>& xs,
                           const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw DataError("pearson: need two equal-length series of size >= 2");
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace hiermil
