#include <doctest.h>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hiermil/metrics.hpp"
#include "hiermil/rng.hpp"
#include "oracles.hpp"

using namespace hiermil;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("corloc hand case") {
  const BoundingBox gt{0, 0, 10, 10};
  // Contained boxes, so IoU is the area ratio: 0.6, 0.4, 0.8.
  std::map<ImageId, BoundingBox> sel{
      {"a", {0, 0, 10, 6}},
      {"b", {0, 0, 10, 4}},
      {"c", {0, 0, 10, 8}},
  };
  GroundTruthBoxes gtb{{"a", {gt}}, {"b", {gt}}, {"c", {gt}}};
  CHECK(corloc(sel, gtb, 0.5) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  // Strictly-above rule: a box at exactly the threshold does not count.
  std::map<ImageId, BoundingBox> exact{{"a", {0, 0, 10, 5}}};
  GroundTruthBoxes one{{"a", {gt}}};
  CHECK(corloc(exact, one, 0.5) == 0.0);
  CHECK(corloc(exact, one, 0.5 - 1e-9) == 1.0);
}

TEST_CASE("corloc is monotone in the threshold") {
  SplitRng rng(31);
  std::map<ImageId, BoundingBox> sel;
  GroundTruthBoxes gtb;
  for (int i = 0; i < 40; ++i) {
    const std::string im = "img" + std::to_string(i);
    const double x = rng.uniform_int(0, 10);
    const double y = rng.uniform_int(0, 10);
    gtb[im] = {BoundingBox{x, y, x + 10, y + 10}};
    sel[im] = BoundingBox{x + rng.uniform_int(0, 8), y, x + 10 + rng.uniform_int(0, 4),
                          y + 10};
  }
  double prev = 1.0;
  for (double thr : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double v = corloc(sel, gtb, thr);
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
}

TEST_CASE("corloc rejects bad input") {
  const GroundTruthBoxes gtb{{"a", {BoundingBox{0, 0, 1, 1}}}};
  const std::map<ImageId, BoundingBox> sel{{"a", BoundingBox{0, 0, 1, 1}}};
  CHECK_THROWS_AS(corloc(sel, gtb, 0.0), ConfigError);
  CHECK_THROWS_AS(corloc(sel, gtb, 1.0), ConfigError);
  CHECK_THROWS_AS(corloc({}, gtb, 0.5), DataError);
  // Selected image missing from the ground truth.
  CHECK_THROWS_AS(corloc({{"zzz", BoundingBox{0, 0, 1, 1}}}, gtb, 0.5),
                  DataError);
}

TEST_CASE("average precision hand case") {
  // Ranked TP, FP, TP against two gt boxes: AP = 0.5*1 + 0.5*(2/3) = 5/6.
  const GroundTruthBoxes gtb{
      {"a", {BoundingBox{0, 0, 10, 10}, BoundingBox{100, 100, 110, 110}}}};
  std::vector<Detection> dets{
      {"a", 1, BoundingBox{0, 0, 10, 10}, 0.9},
      {"a", 1, BoundingBox{50, 50, 60, 60}, 0.8},
      {"a", 1, BoundingBox{100, 100, 110, 110}, 0.7},
  };
  CHECK(average_precision(dets, gtb, 0.5) ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(average_precision({}, gtb, 0.5) == 0.0);
  CHECK(average_precision(dets, GroundTruthBoxes{{"a", {}}}, 0.5) == 0.0);
}

TEST_CASE("average precision duplicate detections match one gt each") {
  const GroundTruthBoxes gtb{{"a", {BoundingBox{0, 0, 10, 10}}}};
  std::vector<Detection> dets{
      {"a", 1, BoundingBox{0, 0, 10, 10}, 0.9},
      {"a", 1, BoundingBox{0, 0, 10, 10}, 0.8},  // second hit is a FP
  };
  CHECK(average_precision(dets, gtb, 0.5) == 1.0);
}

TEST_CASE("average precision is invariant to monotone score transforms") {
  SplitRng rng(47);
  for (int trial = 0; trial < 300; ++trial) {
    auto inst = test_oracle::random_ap_instance(rng);
    const double base = average_precision(inst.detections, inst.ground_truth, 0.5);
    auto warped = inst.detections;
    for (auto& d : warped) d.score = 2.0 * std::atan(d.score) - 3.0;
    CHECK(average_precision(warped, inst.ground_truth, 0.5) ==
          doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("average precision matches the enumeration oracle") {
  SplitRng rng(53);
  for (int trial = 0; trial < 1000; ++trial) {
    auto inst = test_oracle::random_ap_instance(rng);
    for (double thr : {1.0 / 3.0, 0.5}) {
      const double got = average_precision(inst.detections, inst.ground_truth, thr);
      const double want =
          test_oracle::average_precision(inst.detections, inst.ground_truth, thr);
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
      CHECK(got >= 0.0);
      CHECK(got <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("mean_ap averages classes that have ground truth") {
  const GroundTruthBoxes with_gt{{"a", {BoundingBox{0, 0, 10, 10}}}};
  const GroundTruthBoxes without_gt{{"a", {}}};
  std::map<ClassId, std::vector<Detection>> dets{
      {1, {{"a", 1, BoundingBox{0, 0, 10, 10}, 0.9}}},
      {2, {{"a", 2, BoundingBox{50, 50, 60, 60}, 0.9}}},
      {3, {{"a", 3, BoundingBox{0, 0, 10, 10}, 0.9}}},
  };
  std::map<ClassId, GroundTruthBoxes> gt{
      {1, with_gt}, {2, with_gt}, {3, without_gt}};
  const MeanApResult r = mean_ap(dets, gt, 0.5);
  // Class 3 has no instances anywhere, so it is excluded from the mean.
  REQUIRE(r.per_class.size() == 2);
  CHECK(r.per_class.at(1) == 1.0);
  CHECK(r.per_class.at(2) == 0.0);
  CHECK(r.mean == doctest::Approx(0.5).epsilon(1e-15));
  // Nothing evaluable at all is an error, not a silent zero.
  CHECK_THROWS_AS(mean_ap({{3, {}}}, {{3, without_gt}}, 0.5), DataError);
}

TEST_CASE("eval column aggregates mean the present fields") {
  EvalColumn col;
  col.per_class[1] = ClassEval{0.5, 0.25, 0.8, std::nullopt};
  col.per_class[2] = ClassEval{1.0, 0.75, 0.4, std::nullopt};
  const ClassEval agg = col.aggregates();
  CHECK(agg.corloc_05.value() == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(agg.corloc_07.value() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(agg.ap_05.value() == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(!agg.ap_07.has_value());
}

TEST_CASE("pearson correlation") {
  CHECK(pearson_correlation({1, 2, 3}, {2, 4, 6}) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson_correlation({1, 2, 3}, {6, 4, 2}) ==
        doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(pearson_correlation({1, 2, 3, 4}, {5, 5, 5, 5}) == 0.0);
  CHECK(pearson_correlation({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5}) ==
        doctest::Approx(0.8).epsilon(1e-12));
  CHECK_THROWS_AS(pearson_correlation({1}, {2}), DataError);
  CHECK_THROWS_AS(pearson_correlation({1, 2}, {1, 2, 3}), DataError);
}

TEST_SUITE_END();
