#include <doctest.h>

#include <string>
#include <vector>

#include "hiermil/transfer.hpp"

using namespace hiermil;

namespace {

// Mixed taxonomy: root -> fam_a -> {t0, s0}, fam_b -> {s1, s2, t1}.
Hierarchy mixed_tree() {
  return Hierarchy::build({
      {0, "root", -1, NodeRole::internal},
      {1, "fam_a", 0, NodeRole::internal},
      {2, "fam_b", 0, NodeRole::internal},
      {3, "t0", 1, NodeRole::target},
      {4, "s0", 1, NodeRole::source},
      {5, "s1", 2, NodeRole::source},
      {6, "s2", 2, NodeRole::source},
      {7, "t1", 2, NodeRole::target},
  });
}

// Bank with identity-free stub models for every node that can train. Only
// the node set matters for compose; evaluate reads a hand-filled table.
ScorerBank stub_bank(const Hierarchy& h) {
  ScorerBank bank;
  bank.hierarchy_digest = h.digest();
  for (ClassId c = 0; c < h.num_nodes(); ++c) {
    if (!h.source_descendants(c).empty()) {
      bank.per_node[c] = LinearModel{{1.0}, 0.0};
    }
  }
  return bank;
}

}  // namespace

TEST_SUITE_BEGIN("transfer");

TEST_CASE("strategy strings parse and print in both directions") {
  auto roundtrip = [](const std::string& text) {
    const TransferStrategy s = TransferStrategy::parse(text);
    CHECK(s.to_string() == text);
    CHECK(TransferStrategy::parse(s.to_string()) == s);
    return s;
  };
  CHECK(roundtrip("none").kind == StrategyKind::none);
  CHECK(roundtrip("generic").kind == StrategyKind::class_generic);
  CHECK(roundtrip("closest-sources").kind == StrategyKind::closest_sources);
  CHECK(roundtrip("closest-ancestor").kind == StrategyKind::closest_ancestor);
  const TransferStrategy an = roundtrip("ancestor-n=3");
  CHECK(an.kind == StrategyKind::ancestor_min_n);
  CHECK(an.min_sources == 3);
  const TransferStrategy fx = roundtrip("fixed=bear");
  CHECK(fx.kind == StrategyKind::fixed_source);
  CHECK(fx.fixed_class == "bear");
  CHECK(roundtrip("visual").kind == StrategyKind::visual_similarity);
  CHECK(roundtrip("best-oracle").kind == StrategyKind::best_source_oracle);

  CHECK_THROWS_AS(TransferStrategy::parse("bogus"), ConfigError);
  CHECK_THROWS_AS(TransferStrategy::parse("Generic"), ConfigError);
  CHECK_THROWS_AS(TransferStrategy::parse("ancestor-n="), ConfigError);
  CHECK_THROWS_AS(TransferStrategy::parse("ancestor-n=0"), ConfigError);
  CHECK_THROWS_AS(TransferStrategy::parse("ancestor-n=2x"), ConfigError);
  CHECK_THROWS_AS(TransferStrategy::parse("fixed="), ConfigError);
  CHECK_THROWS_AS(TransferStrategy::parse(""), ConfigError);
}

TEST_CASE("compose resolves each strategy to its bank nodes") {
  const Hierarchy h = mixed_tree();
  const ScorerBank bank = stub_bank(h);

  const TransferFunction none =
      compose(h, bank, 3, TransferStrategy::parse("none"));
  CHECK(none.target == 3);
  CHECK(none.contributing_nodes.empty());

  CHECK(compose(h, bank, 3, TransferStrategy::parse("generic"))
            .contributing_nodes == std::vector<ClassId>{kRootId});

  // t0's nearest useful ancestor is fam_a with the single source s0;
  // t1 sits under fam_b with two sources.
  CHECK(compose(h, bank, 3, TransferStrategy::parse("closest-sources"))
            .contributing_nodes == std::vector<ClassId>{4});
  CHECK(compose(h, bank, 7, TransferStrategy::parse("closest-sources"))
            .contributing_nodes == std::vector<ClassId>{5, 6});

  CHECK(compose(h, bank, 3, TransferStrategy::parse("closest-ancestor"))
            .contributing_nodes == std::vector<ClassId>{1});
  CHECK(compose(h, bank, 7, TransferStrategy::parse("closest-ancestor"))
            .contributing_nodes == std::vector<ClassId>{2});

  CHECK(compose(h, bank, 3, TransferStrategy::parse("ancestor-n=1"))
            .contributing_nodes == std::vector<ClassId>{1});
  CHECK(compose(h, bank, 3, TransferStrategy::parse("ancestor-n=2"))
            .contributing_nodes == std::vector<ClassId>{0});
  CHECK(compose(h, bank, 7, TransferStrategy::parse("ancestor-n=2"))
            .contributing_nodes == std::vector<ClassId>{2});

  // With n equal to the total source count, every target resolves to the
  // root, which is exactly the class-generic node set.
  const int total = static_cast<int>(h.source_leaves().size());
  for (ClassId t : h.target_leaves()) {
    CHECK(compose(h, bank, t,
                  TransferStrategy::parse("ancestor-n=" + std::to_string(total)))
              .contributing_nodes ==
          compose(h, bank, t, TransferStrategy::parse("generic"))
              .contributing_nodes);
  }

  CHECK(compose(h, bank, 3, TransferStrategy::parse("fixed=s1"))
            .contributing_nodes == std::vector<ClassId>{5});
}

TEST_CASE("compose validates its inputs") {
  const Hierarchy h = mixed_tree();
  const ScorerBank bank = stub_bank(h);
  // Not a target leaf.
  CHECK_THROWS_AS(compose(h, bank, 4, TransferStrategy::parse("generic")),
                  ConfigError);
  CHECK_THROWS_AS(compose(h, bank, 1, TransferStrategy::parse("generic")),
                  ConfigError);
  // fixed= must name a source leaf.
  CHECK_THROWS_AS(compose(h, bank, 3, TransferStrategy::parse("fixed=t1")),
                  ConfigError);
  CHECK_THROWS_AS(compose(h, bank, 3, TransferStrategy::parse("fixed=nope")),
                  ConfigError);
  CHECK_THROWS_AS(compose(h, bank, 3, TransferStrategy::parse("fixed=fam_a")),
                  ConfigError);
  // ancestor-n beyond the source count.
  CHECK_THROWS_AS(compose(h, bank, 3, TransferStrategy::parse("ancestor-n=4")),
                  DataError);
  // Contributing node missing from the bank.
  ScorerBank partial = stub_bank(h);
  partial.per_node.erase(4);
  CHECK_THROWS_AS(
      compose(h, partial, 3, TransferStrategy::parse("closest-sources")),
      DataError);
}

TEST_CASE("visual strategy picks the nearest source prototype") {
  const Hierarchy h = mixed_tree();
  const ScorerBank bank = stub_bank(h);
  ComposeAux aux;
  aux.source_class_means[4] = {0.0, 0.0};
  aux.source_class_means[5] = {3.0, 0.0};
  aux.source_class_means[6] = {0.0, 5.0};
  aux.target_mean = {2.0, 0.0};
  CHECK(compose(h, bank, 3, TransferStrategy::parse("visual"), aux)
            .contributing_nodes == std::vector<ClassId>{5});

  // Exact distance tie: the smaller class id wins.
  aux.target_mean = {1.5, 0.0};
  CHECK(compose(h, bank, 3, TransferStrategy::parse("visual"), aux)
            .contributing_nodes == std::vector<ClassId>{4});

  // Aux is mandatory for this strategy.
  CHECK_THROWS_AS(compose(h, bank, 3, TransferStrategy::parse("visual")),
                  ConfigError);
  ComposeAux bad = aux;
  bad.source_class_means[5] = {1.0};
  CHECK_THROWS_AS(compose(h, bank, 3, TransferStrategy::parse("visual"), bad),
                  DataError);
}

TEST_CASE("oracle strategy uses the supplied source") {
  const Hierarchy h = mixed_tree();
  const ScorerBank bank = stub_bank(h);
  ComposeAux aux;
  aux.oracle_source = 6;
  CHECK(compose(h, bank, 7, TransferStrategy::parse("best-oracle"), aux)
            .contributing_nodes == std::vector<ClassId>{6});
  CHECK_THROWS_AS(compose(h, bank, 7, TransferStrategy::parse("best-oracle")),
                  ConfigError);
  aux.oracle_source = 2;  // internal node, not a source leaf
  CHECK_THROWS_AS(
      compose(h, bank, 7, TransferStrategy::parse("best-oracle"), aux),
      ConfigError);
}

TEST_CASE("evaluate averages the contributing node scores") {
  ScoreTable scores({0, 5, 6}, 2);
  scores.set(0, 5, 0.4);
  scores.set(0, 6, 0.8);
  scores.set(1, 5, 0.1);
  scores.set(1, 6, 0.9);
  scores.set(1, 0, 0.2);

  TransferFunction tf;
  tf.contributing_nodes = {5, 6};
  CHECK(evaluate(tf, scores, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(evaluate(tf, scores, 1) == doctest::Approx(0.5).epsilon(1e-15));

  // Three contributors.
  scores.set(0, 0, 0.9);
  tf.contributing_nodes = {0, 5, 6};
  CHECK(evaluate(tf, scores, 0) ==
        doctest::Approx((0.9 + 0.4 + 0.8) / 3.0).epsilon(1e-15));

  // A single contributor passes its score through unchanged.
  tf.contributing_nodes = {5};
  scores.set(0, 5, 0.73);
  CHECK(evaluate(tf, scores, 0) == 0.73);

  // No contributors: the none strategy scores zero everywhere.
  tf.contributing_nodes = {};
  CHECK(evaluate(tf, scores, 0) == 0.0);

  // Asking for a node the table does not carry is an error.
  tf.contributing_nodes = {9};
  CHECK_THROWS_AS(evaluate(tf, scores, 0), DataError);
}

TEST_CASE("evaluate three contributors hand case") {
  ScoreTable scores({1, 2, 3}, 1);
  scores.set(0, 1, 0.1);
  scores.set(0, 2, 0.2);
  scores.set(0, 3, 0.9);
  TransferFunction tf;
  tf.contributing_nodes = {1, 2, 3};
  CHECK(evaluate(tf, scores, 0) == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("median closest-source count uses the lower median") {
  // Counts per target in mixed_tree: t0 -> 1, t1 -> 2; even count takes the
  // lower of the two middles.
  CHECK(median_closest_source_count(mixed_tree()) == 1);

  // Odd case {1, 3, 5} -> 3: three targets with 1, 3 and 5 nearby sources.
  const Hierarchy h = Hierarchy::build({
      {0, "root", -1, NodeRole::internal},
      {1, "g1", 0, NodeRole::internal},
      {2, "g3", 0, NodeRole::internal},
      {3, "g5", 0, NodeRole::internal},
      {4, "ta", 1, NodeRole::target},
      {5, "a1", 1, NodeRole::source},
      {6, "tb", 2, NodeRole::target},
      {7, "b1", 2, NodeRole::source},
      {8, "b2", 2, NodeRole::source},
      {9, "b3", 2, NodeRole::source},
      {10, "tc", 3, NodeRole::target},
      {11, "c1", 3, NodeRole::source},
      {12, "c2", 3, NodeRole::source},
      {13, "c3", 3, NodeRole::source},
      {14, "c4", 3, NodeRole::source},
      {15, "c5", 3, NodeRole::source},
  });
  CHECK(h.closest_sources(4).size() == 1);
  CHECK(h.closest_sources(6).size() == 3);
  CHECK(h.closest_sources(10).size() == 5);
  CHECK(median_closest_source_count(h) == 3);

  const Hierarchy no_targets = Hierarchy::build({
      {0, "root", -1, NodeRole::internal},
      {1, "s", 0, NodeRole::source},
  });
  CHECK_THROWS_AS(median_closest_source_count(no_targets), DataError);
}

TEST_CASE("image and class feature prototypes") {
  ImageBag bag;
  bag.image_id = "a";
  bag.width = bag.height = 100;
  bag.image_labels = {3};
  bag.gt_boxes.push_back(GtBox{3, BoundingBox{0, 0, 10, 10}});
  Proposal p1, p2;
  p1.box = BoundingBox{0, 0, 10, 10};
  p1.features = {1.0, 3.0};
  p2.box = BoundingBox{20, 20, 40, 40};
  p2.features = {3.0, 5.0};
  bag.proposals = {p1, p2};

  CHECK(mean_image_feature(MilImageView(&bag)) == FeatureVector{2.0, 4.0});

  ImageBag bag2 = bag;
  bag2.image_id = "b";
  bag2.proposals[0].features = {5.0, 1.0};
  bag2.proposals[1].features = {7.0, 3.0};  // image mean {6, 2}

  ImageBag other = bag;
  other.image_id = "c";
  other.image_labels = {4};
  other.gt_boxes[0].cls = 4;

  const std::vector<ImageBag> images{bag, bag2, other};
  const auto means = class_mean_features(views_of(images));
  REQUIRE(means.size() == 2);
  CHECK(means.at(3) == FeatureVector{4.0, 3.0});
  CHECK(means.at(4) == FeatureVector{2.0, 4.0});

  ImageBag empty = bag;
  empty.proposals.clear();
  CHECK_THROWS_AS(mean_image_feature(MilImageView(&empty)), DataError);
}

TEST_SUITE_END();
