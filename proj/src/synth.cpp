#include "hiermil/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "hiermil/rng.hpp"

namespace hiermil {

void GenConfig::validate() const {
  if (num_source_classes < 1) throw ConfigError("num_source_classes must be >= 1");
  if (num_target_classes < 1) throw ConfigError("num_target_classes must be >= 1");
  if (hierarchy_branching < 2) throw ConfigError("hierarchy_branching must be >= 2");
  if (images_per_class < 1) throw ConfigError("images_per_class must be >= 1");
  if (proposals_per_image < 2) throw ConfigError("proposals_per_image must be >= 2");
  if (feature_dim < 2) throw ConfigError("feature_dim must be >= 2");
  if (!(class_separation > 0.0)) throw ConfigError("class_separation must be positive");
  if (!(feature_noise > 0.0)) throw ConfigError("feature_noise must be positive");
  if (distractor_fraction < 0.0 || distractor_fraction >= 1.0) {
    throw ConfigError("distractor_fraction must be in [0,1)");
  }
  if (proposal_jitter < 0.0) throw ConfigError("proposal_jitter must be >= 0");
  if (semantic_feature_sharing < 0.0 || semantic_feature_sharing > 1.0) {
    throw ConfigError("semantic_feature_sharing must be in [0,1]");
  }
  if (context_signal < 0.0) {
    throw ConfigError("context_signal must be >= 0");
  }
  if (noisy_objectness_sigma < 0.0) {
    throw ConfigError("noisy_objectness_sigma must be >= 0");
  }
}

std::string GenConfig::digest() const {
  std::ostringstream out;
  out << num_source_classes << '|' << num_target_classes << '|'
      << hierarchy_branching << '|' << images_per_class << '|'
      << proposals_per_image << '|' << feature_dim << '|'
      << format_double(class_separation) << '|' << format_double(feature_noise)
      << '|' << format_double(distractor_fraction) << '|'
      << format_double(proposal_jitter) << '|'
      << format_double(semantic_feature_sharing) << '|'
      << format_double(context_signal) << '|'
      << format_double(noisy_objectness_sigma) << '|' << rng_seed;
  return content_digest(out.str());
}

namespace {

constexpr double kImageSide = 100.0;

// Builds a balanced tree over the leaves by repeatedly grouping consecutive
// runs of `branching` nodes. Targets are spread evenly among the sources so
// each target has nearby source leaves.
Hierarchy build_hierarchy(const GenConfig& cfg) {
  const int total = cfg.num_source_classes + cfg.num_target_classes;

  std::vector<bool> is_target(total, false);
  for (int i = 0; i < cfg.num_target_classes; ++i) {
    int pos = static_cast<int>((2 * i + 1) * static_cast<long>(total) /
                               (2 * cfg.num_target_classes));
    while (is_target[pos]) pos = (pos + 1) % total;  // defensive, tiny trees
    is_target[pos] = true;
  }

  // Local tree in construction order; ids are assigned afterwards.
  struct TempNode {
    std::string name;
    int parent = -1;
    NodeRole role = NodeRole::internal;
  };
  std::vector<TempNode> temp;
  std::vector<int> level;  // indices into temp
  int src_idx = 0, tgt_idx = 0;
  char buf[32];
  for (int i = 0; i < total; ++i) {
    TempNode n;
    if (is_target[i]) {
      std::snprintf(buf, sizeof buf, "tgt_%02d", tgt_idx++);
      n.role = NodeRole::target;
    } else {
      std::snprintf(buf, sizeof buf, "src_%02d", src_idx++);
      n.role = NodeRole::source;
    }
    n.name = buf;
    level.push_back(static_cast<int>(temp.size()));
    temp.push_back(std::move(n));
  }

  int depth_tag = 0;
  while (level.size() > 1) {
    std::vector<int> next;
    std::size_t i = 0;
    int group_idx = 0;
    while (i < level.size()) {
      std::size_t take = std::min<std::size_t>(cfg.hierarchy_branching,
                                               level.size() - i);
      // Never leave a singleton group: fold it into the previous one.
      if (take == 1 && !next.empty()) {
        temp[level[i]].parent = next.back();
        ++i;
        continue;
      }
      TempNode parent;
      std::snprintf(buf, sizeof buf, "grp_%d_%d", depth_tag, group_idx++);
      parent.name = buf;
      const int parent_idx = static_cast<int>(temp.size());
      temp.push_back(std::move(parent));
      for (std::size_t j = 0; j < take; ++j) {
        temp[level[i + j]].parent = parent_idx;
      }
      i += take;
      next.push_back(parent_idx);
    }
    level = std::move(next);
    ++depth_tag;
  }
  const int root_idx = level.front();
  temp[root_idx].name = "entity";

  // Re-number: root first, then breadth-first, so the root gets id 0.
  std::vector<std::vector<int>> temp_children(temp.size());
  for (std::size_t i = 0; i < temp.size(); ++i) {
    if (temp[i].parent >= 0) temp_children[temp[i].parent].push_back(i);
  }
  std::vector<int> order{root_idx};
  for (std::size_t head = 0; head < order.size(); ++head) {
    for (int c : temp_children[order[head]]) order.push_back(c);
  }
  std::vector<int> new_id(temp.size());
  for (std::size_t i = 0; i < order.size(); ++i) new_id[order[i]] = i;

  std::vector<HierarchyNode> nodes(temp.size());
  for (std::size_t i = 0; i < temp.size(); ++i) {
    HierarchyNode& n = nodes[new_id[i]];
    n.id = new_id[i];
    n.name = temp[i].name;
    n.parent = temp[i].parent < 0 ? -1 : new_id[temp[i].parent];
    n.role = temp[i].role;
  }
  return Hierarchy::build(std::move(nodes));
}

// Per-leaf feature means. Coordinate 0 is reserved as an object-vs-background
// axis shared by every class, so a class-generic scorer is learnable no
// matter how the remaining coordinates are shared. Coordinates 1..D-1 carry
// class identity, blended along the hierarchy: a node's latent direction
// mixes its own draw with its parent's, so siblings look more alike than
// distant cousins, with semantic_feature_sharing setting the mix.
std::vector<FeatureVector> class_means(const GenConfig& cfg,
                                       const Hierarchy& h) {
  const int d = cfg.feature_dim - 1;  // class-identity coordinates
  const double s = cfg.semantic_feature_sharing;
  std::vector<FeatureVector> latent(h.num_nodes());
  for (ClassId id = 0; id < h.num_nodes(); ++id) {
    SplitRng rng(derive_seed(cfg.rng_seed, "classmean", id));
    FeatureVector own(d);
    for (double& v : own) v = rng.normal();
    if (id == kRootId) {
      latent[id] = std::move(own);
      continue;
    }
    const FeatureVector& parent = latent[h.parent(id)];
    FeatureVector mixed(d);
    for (int i = 0; i < d; ++i) {
      mixed[i] = std::sqrt(1.0 - s) * own[i] + std::sqrt(s) * parent[i];
    }
    latent[id] = std::move(mixed);
  }

  // Each mean splits its energy evenly between the shared objectness axis
  // and a unit-norm class-identity direction, so class_separation sets both
  // signals at once.
  std::vector<FeatureVector> means(h.num_nodes());
  for (ClassId id = 0; id < h.num_nodes(); ++id) {
    if (!h.is_leaf(id)) continue;
    double norm = 0.0;
    for (int i = 0; i < d; ++i) norm += latent[id][i] * latent[id][i];
    norm = std::sqrt(norm);
    const double scale = cfg.class_separation / std::sqrt(2.0);
    FeatureVector m(cfg.feature_dim);
    m[0] = scale;  // the shared objectness axis
    for (int i = 0; i < d; ++i) m[i + 1] = scale * latent[id][i] / norm;
    means[id] = std::move(m);
  }
  return means;
}

double clamp(double v, double lo, double hi) {
  return std::min(hi, std::max(lo, v));
}

// Clamps a jittered box into the image and repairs degenerate sides so the
// result is always a valid box, keeping RNG consumption fixed per proposal.
BoundingBox repair_box(double x0, double y0, double x1, double y1) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  x0 = clamp(x0, 0.0, kImageSide);
  x1 = clamp(x1, 0.0, kImageSide);
  y0 = clamp(y0, 0.0, kImageSide);
  y1 = clamp(y1, 0.0, kImageSide);
  const double min_side = 2.0;
  if (x1 - x0 < min_side) {
    const double c = clamp((x0 + x1) / 2, min_side / 2, kImageSide - min_side / 2);
    x0 = c - min_side / 2;
    x1 = c + min_side / 2;
  }
  if (y1 - y0 < min_side) {
    const double c = clamp((y0 + y1) / 2, min_side / 2, kImageSide - min_side / 2);
    y0 = c - min_side / 2;
    y1 = c + min_side / 2;
  }
  return BoundingBox{x0, y0, x1, y1};
}

ImageBag make_image(const GenConfig& cfg, const std::string& split,
                    const std::string& class_name, ClassId cls, int index,
                    const FeatureVector& class_mean) {
  SplitRng rng(derive_seed(cfg.rng_seed, split + "/" + class_name, index));

  ImageBag bag;
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", index);
  bag.image_id = split + ":" + class_name + ":" + buf;
  bag.width = kImageSide;
  bag.height = kImageSide;
  bag.image_labels = {cls};

  const double gw = rng.uniform(25.0, 55.0);
  const double gh = rng.uniform(25.0, 55.0);
  const double gx = rng.uniform(0.0, kImageSide - gw);
  const double gy = rng.uniform(0.0, kImageSide - gh);
  const BoundingBox gt{gx, gy, gx + gw, gy + gh};
  bag.gt_boxes.push_back(GtBox{cls, gt});

  const int extra = cfg.proposals_per_image - 1;
  const int n_distract =
      static_cast<int>(std::lround(cfg.distractor_fraction * extra));
  const int n_jitter = extra - n_distract;

  std::vector<BoundingBox> boxes;
  boxes.push_back(gt);  // the bag assumption: one perfect proposal always
  for (int i = 0; i < n_jitter; ++i) {
    const double jx = cfg.proposal_jitter * gw;
    const double jy = cfg.proposal_jitter * gh;
    boxes.push_back(repair_box(
        gt.x_min + jx * rng.normal(), gt.y_min + jy * rng.normal(),
        gt.x_max + jx * rng.normal(), gt.y_max + jy * rng.normal()));
  }
  for (int i = 0; i < n_distract; ++i) {
    const double w = rng.uniform(10.0, 70.0);
    const double h = rng.uniform(10.0, 70.0);
    const double x = rng.uniform(0.0, kImageSide - w);
    const double y = rng.uniform(0.0, kImageSide - h);
    boxes.push_back(BoundingBox{x, y, x + w, y + h});
  }

  bag.proposals.reserve(boxes.size());
  for (const BoundingBox& b : boxes) {
    Proposal p;
    p.box = b;
    const double q = iou(b, gt);
    // Context: boxes off the object still pick up class-correlated signal in
    // the identity coordinates, sometimes more than the object itself. The
    // objectness coordinate responds to true overlap only.
    const double leak =
        cfg.context_signal * (1.0 - q) * rng.uniform(0.0, 1.0);
    p.features.resize(cfg.feature_dim);
    p.features[0] = q * class_mean[0] + cfg.feature_noise * rng.normal();
    for (int i = 1; i < cfg.feature_dim; ++i) {
      p.features[i] = (q + leak) * class_mean[i] + cfg.feature_noise * rng.normal();
    }
    p.objectness = clamp(q + cfg.noisy_objectness_sigma * rng.normal(), 0.0, 1.0);
    bag.proposals.push_back(std::move(p));
  }

  // Shuffle so proposal order carries no hint of how each box was produced.
  std::vector<int> order = rng.permutation(static_cast<int>(bag.proposals.size()));
  std::vector<Proposal> shuffled(bag.proposals.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    shuffled[i] = std::move(bag.proposals[order[i]]);
  }
  bag.proposals = std::move(shuffled);
  return bag;
}

}  // namespace

Dataset generate(const GenConfig& cfg) {
  cfg.validate();

  Dataset d{build_hierarchy(cfg), {}, {}, {}, cfg.digest()};
  const std::vector<FeatureVector> means = class_means(cfg, d.hierarchy);

  auto fill_split = [&](const std::string& split, const std::vector<ClassId>& classes,
                        std::vector<ImageBag>* out) {
    for (ClassId c : classes) {
      const std::string& name = d.hierarchy.node(c).name;
      for (int i = 0; i < cfg.images_per_class; ++i) {
        out->push_back(make_image(cfg, split, name, c, i, means[c]));
      }
    }
  };
  fill_split("train_source", d.hierarchy.source_leaves(), &d.train_source);
  fill_split("train_target", d.hierarchy.target_leaves(), &d.train_target);
  fill_split("test_target", d.hierarchy.target_leaves(), &d.test_target);

  validate_dataset(d);
  return d;
}

}  // namespace hiermil
