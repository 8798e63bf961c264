#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hiermil/dataset.hpp"

namespace hiermil {

struct BankConfig {
  // A proposal is a positive sample for a class when its overlap with one of
  // that class's ground-truth boxes exceeds positive_iou; it joins the
  // negative pool only when it overlaps no ground truth of any class above
  // negative_iou.
  double positive_iou = 0.5;
  double negative_iou = 0.3;
  TrainConfig train;

  void validate() const;
};

// One linear scorer per hierarchy node that has source leaves below it. The
// root's model plays the role of a trained class-generic objectness measure.
struct ScorerBank {
  std::map<ClassId, LinearModel> per_node;
  std::string hierarchy_digest;

  bool is_trained(ClassId node) const { return per_node.count(node) != 0; }
  std::vector<ClassId> trained_nodes() const;
};

// Instrumentation for tests: which (image, proposal) pairs each node was
// trained on as positives.
struct BankTrainLog {
  using SampleKey = std::pair<std::string, int>;
  std::map<ClassId, std::vector<SampleKey>> positives;
};

// Trains every node that has at least one source leaf among its
// descendants-or-self. A node's positive set is the union of the positive
// sets of those leaves; the negative pool is shared and drawn from proposals
// clear of all ground truth. Throws when a trainable node ends up with zero
// positives.
ScorerBank train_bank(const Hierarchy& h,
                      const std::vector<ImageBag>& source_images,
                      const BankConfig& cfg, BankTrainLog* log = nullptr);

// Sigmoid scores of every trained node on every proposal of one image.
class ScoreTable {
 public:
  ScoreTable(std::vector<ClassId> nodes, int num_proposals);

  double at(int proposal, ClassId node) const;
  void set(int proposal, ClassId node, double value);
  bool has(ClassId node) const;
  const std::vector<ClassId>& nodes() const { return nodes_; }
  int num_proposals() const { return num_proposals_; }

 private:
  int column(ClassId node, const char* what) const;

  std::vector<ClassId> nodes_;  // ascending
  int num_proposals_ = 0;
  std::vector<double> values_;  // row-major, proposal * node
};

ScoreTable apply_bank(const ScorerBank& bank, const MilImageView& image);

// Directory of per-node model records plus a manifest binding them to a
// hierarchy digest and the training config.
void save_bank(const std::string& dir, const ScorerBank& bank,
               const BankConfig& cfg);
ScorerBank load_bank(const std::string& dir);
std::string bank_digest(const ScorerBank& bank);

}  // namespace hiermil
