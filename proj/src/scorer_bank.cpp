#include "hiermil/scorer_bank.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "hiermil/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hiermil {

void BankConfig::validate() const {
  if (!(positive_iou > 0.0) || !(positive_iou < 1.0)) {
    throw ConfigError("positive_iou must be in (0,1)");
  }
  if (!(negative_iou > 0.0) || negative_iou > positive_iou) {
    throw ConfigError("negative_iou must be in (0, positive_iou]");
  }
  train.validate();
}

std::vector<ClassId> ScorerBank::trained_nodes() const {
  std::vector<ClassId> nodes;
  nodes.reserve(per_node.size());
  for (const auto& [id, model] : per_node) nodes.push_back(id);
  return nodes;
}

ScorerBank train_bank(const Hierarchy& h,
                      const std::vector<ImageBag>& source_images,
                      const BankConfig& cfg, BankTrainLog* log) {
  cfg.validate();
  if (source_images.empty()) throw DataError("train_bank: no source images");

  // One pass over the data: per-leaf positive samples and the shared
  // negative pool.
  struct PositiveSample {
    std::string image_id;
    int proposal = 0;
    const FeatureVector* features = nullptr;
  };
  std::map<ClassId, std::vector<PositiveSample>> leaf_positives;
  std::vector<FeatureVector> negatives;

  for (const ImageBag& bag : source_images) {
    for (std::size_t pi = 0; pi < bag.proposals.size(); ++pi) {
      const Proposal& p = bag.proposals[pi];
      double max_any = 0.0;
      for (const GtBox& g : bag.gt_boxes) {
        const double q = iou(p.box, g.box);
        max_any = std::max(max_any, q);
        if (q > cfg.positive_iou && h.is_source_leaf(g.cls)) {
          auto& list = leaf_positives[g.cls];
          // A proposal joins a leaf's positive set once, even when several
          // boxes of that class match it.
          if (list.empty() || list.back().features != &p.features) {
            list.push_back(
                {bag.image_id, static_cast<int>(pi), &p.features});
          }
        }
      }
      if (max_any < cfg.negative_iou) negatives.push_back(p.features);
    }
  }
  if (negatives.empty()) {
    throw DataError("train_bank: empty negative pool");
  }

  ScorerBank bank;
  bank.hierarchy_digest = h.digest();
  for (ClassId node = 0; node < h.num_nodes(); ++node) {
    const std::vector<ClassId>& leaves = h.source_descendants(node);
    if (leaves.empty()) continue;

    std::vector<FeatureVector> positives;
    std::vector<BankTrainLog::SampleKey> keys;
    for (ClassId leaf : leaves) {
      auto it = leaf_positives.find(leaf);
      if (it == leaf_positives.end()) continue;
      for (const PositiveSample& s : it->second) {
        positives.push_back(*s.features);
        if (log) keys.emplace_back(s.image_id, s.proposal);
      }
    }
    if (positives.empty()) {
      throw DataError("train_bank: node '" + h.node(node).name +
                      "' has source descendants but no positive proposals");
    }
    TrainConfig node_cfg = cfg.train;
    node_cfg.rng_seed = derive_seed(cfg.train.rng_seed, "node", node);
    bank.per_node[node] = train_binary(positives, negatives, node_cfg);
    if (log) log->positives[node] = std::move(keys);
  }
  return bank;
}

ScoreTable::ScoreTable(std::vector<ClassId> nodes, int num_proposals)
    : nodes_(std::move(nodes)), num_proposals_(num_proposals) {
  values_.assign(static_cast<std::size_t>(num_proposals_) * nodes_.size(),
                 0.0);
}

int ScoreTable::column(ClassId node, const char* what) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), node);
  if (it == nodes_.end() || *it != node) {
    throw DataError(std::string(what) + ": no score for node " +
                    std::to_string(node));
  }
  return static_cast<int>(it - nodes_.begin());
}

double ScoreTable::at(int proposal, ClassId node) const {
  return values_[static_cast<std::size_t>(proposal) * nodes_.size() +
                 column(node, "ScoreTable::at")];
}

void ScoreTable::set(int proposal, ClassId node, double value) {
  values_[static_cast<std::size_t>(proposal) * nodes_.size() +
          column(node, "ScoreTable::set")] = value;
}

bool ScoreTable::has(ClassId node) const {
  return std::binary_search(nodes_.begin(), nodes_.end(), node);
}

ScoreTable apply_bank(const ScorerBank& bank, const MilImageView& image) {
  if (bank.per_node.empty()) throw DataError("apply_bank: untrained bank");
  ScoreTable table(bank.trained_nodes(),
                   static_cast<int>(image.proposals().size()));
  for (int pi = 0; pi < table.num_proposals(); ++pi) {
    const Proposal& p = image.proposals()[pi];
    for (const auto& [node, model] : bank.per_node) {
      table.set(pi, node, score_sigmoid(model, p.features));
    }
  }
  return table;
}

static std::string node_file_name(ClassId node) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "node_%04d.model", node);
  return buf;
}

void save_bank(const std::string& dir, const ScorerBank& bank,
               const BankConfig& cfg) {
  const std::string train_digest = train_config_digest(cfg.train);
  fs::create_directories(dir);

  json manifest;
  manifest["format"] = "hiermil-bank";
  manifest["version"] = 1;
  manifest["hierarchy_digest"] = bank.hierarchy_digest;
  manifest["positive_iou"] = cfg.positive_iou;
  manifest["negative_iou"] = cfg.negative_iou;
  json nodes = json::array();
  for (const auto& [id, model] : bank.per_node) {
    const std::string text = model_to_text(model, train_digest);
    const std::string file = node_file_name(id);
    write_file_atomic(dir + "/" + file, text);
    nodes.push_back(json{
        {"id", id}, {"file", file}, {"digest", content_digest(text)}});
  }
  manifest["nodes"] = nodes;
  write_file_atomic(dir + "/manifest.json", manifest.dump(2) + "\n");
}

ScorerBank load_bank(const std::string& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir + "/manifest.json"));
  } catch (const json::exception& e) {
    throw DataError(dir + "/manifest.json: " + e.what());
  }
  if (manifest.value("format", "") != "hiermil-bank" ||
      manifest.value("version", 0) != 1) {
    throw DataError(dir + ": not a hiermil-bank v1 directory");
  }
  ScorerBank bank;
  bank.hierarchy_digest = manifest.at("hierarchy_digest").get<std::string>();
  for (const json& entry : manifest.at("nodes")) {
    const std::string text =
        read_file(dir + "/" + entry.at("file").get<std::string>());
    if (content_digest(text) != entry.at("digest").get<std::string>()) {
      throw DataError(entry.at("file").get<std::string>() +
                      ": digest mismatch");
    }
    bank.per_node[entry.at("id").get<ClassId>()] = model_from_text(text);
  }
  if (bank.per_node.empty()) throw DataError(dir + ": bank has no nodes");
  return bank;
}

std::string bank_digest(const ScorerBank& bank) {
  std::string all = bank.hierarchy_digest;
  for (const auto& [id, model] : bank.per_node) {
    all += '|';
    all += std::to_string(id);
    all += model_to_text(model, "");
  }
  return content_digest(all);
}

}  // namespace hiermil
