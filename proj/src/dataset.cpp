#include "hiermil/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hiermil/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hiermil {

bool ImageBag::has_label(ClassId c) const {
  return std::binary_search(image_labels.begin(), image_labels.end(), c);
}

std::vector<MilImageView> views_of(const std::vector<ImageBag>& images) {
  std::vector<MilImageView> views;
  views.reserve(images.size());
  for (const ImageBag& bag : images) views.emplace_back(&bag);
  return views;
}

std::vector<MilImageView> strip_gt(const Dataset& d) {
  return views_of(d.train_target);
}

void validate_image(const ImageBag& bag, const Hierarchy& h, int feature_dim) {
  const std::string where = "image '" + bag.image_id + "': ";
  if (bag.image_id.empty()) throw DataError("image with empty id");
  if (!(bag.width > 0.0) || !(bag.height > 0.0)) {
    throw DataError(where + "non-positive dimensions");
  }
  if (bag.proposals.empty()) throw DataError(where + "no proposals");

  auto in_bounds = [&](const BoundingBox& b) {
    return b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_max <= bag.width &&
           b.y_max <= bag.height;
  };
  for (std::size_t i = 0; i < bag.proposals.size(); ++i) {
    const Proposal& p = bag.proposals[i];
    check_box(p.box, (where + "proposal " + std::to_string(i)).c_str());
    if (!in_bounds(p.box)) {
      throw DataError(where + "proposal " + std::to_string(i) +
                      " outside image bounds");
    }
    if (static_cast<int>(p.features.size()) != feature_dim) {
      throw DataError(where + "proposal " + std::to_string(i) +
                      " feature dimension " + std::to_string(p.features.size()) +
                      " != " + std::to_string(feature_dim));
    }
    for (double v : p.features) {
      if (!std::isfinite(v)) {
        throw DataError(where + "non-finite feature value");
      }
    }
    if (!std::isfinite(p.objectness)) {
      throw DataError(where + "non-finite objectness");
    }
  }

  if (bag.image_labels.empty()) throw DataError(where + "no labels");
  for (std::size_t i = 0; i < bag.image_labels.size(); ++i) {
    const ClassId c = bag.image_labels[i];
    if (c < 0 || c >= h.num_nodes() || !h.is_leaf(c)) {
      throw DataError(where + "label " + std::to_string(c) +
                      " is not a leaf class");
    }
    if (i > 0 && bag.image_labels[i - 1] >= c) {
      throw DataError(where + "labels not sorted/unique");
    }
  }
  for (const GtBox& g : bag.gt_boxes) {
    check_box(g.box, (where + "gt box").c_str());
    if (!in_bounds(g.box)) throw DataError(where + "gt box outside bounds");
    if (!bag.has_label(g.cls)) {
      throw DataError(where + "gt box class " + std::to_string(g.cls) +
                      " missing from image_labels");
    }
  }
}

int feature_dimension(const Dataset& d) {
  for (const auto* split : {&d.train_source, &d.train_target, &d.test_target}) {
    for (const ImageBag& bag : *split) {
      if (!bag.proposals.empty()) {
        return static_cast<int>(bag.proposals.front().features.size());
      }
    }
  }
  throw DataError("dataset has no proposals");
}

void validate_dataset(const Dataset& d) {
  const int dim = feature_dimension(d);
  auto check_split = [&](const std::vector<ImageBag>& images,
                         const char* name, bool needs_gt) {
    for (const ImageBag& bag : images) {
      validate_image(bag, d.hierarchy, dim);
      if (needs_gt && bag.gt_boxes.empty()) {
        throw DataError(std::string(name) + " image '" + bag.image_id +
                        "' lacks ground truth");
      }
    }
  };
  check_split(d.train_source, "train_source", true);
  check_split(d.train_target, "train_target", true);
  check_split(d.test_target, "test_target", true);

  for (const ImageBag& bag : d.train_source) {
    for (ClassId c : bag.image_labels) {
      if (!d.hierarchy.is_source_leaf(c)) {
        throw DataError("train_source image '" + bag.image_id +
                        "' labeled with non-source class " +
                        d.hierarchy.node(c).name);
      }
    }
  }
  for (const auto* split : {&d.train_target, &d.test_target}) {
    for (const ImageBag& bag : *split) {
      for (ClassId c : bag.image_labels) {
        if (!d.hierarchy.is_target_leaf(c)) {
          throw DataError("target image '" + bag.image_id +
                          "' labeled with non-target class " +
                          d.hierarchy.node(c).name);
        }
      }
    }
  }
}

GroundTruthBoxes ground_truth_for(const std::vector<ImageBag>& images,
                                  ClassId cls) {
  GroundTruthBoxes gt;
  for (const ImageBag& bag : images) {
    std::vector<BoundingBox> boxes;
    for (const GtBox& g : bag.gt_boxes) {
      if (g.cls == cls) boxes.push_back(g.box);
    }
    if (!boxes.empty()) gt.emplace(bag.image_id, std::move(boxes));
  }
  return gt;
}

namespace {

json box_to_json(const BoundingBox& b) {
  return json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

BoundingBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("bad box record");
  return BoundingBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                     j[3].get<double>()};
}

std::string image_to_line(const ImageBag& bag) {
  json j;
  j["id"] = bag.image_id;
  j["w"] = bag.width;
  j["h"] = bag.height;
  j["labels"] = bag.image_labels;
  json gt = json::array();
  for (const GtBox& g : bag.gt_boxes) {
    gt.push_back(json{{"b", box_to_json(g.box)}, {"c", g.cls}});
  }
  j["gt"] = gt;
  json props = json::array();
  for (const Proposal& p : bag.proposals) {
    props.push_back(json{
        {"b", box_to_json(p.box)}, {"f", p.features}, {"o", p.objectness}});
  }
  j["props"] = props;
  return j.dump();
}

ImageBag image_from_line(const std::string& line, int line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("line " + std::to_string(line_no) + ": " + e.what());
  }
  try {
    ImageBag bag;
    bag.image_id = j.at("id").get<std::string>();
    bag.width = j.at("w").get<double>();
    bag.height = j.at("h").get<double>();
    bag.image_labels = j.at("labels").get<std::vector<ClassId>>();
    for (const json& g : j.at("gt")) {
      bag.gt_boxes.push_back(
          GtBox{g.at("c").get<ClassId>(), box_from_json(g.at("b"))});
    }
    for (const json& p : j.at("props")) {
      Proposal prop;
      prop.box = box_from_json(p.at("b"));
      prop.features = p.at("f").get<FeatureVector>();
      prop.objectness = p.at("o").get<double>();
      bag.proposals.push_back(std::move(prop));
    }
    return bag;
  } catch (const json::exception& e) {
    throw DataError("line " + std::to_string(line_no) + ": " + e.what());
  }
}

std::string split_to_text(const std::vector<ImageBag>& images) {
  std::string out;
  for (const ImageBag& bag : images) {
    out += image_to_line(bag);
    out += '\n';
  }
  return out;
}

std::vector<ImageBag> split_from_text(const std::string& text) {
  std::vector<ImageBag> images;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    images.push_back(image_from_line(line, line_no));
  }
  return images;
}

constexpr const char* kSplitNames[] = {"train_source", "train_target",
                                       "test_target"};

}  // namespace

void save_dataset(const std::string& dir, const Dataset& d) {
  validate_dataset(d);
  const std::string hier_text = d.hierarchy.to_text();
  const std::string split_text[3] = {split_to_text(d.train_source),
                                     split_to_text(d.train_target),
                                     split_to_text(d.test_target)};

  json manifest;
  manifest["format"] = "hiermil-dataset";
  manifest["version"] = 1;
  manifest["rng_algorithm"] = kRngAlgorithm;
  manifest["config_digest"] = d.config_digest;
  manifest["feature_dim"] = feature_dimension(d);
  manifest["hierarchy"] = {{"file", "hierarchy.tsv"},
                           {"digest", content_digest(hier_text)}};
  json splits;
  const std::vector<ImageBag>* lists[3] = {&d.train_source, &d.train_target,
                                           &d.test_target};
  for (int i = 0; i < 3; ++i) {
    splits[kSplitNames[i]] = {
        {"file", std::string(kSplitNames[i]) + ".jsonl"},
        {"images", lists[i]->size()},
        {"digest", content_digest(split_text[i])}};
  }
  manifest["splits"] = splits;

  fs::create_directories(dir);
  write_file_atomic(dir + "/hierarchy.tsv", hier_text);
  for (int i = 0; i < 3; ++i) {
    write_file_atomic(dir + "/" + kSplitNames[i] + ".jsonl", split_text[i]);
  }
  write_file_atomic(dir + "/manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir + "/manifest.json"));
  } catch (const json::exception& e) {
    throw DataError(dir + "/manifest.json: " + e.what());
  }
  if (manifest.value("format", "") != "hiermil-dataset" ||
      manifest.value("version", 0) != 1) {
    throw DataError(dir + ": not a hiermil-dataset v1 directory");
  }

  const std::string hier_file =
      manifest.at("hierarchy").at("file").get<std::string>();
  const std::string hier_text = read_file(dir + "/" + hier_file);
  if (content_digest(hier_text) !=
      manifest.at("hierarchy").at("digest").get<std::string>()) {
    throw DataError(dir + "/" + hier_file + ": digest mismatch");
  }
  Dataset d{Hierarchy::parse(hier_text), {}, {}, {},
            manifest.value("config_digest", "")};

  std::vector<ImageBag>* lists[3] = {&d.train_source, &d.train_target,
                                     &d.test_target};
  for (int i = 0; i < 3; ++i) {
    const json& entry = manifest.at("splits").at(kSplitNames[i]);
    const std::string text =
        read_file(dir + "/" + entry.at("file").get<std::string>());
    if (content_digest(text) != entry.at("digest").get<std::string>()) {
      throw DataError(std::string(kSplitNames[i]) + ": digest mismatch");
    }
    *lists[i] = split_from_text(text);
    if (lists[i]->size() != entry.at("images").get<std::size_t>()) {
      throw DataError(std::string(kSplitNames[i]) + ": image count mismatch");
    }
  }
  validate_dataset(d);
  return d;
}

}  // namespace hiermil
