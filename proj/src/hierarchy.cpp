#include "hiermil/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hiermil {

const char* role_name(NodeRole r) {
  switch (r) {
    case NodeRole::internal: return "internal";
    case NodeRole::source: return "source";
    case NodeRole::target: return "target";
  }
  return "?";
}

static NodeRole parse_role(const std::string& s, int line_no) {
  if (s == "internal") return NodeRole::internal;
  if (s == "source") return NodeRole::source;
  if (s == "target") return NodeRole::target;
  throw DataError("hierarchy line " + std::to_string(line_no) +
                  ": unknown role '" + s + "'");
}

Hierarchy Hierarchy::build(std::vector<HierarchyNode> nodes) {
  Hierarchy h;
  const int n = static_cast<int>(nodes.size());
  if (n == 0) throw DataError("hierarchy: no nodes");

  h.nodes_.resize(n);
  for (const HierarchyNode& nd : nodes) {
    if (nd.id < 0 || nd.id >= n) {
      throw DataError("hierarchy: node id " + std::to_string(nd.id) +
                      " not in dense range 0.." + std::to_string(n - 1));
    }
    if (!h.nodes_[nd.id].name.empty()) {
      throw DataError("hierarchy: duplicate node id " + std::to_string(nd.id));
    }
    if (nd.name.empty()) {
      throw DataError("hierarchy: node " + std::to_string(nd.id) +
                      " has empty name");
    }
    h.nodes_[nd.id] = nd;
  }
  for (int i = 0; i < n; ++i) {
    if (h.nodes_[i].name.empty()) {
      throw DataError("hierarchy: missing node id " + std::to_string(i) +
                      " (ids must be dense)");
    }
    if (!h.by_name_.emplace(h.nodes_[i].name, i).second) {
      throw DataError("hierarchy: duplicate node name '" + h.nodes_[i].name +
                      "'");
    }
  }
  if (h.nodes_[kRootId].parent != -1) {
    throw DataError("hierarchy: node 0 must be the root (no parent)");
  }

  h.children_.assign(n, {});
  for (int i = 0; i < n; ++i) {
    const ClassId p = h.nodes_[i].parent;
    if (i == kRootId) continue;
    if (p < 0 || p >= n) {
      throw DataError("hierarchy: node " + std::to_string(i) +
                      " has invalid parent " + std::to_string(p));
    }
    if (p == i) {
      throw DataError("hierarchy: node " + std::to_string(i) +
                      " is its own parent");
    }
    h.children_[p].push_back(i);
  }

  // Every node must reach the root in at most n parent steps.
  h.depth_.assign(n, -1);
  for (int i = 0; i < n; ++i) {
    ClassId c = i;
    int steps = 0;
    while (c != kRootId) {
      c = h.nodes_[c].parent;
      if (++steps > n) {
        throw DataError("hierarchy: cycle through node " + std::to_string(i));
      }
    }
    h.depth_[i] = steps;
  }

  for (int i = 0; i < n; ++i) {
    const bool leaf = h.children_[i].empty();
    const NodeRole role = h.nodes_[i].role;
    if (leaf && role == NodeRole::internal) {
      throw DataError("hierarchy: leaf '" + h.nodes_[i].name +
                      "' has no source/target designation");
    }
    if (!leaf && role != NodeRole::internal) {
      throw DataError("hierarchy: non-leaf '" + h.nodes_[i].name +
                      "' designated " + role_name(role));
    }
    if (leaf && role == NodeRole::source) h.source_leaves_.push_back(i);
    if (leaf && role == NodeRole::target) h.target_leaves_.push_back(i);
  }

  // Source leaves below each node, accumulated bottom-up (deepest first).
  h.source_desc_.assign(n, {});
  std::vector<ClassId> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](ClassId a, ClassId b) { return h.depth_[a] > h.depth_[b]; });
  for (ClassId c : order) {
    if (h.nodes_[c].role == NodeRole::source) h.source_desc_[c].push_back(c);
    if (c != kRootId) {
      auto& up = h.source_desc_[h.nodes_[c].parent];
      up.insert(up.end(), h.source_desc_[c].begin(), h.source_desc_[c].end());
    }
  }
  for (auto& v : h.source_desc_) std::sort(v.begin(), v.end());

  return h;
}

static std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

Hierarchy Hierarchy::parse(const std::string& text) {
  std::vector<HierarchyNode> nodes;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw DataError("hierarchy line " + std::to_string(line_no) +
                      ": expected 4 tab-separated fields, got " +
                      std::to_string(fields.size()));
    }
    HierarchyNode nd;
    try {
      nd.id = std::stoi(fields[0]);
    } catch (const std::exception&) {
      throw DataError("hierarchy line " + std::to_string(line_no) +
                      ": bad id '" + fields[0] + "'");
    }
    nd.name = fields[1];
    if (fields[2] == "-") {
      nd.parent = -1;
    } else {
      try {
        nd.parent = std::stoi(fields[2]);
      } catch (const std::exception&) {
        throw DataError("hierarchy line " + std::to_string(line_no) +
                        ": bad parent '" + fields[2] + "'");
      }
    }
    nd.role = parse_role(fields[3], line_no);
    nodes.push_back(std::move(nd));
  }
  return build(std::move(nodes));
}

Hierarchy Hierarchy::load_file(const std::filesystem::path& path) {
  return parse(read_file(path));
}

std::string Hierarchy::to_text() const {
  std::ostringstream out;
  for (const HierarchyNode& nd : nodes_) {
    out << nd.id << '\t' << nd.name << '\t';
    if (nd.parent < 0) {
      out << '-';
    } else {
      out << nd.parent;
    }
    out << '\t' << role_name(nd.role) << '\n';
  }
  return out.str();
}

void Hierarchy::save_file(const std::filesystem::path& path) const {
  write_file_atomic(path, to_text());
}

const HierarchyNode& Hierarchy::node(ClassId c) const {
  if (c < 0 || c >= num_nodes()) {
    throw DataError("unknown class id " + std::to_string(c));
  }
  return nodes_[c];
}

std::optional<ClassId> Hierarchy::find_by_name(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

const std::vector<ClassId>& Hierarchy::children(ClassId c) const {
  node(c);
  return children_[c];
}

int Hierarchy::depth(ClassId c) const {
  node(c);
  return depth_[c];
}

bool Hierarchy::is_source_leaf(ClassId c) const {
  return node(c).role == NodeRole::source;
}

bool Hierarchy::is_target_leaf(ClassId c) const {
  return node(c).role == NodeRole::target;
}

std::vector<ClassId> Hierarchy::ancestors(ClassId c) const {
  node(c);
  std::vector<ClassId> out;
  while (c != kRootId) {
    c = nodes_[c].parent;
    out.push_back(c);
  }
  return out;
}

std::set<ClassId> Hierarchy::expand_labels(
    const std::set<ClassId>& leaf_labels) const {
  std::set<ClassId> out;
  for (ClassId c : leaf_labels) {
    if (!is_leaf(c)) {
      throw DataError("expand_labels: '" + node(c).name + "' is not a leaf");
    }
    out.insert(c);
    for (ClassId a : ancestors(c)) out.insert(a);
  }
  return out;
}

const std::vector<ClassId>& Hierarchy::source_descendants(ClassId c) const {
  node(c);
  return source_desc_[c];
}

ClassId Hierarchy::closest_ancestor_with_min_sources(ClassId t, int n) const {
  if (!is_target_leaf(t)) {
    throw DataError("class '" + node(t).name + "' is not a target leaf");
  }
  const int total = static_cast<int>(source_leaves_.size());
  if (n < 1 || n > total) {
    throw DataError("ancestor source count " + std::to_string(n) +
                    " out of range 1.." + std::to_string(total));
  }
  for (ClassId a : ancestors(t)) {
    if (static_cast<int>(source_desc_[a].size()) >= n) return a;
  }
  // Unreachable: the root sees every source leaf and n <= total.
  throw DataError("no ancestor with " + std::to_string(n) + " sources");
}

std::vector<ClassId> Hierarchy::closest_sources(ClassId t) const {
  if (source_leaves_.empty()) {
    throw DataError("hierarchy has no source leaves");
  }
  const ClassId a1 = closest_ancestor_with_min_sources(t, 1);
  return source_desc_[a1];
}

ClassId Hierarchy::lowest_common_ancestor(ClassId a, ClassId b) const {
  node(a);
  node(b);
  while (a != b) {
    if (depth_[a] >= depth_[b]) {
      a = nodes_[a].parent;
    } else {
      b = nodes_[b].parent;
    }
  }
  return a;
}

Hierarchy Hierarchy::with_roles(const std::set<ClassId>& sources,
                                const std::set<ClassId>& targets) const {
  std::vector<HierarchyNode> nodes = nodes_;
  for (HierarchyNode& nd : nodes) {
    if (sources.count(nd.id) && targets.count(nd.id)) {
      throw DataError("class '" + nd.name + "' designated source and target");
    }
    if (sources.count(nd.id)) {
      nd.role = NodeRole::source;
    } else if (targets.count(nd.id)) {
      nd.role = NodeRole::target;
    } else if (children_[nd.id].empty()) {
      throw DataError("with_roles: leaf '" + nd.name + "' left undesignated");
    }
  }
  return build(std::move(nodes));
}

std::vector<double> information_content(
    const Hierarchy& h, const std::map<ClassId, int>& source_leaf_box_counts) {
  const int n = h.num_nodes();
  std::vector<double> count(n, 0.0);
  for (int c = 0; c < n; ++c) {
    if (h.is_leaf(c)) {
      count[c] = 1.0;  // pseudo-count keeps target-only subtrees finite
      auto it = source_leaf_box_counts.find(c);
      if (it != source_leaf_box_counts.end()) {
        if (it->second < 0) throw DataError("negative box count");
        count[c] += it->second;
      }
    }
  }
  // Deepest-first accumulation into parents.
  std::vector<ClassId> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](ClassId a, ClassId b) { return h.depth(a) > h.depth(b); });
  for (ClassId c : order) {
    if (c != kRootId) count[h.parent(c)] += count[c];
  }
  std::vector<double> ic(n, 0.0);
  for (int c = 0; c < n; ++c) {
    ic[c] = -std::log(count[c] / count[kRootId]);
  }
  ic[kRootId] = 0.0;
  return ic;
}

double lin_similarity(const Hierarchy& h, const std::vector<double>& ic,
                      ClassId c1, ClassId c2) {
  if (static_cast<int>(ic.size()) != h.num_nodes()) {
    throw DataError("information-content table size mismatch");
  }
  const double denom = ic[c1] + ic[c2];
  if (denom == 0.0) return 0.0;
  const ClassId lca = h.lowest_common_ancestor(c1, c2);
  return 2.0 * ic[lca] / denom;
}

}  // namespace hiermil
