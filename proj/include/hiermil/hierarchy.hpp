#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hiermil/common.hpp"

namespace hiermil {

// Dense node identifier; 0 is always the root.
using ClassId = int;
inline constexpr ClassId kRootId = 0;

enum class NodeRole { internal, source, target };

const char* role_name(NodeRole r);

struct HierarchyNode {
  ClassId id = 0;
  std::string name;
  ClassId parent = -1;  // -1 for the root only
  NodeRole role = NodeRole::internal;
};

// Rooted class tree with source/target leaf designations. Immutable after
// construction; safe for shared concurrent reads.
class Hierarchy {
 public:
  // Builds from node records and validates all structural invariants:
  // single root with id 0, dense ids, acyclic parent links, every leaf
  // designated source or target, designations only on leaves.
  static Hierarchy build(std::vector<HierarchyNode> nodes);

  // Line format: id<TAB>name<TAB>parent|-<TAB>role, role in
  // {internal, source, target}. Errors carry 1-based line numbers.
  static Hierarchy parse(const std::string& text);
  static Hierarchy load_file(const std::filesystem::path& path);

  std::string to_text() const;
  void save_file(const std::filesystem::path& path) const;
  std::string digest() const { return content_digest(to_text()); }

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  const HierarchyNode& node(ClassId c) const;
  std::optional<ClassId> find_by_name(const std::string& name) const;

  ClassId parent(ClassId c) const { return node(c).parent; }
  const std::vector<ClassId>& children(ClassId c) const;
  bool is_leaf(ClassId c) const { return children(c).empty(); }
  int depth(ClassId c) const;  // root has depth 0

  const std::vector<ClassId>& source_leaves() const { return source_leaves_; }
  const std::vector<ClassId>& target_leaves() const { return target_leaves_; }
  bool is_source_leaf(ClassId c) const;
  bool is_target_leaf(ClassId c) const;

  // Proper ancestors of c, parent first, root last. Empty for the root.
  std::vector<ClassId> ancestors(ClassId c) const;

  // Leaf labels plus all their ancestors. Rejects non-leaf input.
  std::set<ClassId> expand_labels(const std::set<ClassId>& leaf_labels) const;

  // Source leaves in the subtree rooted at c (including c itself when it is
  // a source leaf). Sorted by id.
  const std::vector<ClassId>& source_descendants(ClassId c) const;

  // Lowest proper ancestor of target leaf t with at least n source leaves
  // below it. n must be in [1, |source leaves|]; n = |sources| gives root.
  ClassId closest_ancestor_with_min_sources(ClassId t, int n) const;

  // All source leaves under closest_ancestor_with_min_sources(t, 1).
  std::vector<ClassId> closest_sources(ClassId t) const;

  ClassId lowest_common_ancestor(ClassId a, ClassId b) const;

  // Same tree with re-designated leaf roles; used for pseudo source/target
  // splits. Every current leaf must get a role in one of the two sets.
  Hierarchy with_roles(const std::set<ClassId>& sources,
                       const std::set<ClassId>& targets) const;

 private:
  Hierarchy() = default;

  std::vector<HierarchyNode> nodes_;
  std::vector<std::vector<ClassId>> children_;
  std::vector<int> depth_;
  std::vector<std::vector<ClassId>> source_desc_;
  std::vector<ClassId> source_leaves_;
  std::vector<ClassId> target_leaves_;
  std::map<std::string, ClassId> by_name_;
};

// Information content per node from per-source-leaf ground-truth box counts:
// counts accumulate bottom-up with one pseudo-count per leaf so that every
// node (including pure-target subtrees) has finite IC, then
// ic(c) = -log(count(c) / count(root)). ic(root) = 0, non-decreasing
// toward the leaves.
std::vector<double> information_content(
    const Hierarchy& h, const std::map<ClassId, int>& source_leaf_box_counts);

// Lin similarity 2*ic(lca) / (ic(c1)+ic(c2)); 0 when both ICs are zero.
double lin_similarity(const Hierarchy& h, const std::vector<double>& ic,
                      ClassId c1, ClassId c2);

}  // namespace hiermil
