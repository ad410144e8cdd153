#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "taotree/dataset.hpp"
#include "taotree/error.hpp"

namespace taotree {

using NodeIndex = std::uint32_t;
using FeatureIndex = std::uint32_t;

enum class Side : std::uint8_t { kLeft, kRight };

inline Side opposite(Side s) { return s == Side::kLeft ? Side::kRight : Side::kLeft; }
inline const char* to_string(Side s) { return s == Side::kLeft ? "left" : "right"; }

// Sparse weight vector of fixed dimension. Only entries with |w| > 0 are
// stored and indices are strictly increasing, so nnz() is exact.
class SparseVector {
 public:
  SparseVector() = default;
  explicit SparseVector(std::size_t dim) : dim_(dim) {}

  static SparseVector from_dense(std::span<const double> dense) {
    SparseVector v(dense.size());
    for (std::size_t j = 0; j < dense.size(); ++j) {
      if (!std::isfinite(dense[j])) throw InputError("non-finite weight at index " + std::to_string(j));
      if (dense[j] != 0.0) {
        v.index_.push_back(static_cast<FeatureIndex>(j));
        v.value_.push_back(dense[j]);
      }
    }
    return v;
  }

  // Entries may come in any order; zeros are dropped, duplicates rejected.
  static SparseVector from_pairs(std::size_t dim,
                                 std::vector<std::pair<FeatureIndex, double>> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    SparseVector v(dim);
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto [j, w] = entries[k];
      if (j >= dim) {
        throw InputError("weight index " + std::to_string(j) + " out of range for dimension " +
                         std::to_string(dim));
      }
      if (k > 0 && entries[k - 1].first == j) {
        throw InputError("duplicate weight index " + std::to_string(j));
      }
      if (!std::isfinite(w)) throw InputError("non-finite weight at index " + std::to_string(j));
      if (w != 0.0) {
        v.index_.push_back(j);
        v.value_.push_back(w);
      }
    }
    return v;
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t nnz() const noexcept { return index_.size(); }
  bool all_zero() const noexcept { return index_.empty(); }
  std::span<const FeatureIndex> indices() const noexcept { return index_; }
  std::span<const double> values() const noexcept { return value_; }

  double operator[](std::size_t j) const {
    auto it = std::lower_bound(index_.begin(), index_.end(), static_cast<FeatureIndex>(j));
    if (it == index_.end() || *it != j) return 0.0;
    return value_[static_cast<std::size_t>(it - index_.begin())];
  }

  double dot(std::span<const double> z) const {
    double s = 0.0;
    for (std::size_t k = 0; k < index_.size(); ++k) s += value_[k] * z[index_[k]];
    return s;
  }

  double l1() const {
    double s = 0.0;
    for (double w : value_) s += std::abs(w);
    return s;
  }

  double l2() const {
    double s = 0.0;
    for (double w : value_) s += w * w;
    return std::sqrt(s);
  }

  void scale(double c) {
    for (double& w : value_) w *= c;
  }

  std::vector<double> to_dense() const {
    std::vector<double> out(dim_, 0.0);
    for (std::size_t k = 0; k < index_.size(); ++k) out[index_[k]] = value_[k];
    return out;
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<FeatureIndex> index_;
  std::vector<double> value_;
};

struct DecisionParams {
  SparseVector weights;
  double bias = 0.0;
  friend bool operator==(const DecisionParams&, const DecisionParams&) = default;
};

struct LeafParams {
  Label label = 0;
  friend bool operator==(const LeafParams&, const LeafParams&) = default;
};

using NodeParams = std::variant<DecisionParams, LeafParams>;

struct Node {
  NodeParams params;
  std::optional<NodeIndex> parent;
  std::optional<NodeIndex> left;
  std::optional<NodeIndex> right;
  int depth = 0;

  bool is_leaf() const { return std::holds_alternative<LeafParams>(params); }
  const DecisionParams& decision() const { return std::get<DecisionParams>(params); }
  DecisionParams& decision() { return std::get<DecisionParams>(params); }
  Label label() const { return std::get<LeafParams>(params).label; }
  NodeIndex child(Side s) const { return s == Side::kLeft ? *left : *right; }

  friend bool operator==(const Node&, const Node&) = default;
};

// Binary tree of oblique decision nodes and labeled leaves, stored as an
// indexed node array. Built top-down with set_root/add_child.
class Tree {
 public:
  Tree() = default;
  Tree(std::size_t num_features, int num_classes)
      : num_features_(num_features), num_classes_(num_classes) {}

  static Tree single_leaf(std::size_t num_features, int num_classes, Label label) {
    Tree t(num_features, num_classes);
    t.set_root(LeafParams{label});
    return t;
  }

  NodeIndex set_root(NodeParams params) {
    check_params(params);
    nodes_.clear();
    nodes_.push_back(Node{std::move(params), std::nullopt, std::nullopt, std::nullopt, 0});
    root_ = 0;
    return 0;
  }

  NodeIndex add_child(NodeIndex parent, Side side, NodeParams params) {
    check_params(params);
    if (parent >= nodes_.size() || nodes_[parent].is_leaf()) {
      throw InputError("cannot attach child to node " + std::to_string(parent));
    }
    auto& slot = side == Side::kLeft ? nodes_[parent].left : nodes_[parent].right;
    if (slot) throw InputError("node " + std::to_string(parent) + " already has that child");
    const auto idx = static_cast<NodeIndex>(nodes_.size());
    const int depth = nodes_[parent].depth + 1;
    nodes_.push_back(Node{std::move(params), parent, std::nullopt, std::nullopt, depth});
    (side == Side::kLeft ? nodes_[parent].left : nodes_[parent].right) = idx;
    return idx;
  }

  std::size_t num_features() const noexcept { return num_features_; }
  int num_classes() const noexcept { return num_classes_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  NodeIndex root() const noexcept { return root_; }
  const Node& node(NodeIndex i) const { return nodes_.at(i); }
  Node& node(NodeIndex i) { return nodes_.at(i); }
  std::span<const Node> nodes() const noexcept { return nodes_; }

  int max_depth() const {
    int d = 0;
    for (const auto& n : nodes_) d = std::max(d, n.depth);
    return d;
  }

  // Nodes in breadth-first order from the root (left child before right).
  std::vector<NodeIndex> bfs_order() const {
    std::vector<NodeIndex> order;
    if (nodes_.empty()) return order;
    std::deque<NodeIndex> queue{root_};
    while (!queue.empty()) {
      const NodeIndex i = queue.front();
      queue.pop_front();
      order.push_back(i);
      if (!nodes_[i].is_leaf()) {
        queue.push_back(*nodes_[i].left);
        queue.push_back(*nodes_[i].right);
      }
    }
    return order;
  }

  std::vector<NodeIndex> leaves() const {
    std::vector<NodeIndex> out;
    for (NodeIndex i : bfs_order()) {
      if (nodes_[i].is_leaf()) out.push_back(i);
    }
    return out;
  }

  // Checks the structural invariants; throws InputError on the first violation.
  void validate() const {
    if (nodes_.empty()) throw InputError("tree has no nodes");
    std::vector<int> seen(nodes_.size(), 0);
    std::vector<NodeIndex> stack{root_};
    if (nodes_[root_].parent) throw InputError("root has a parent");
    if (nodes_[root_].depth != 0) throw InputError("root depth is not 0");
    while (!stack.empty()) {
      const NodeIndex i = stack.back();
      stack.pop_back();
      if (seen[i]++) throw InputError("node " + std::to_string(i) + " reached twice (cycle)");
      const Node& n = nodes_[i];
      if (n.is_leaf()) {
        if (n.left || n.right) throw InputError("leaf " + std::to_string(i) + " has children");
        continue;
      }
      if (!n.left || !n.right) {
        throw InputError("decision node " + std::to_string(i) + " lacks two children");
      }
      for (NodeIndex c : {*n.left, *n.right}) {
        if (c >= nodes_.size()) throw InputError("child index out of range");
        if (nodes_[c].parent != i) throw InputError("parent link mismatch at " + std::to_string(c));
        if (nodes_[c].depth != n.depth + 1) {
          throw InputError("depth mismatch at node " + std::to_string(c));
        }
        stack.push_back(c);
      }
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (!seen[i]) throw InputError("node " + std::to_string(i) + " unreachable from root");
    }
  }

  // Copy of the subtree reachable from the root, renumbered in BFS order.
  Tree compacted() const {
    Tree out(num_features_, num_classes_);
    if (nodes_.empty()) return out;
    std::deque<std::pair<NodeIndex, NodeIndex>> queue;  // (old, new)
    queue.emplace_back(root_, out.set_root(nodes_[root_].params));
    while (!queue.empty()) {
      const auto [old_i, new_i] = queue.front();
      queue.pop_front();
      const Node& n = nodes_[old_i];
      if (n.is_leaf()) continue;
      queue.emplace_back(*n.left, out.add_child(new_i, Side::kLeft, nodes_[*n.left].params));
      queue.emplace_back(*n.right, out.add_child(new_i, Side::kRight, nodes_[*n.right].params));
    }
    return out;
  }

  friend bool operator==(const Tree&, const Tree&) = default;

 private:
  void check_params(const NodeParams& params) const {
    if (const auto* d = std::get_if<DecisionParams>(&params)) {
      if (d->weights.dim() != num_features_) {
        throw InputError("decision weights have dimension " + std::to_string(d->weights.dim()) +
                         ", tree expects " + std::to_string(num_features_));
      }
      if (!std::isfinite(d->bias)) throw InputError("non-finite bias");
    } else {
      const Label y = std::get<LeafParams>(params).label;
      if (y < 0 || y >= num_classes_) {
        throw InputError("leaf label " + std::to_string(y) + " outside [0, " +
                         std::to_string(num_classes_) + ")");
      }
    }
  }

  std::size_t num_features_ = 0;
  int num_classes_ = 2;
  NodeIndex root_ = 0;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Routing and prediction

// Side taken at a decision node: w.z + b >= 0 goes right, ties included.
inline Side decide(const DecisionParams& d, std::span<const double> z) {
  return d.weights.dot(z) + d.bias >= 0.0 ? Side::kRight : Side::kLeft;
}

inline void check_dimension(const Tree& tree, std::size_t len) {
  if (len != tree.num_features()) {
    throw InputError("feature vector has length " + std::to_string(len) + ", tree expects " +
                     std::to_string(tree.num_features()));
  }
}

// Leaf reached when routing z from `start` downward. No dimension check.
inline NodeIndex descend(const Tree& tree, NodeIndex start, std::span<const double> z) {
  NodeIndex i = start;
  while (!tree.node(i).is_leaf()) {
    const Node& n = tree.node(i);
    i = n.child(decide(n.decision(), z));
  }
  return i;
}

struct Route {
  NodeIndex leaf = 0;
  std::vector<NodeIndex> path;  // root first, leaf last
};

inline Route route(const Tree& tree, std::span<const double> z) {
  check_dimension(tree, z.size());
  Route r;
  NodeIndex i = tree.root();
  r.path.push_back(i);
  while (!tree.node(i).is_leaf()) {
    const Node& n = tree.node(i);
    i = n.child(decide(n.decision(), z));
    r.path.push_back(i);
  }
  r.leaf = i;
  return r;
}

inline Label predict(const Tree& tree, std::span<const double> z) {
  check_dimension(tree, z.size());
  return tree.node(descend(tree, tree.root(), z)).label();
}

inline std::vector<Label> predict_all(const Tree& tree, const Dataset& data) {
  check_dimension(tree, data.num_features());
  std::vector<Label> out(data.size());
  for (std::size_t n = 0; n < data.size(); ++n) {
    out[n] = tree.node(descend(tree, tree.root(), data.row(n))).label();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Objective: misclassification count plus lambda times the l1 norm of every
// decision node's weight vector (bias not penalized).

struct ObjectiveParts {
  std::size_t errors = 0;
  double l1 = 0.0;

  double value(double lambda) const { return static_cast<double>(errors) + lambda * l1; }
};

inline double weight_l1(const Tree& tree) {
  double s = 0.0;
  for (const auto& n : tree.nodes()) {
    if (!n.is_leaf()) s += n.decision().weights.l1();
  }
  return s;
}

inline std::size_t count_errors(const Tree& tree, const Dataset& data) {
  check_dimension(tree, data.num_features());
  std::size_t errors = 0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    if (tree.node(descend(tree, tree.root(), data.row(n))).label() != data.label(n)) ++errors;
  }
  return errors;
}

inline ObjectiveParts objective_parts(const Tree& tree, const Dataset& data) {
  return {count_errors(tree, data), weight_l1(tree)};
}

inline double objective(const Tree& tree, const Dataset& data, double lambda) {
  if (lambda < 0.0) throw InputError("lambda must be nonnegative");
  return objective_parts(tree, data).value(lambda);
}

// ---------------------------------------------------------------------------
// Statistics

inline std::size_t count_nonzeros(const Tree& tree) {
  std::size_t nnz = 0;
  for (const auto& n : tree.nodes()) {
    if (!n.is_leaf()) nnz += n.decision().weights.nnz();
  }
  return nnz;
}

struct TreeStats {
  int depth = 0;
  std::size_t num_nodes = 0;
  std::size_t num_leaves = 0;
  std::size_t nonzeros = 0;
  std::vector<FeatureIndex> features_used;  // sorted
};

inline std::vector<FeatureIndex> features_used(const Tree& tree) {
  std::vector<char> used(tree.num_features(), 0);
  for (const auto& n : tree.nodes()) {
    if (n.is_leaf()) continue;
    for (FeatureIndex j : n.decision().weights.indices()) used[j] = 1;
  }
  std::vector<FeatureIndex> out;
  for (std::size_t j = 0; j < used.size(); ++j) {
    if (used[j]) out.push_back(static_cast<FeatureIndex>(j));
  }
  return out;
}

inline TreeStats tree_stats(const Tree& tree) {
  TreeStats s;
  s.depth = tree.max_depth();
  s.num_nodes = tree.size();
  for (const auto& n : tree.nodes()) s.num_leaves += n.is_leaf() ? 1 : 0;
  s.nonzeros = count_nonzeros(tree);
  s.features_used = features_used(tree);
  return s;
}

// Scales each decision node to unit-norm weights; routing is unchanged since
// the scale factor is positive.
inline Tree normalize(Tree tree) {
  for (NodeIndex i = 0; i < tree.size(); ++i) {
    Node& n = tree.node(i);
    if (n.is_leaf()) continue;
    auto& d = n.decision();
    const double norm = d.weights.l2();
    if (norm == 0.0) {
      throw InputError("decision node " + std::to_string(i) +
                       " has all-zero weights; prune the tree before normalizing");
    }
    d.weights.scale(1.0 / norm);
    d.bias /= norm;
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Reduced sets: for each node, the training instances whose route passes
// through it. Indexed by node.

struct ReducedSets {
  std::vector<std::vector<std::uint32_t>> members;

  const std::vector<std::uint32_t>& operator[](NodeIndex i) const { return members.at(i); }
  friend bool operator==(const ReducedSets&, const ReducedSets&) = default;
};

// Verifies that, at every depth d, the sets of the nodes at depth d together
// with the sets of the leaves above d cover {0..N-1} exactly once, and that
// the root holds every instance. Returns an empty string on success.
inline std::string check_partition(const Tree& tree, const ReducedSets& sets,
                                   std::size_t num_instances) {
  if (sets.members.size() != tree.size()) return "reduced-set table size mismatch";
  if (sets[tree.root()].size() != num_instances) return "root set does not hold every instance";
  const int depth = tree.max_depth();
  std::vector<int> hits(num_instances);
  for (int d = 0; d <= depth; ++d) {
    std::fill(hits.begin(), hits.end(), 0);
    for (NodeIndex i = 0; i < tree.size(); ++i) {
      const Node& n = tree.node(i);
      if (n.depth == d || (n.is_leaf() && n.depth < d)) {
        for (auto m : sets[i]) {
          if (m >= num_instances) return "instance index out of range";
          ++hits[m];
        }
      }
    }
    for (std::size_t m = 0; m < num_instances; ++m) {
      if (hits[m] != 1) {
        return "instance " + std::to_string(m) + " covered " + std::to_string(hits[m]) +
               " times at depth " + std::to_string(d);
      }
    }
  }
  return {};
}

}  // namespace taotree
