#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "taotree/dataset.hpp"
#include "taotree/tree.hpp"
#include "taotree/trainer.hpp"

namespace taotree {

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Indices of the `count` largest-magnitude weights, largest first.
inline std::vector<std::size_t> top_weights(const SparseVector& w, std::size_t count) {
  std::vector<std::size_t> order(w.nnz());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  const auto val = w.values();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(val[a]) > std::abs(val[b]); });
  order.resize(std::min(order.size(), count));
  return order;
}

}  // namespace detail

// Human-readable per-node listing in BFS order. Leaf training counts are shown
// when `data` is given.
inline std::string dump_tree(const Tree& tree, const Dataset* data = nullptr, std::size_t top = 5) {
  std::ostringstream os;
  const auto stats = tree_stats(tree);
  os << "tree: " << stats.num_nodes << " nodes, " << stats.num_leaves << " leaves, depth " << stats.depth
     << ", " << stats.nonzeros << " nonzero weights, " << stats.features_used.size() << " of "
     << tree.num_features() << " features used\n";
  std::optional<ReducedSets> sets;
  if (data) sets = compute_reduced_sets(tree, *data);
  for (NodeIndex i : tree.bfs_order()) {
    const Node& n = tree.node(i);
    os << std::string(static_cast<std::size_t>(n.depth) * 2, ' ') << "node " << i << " depth " << n.depth;
    if (n.is_leaf()) {
      os << " leaf label " << n.label();
      if (sets) os << " train_count " << (*sets)[i].size();
      os << "\n";
      continue;
    }
    const auto& d = n.decision();
    os << " decision bias " << detail::fmt_double(d.bias) << " nonzeros " << d.weights.nnz() << " left "
       << *n.left << " right " << *n.right << " top [";
    const auto idx = d.weights.indices();
    const auto val = d.weights.values();
    bool first = true;
    for (auto k : detail::top_weights(d.weights, top)) {
      os << (first ? "" : ", ") << idx[k] << ":" << detail::fmt_double(val[k]);
      first = false;
    }
    os << "]\n";
  }
  return os.str();
}

// Graphviz digraph: boxes for decision nodes, ellipses for leaves, edges
// labeled "<0" (left) and ">=0" (right).
inline std::string to_dot(const Tree& tree, std::size_t top = 3) {
  std::ostringstream os;
  os << "digraph tree {\n";
  os << "  node [fontname=\"Helvetica\"];\n";
  for (NodeIndex i : tree.bfs_order()) {
    const Node& n = tree.node(i);
    os << "  n" << i << " [";
    if (n.is_leaf()) {
      os << "shape=ellipse, label=\"class " << n.label() << "\"";
    } else {
      const auto& d = n.decision();
      os << "shape=box, label=\"node " << i << "\\n" << d.weights.nnz() << " weights";
      const auto idx = d.weights.indices();
      const auto val = d.weights.values();
      for (auto k : detail::top_weights(d.weights, top)) {
        os << "\\nx" << idx[k] << ": " << detail::fmt_double(val[k]);
      }
      os << "\\nb: " << detail::fmt_double(d.bias) << "\"";
    }
    os << "];\n";
  }
  for (NodeIndex i : tree.bfs_order()) {
    const Node& n = tree.node(i);
    if (n.is_leaf()) continue;
    os << "  n" << i << " -> n" << *n.left << " [label=\"<0\"];\n";
    os << "  n" << i << " -> n" << *n.right << " [label=\">=0\"];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace taotree
