#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "taotree/error.hpp"
#include "taotree/tree.hpp"

namespace taotree {

// Multiplicative mask entry. kWild means "any value": the feature has zero
// weight at every node the mask was built from.
enum class Ternary : std::uint8_t { kZero, kOne, kWild };

inline char to_char(Ternary t) { return t == Ternary::kZero ? '0' : (t == Ternary::kOne ? '1' : '*'); }

struct MaskProvenance {
  NodeIndex node = 0;
  Side child = Side::kLeft;
  friend bool operator==(const MaskProvenance&, const MaskProvenance&) = default;
};

enum class RecipeKind : std::uint8_t {
  kNone,  // plain node mask or ad-hoc combination
  kAllToClass,
  kNoneToClass,
  kClassToClass,
  kExcludeSubtree,
  kFeaturesSelected,
};

inline const char* to_string(RecipeKind k) {
  switch (k) {
    case RecipeKind::kAllToClass: return "all_to";
    case RecipeKind::kNoneToClass: return "none_to";
    case RecipeKind::kClassToClass: return "class_to_class";
    case RecipeKind::kExcludeSubtree: return "exclude_subtree";
    case RecipeKind::kFeaturesSelected: return "features_selected";
    case RecipeKind::kNone: break;
  }
  return "none";
}

// What a composite mask promises on the tree it was built from.
struct MaskRecipe {
  RecipeKind kind = RecipeKind::kNone;
  Label target = 0;                       // k for all_to / none_to, k2 for class_to_class
  Label source = 0;                       // k1 for class_to_class
  std::optional<NodeIndex> source_leaf;   // the k1 leaf that is redirected
  std::vector<MaskProvenance> cuts;       // exclude_subtree: (node, cut child)
  friend bool operator==(const MaskRecipe&, const MaskRecipe&) = default;
};

struct MaskDiagnostics {
  std::vector<FeatureIndex> conflicts;  // ONE in one operand, ZERO in the other
  std::vector<std::string> notes;
  std::optional<NodeIndex> chosen_leaf;
  friend bool operator==(const MaskDiagnostics&, const MaskDiagnostics&) = default;
};

// Feature-space mask zbar = mult (.) z + add with ternary `mult`.
// add[j] > 0 only where mult[j] == kOne.
struct Mask {
  std::vector<Ternary> mult;
  std::vector<double> add;
  std::vector<MaskProvenance> provenance;
  MaskRecipe recipe;
  MaskDiagnostics diagnostics;

  static Mask all_wild(std::size_t num_features) {
    Mask m;
    m.mult.assign(num_features, Ternary::kWild);
    m.add.assign(num_features, 0.0);
    return m;
  }

  std::size_t size() const noexcept { return mult.size(); }

  std::size_t count(Ternary t) const {
    return static_cast<std::size_t>(std::count(mult.begin(), mult.end(), t));
  }

  std::vector<FeatureIndex> ones() const {
    std::vector<FeatureIndex> out;
    for (std::size_t j = 0; j < mult.size(); ++j) {
      if (mult[j] == Ternary::kOne) out.push_back(static_cast<FeatureIndex>(j));
    }
    return out;
  }

  void validate() const {
    if (add.size() != mult.size()) throw InputError("mask: mult and add lengths differ");
    for (std::size_t j = 0; j < add.size(); ++j) {
      if (!(add[j] >= 0.0) || !std::isfinite(add[j])) {
        throw InputError("mask: additive entry " + std::to_string(j) + " is not a finite nonnegative value");
      }
      if (add[j] > 0.0 && mult[j] != Ternary::kOne) {
        throw InputError("mask: additive entry " + std::to_string(j) + " set on a non-kept feature");
      }
    }
  }
};

struct SignPartition {
  std::vector<FeatureIndex> zero, negative, positive;
};

inline SignPartition sign_partition(const SparseVector& w) {
  SignPartition p;
  std::size_t k = 0;
  const auto idx = w.indices();
  const auto val = w.values();
  for (std::size_t j = 0; j < w.dim(); ++j) {
    if (k < idx.size() && idx[k] == j) {
      (val[k] < 0.0 ? p.negative : p.positive).push_back(static_cast<FeatureIndex>(j));
      ++k;
    } else {
      p.zero.push_back(static_cast<FeatureIndex>(j));
    }
  }
  return p;
}

inline constexpr double kDefaultBiasTol = 1e-6;

// Mask that sends every nonnegative vector to `child` at `node`: keeps the
// features whose weights have the sign of that side, zeroes the opposite sign,
// leaves zero-weight features wild and pushes kept features up by epsilon.
inline Mask node_mask(const Tree& tree, NodeIndex node, Side child, double epsilon,
                      double bias_tol = kDefaultBiasTol) {
  if (!(epsilon > 0.0)) throw InputError("mask epsilon must be > 0");
  const Node& n = tree.node(node);
  if (n.is_leaf()) throw InputError("node " + std::to_string(node) + " is a leaf, not a decision node");
  const auto& d = n.decision();
  const double norm = d.weights.l2();
  if (std::abs(d.bias) > bias_tol * norm) {
    throw InfeasibleMaskError("node " + std::to_string(node) + " violates the zero-bias assumption: |b|/||w|| = " +
                              (norm > 0.0 ? std::to_string(std::abs(d.bias) / norm) : std::string("inf")));
  }
  const auto parts = sign_partition(d.weights);
  const auto& keep = child == Side::kLeft ? parts.negative : parts.positive;
  const auto& drop = child == Side::kLeft ? parts.positive : parts.negative;
  if (keep.empty()) {
    throw InfeasibleMaskError("node " + std::to_string(node) + " has no " +
                              (child == Side::kLeft ? "negative" : "positive") +
                              " weights; cannot divert to the " + to_string(child) + " child");
  }
  Mask m = Mask::all_wild(tree.num_features());
  for (auto j : keep) {
    m.mult[j] = Ternary::kOne;
    m.add[j] = epsilon;
  }
  for (auto j : drop) m.mult[j] = Ternary::kZero;
  m.provenance.push_back({node, child});
  return m;
}

// Elementwise: ZERO dominates, then ONE, WILD is the identity. The additive
// part is dropped; recompute it with finalize_additive.
inline Mask extended_and(const Mask& a, const Mask& b) {
  if (a.size() != b.size()) throw InputError("extended_and: masks have different lengths");
  Mask out = Mask::all_wild(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    const Ternary x = a.mult[j], y = b.mult[j];
    if (x == Ternary::kZero || y == Ternary::kZero) {
      out.mult[j] = Ternary::kZero;
      if (x == Ternary::kOne || y == Ternary::kOne) out.diagnostics.conflicts.push_back(static_cast<FeatureIndex>(j));
    } else if (x == Ternary::kOne || y == Ternary::kOne) {
      out.mult[j] = Ternary::kOne;
    }
  }
  out.provenance = a.provenance;
  out.provenance.insert(out.provenance.end(), b.provenance.begin(), b.provenance.end());
  for (const auto* src : {&a.diagnostics, &b.diagnostics}) {
    out.diagnostics.conflicts.insert(out.diagnostics.conflicts.end(), src->conflicts.begin(), src->conflicts.end());
    out.diagnostics.notes.insert(out.diagnostics.notes.end(), src->notes.begin(), src->notes.end());
  }
  std::sort(out.diagnostics.conflicts.begin(), out.diagnostics.conflicts.end());
  out.diagnostics.conflicts.erase(
      std::unique(out.diagnostics.conflicts.begin(), out.diagnostics.conflicts.end()),
      out.diagnostics.conflicts.end());
  return out;
}

inline void finalize_additive(Mask& m, double epsilon) {
  if (!(epsilon > 0.0)) throw InputError("mask epsilon must be > 0");
  for (std::size_t j = 0; j < m.size(); ++j) m.add[j] = m.mult[j] == Ternary::kOne ? epsilon : 0.0;
}

// Nodes in the provenance whose diversion no longer holds: every kept-sign
// feature was zeroed by a conflict.
inline std::vector<MaskProvenance> broken_diversions(const Tree& tree, const Mask& m) {
  std::vector<MaskProvenance> broken;
  for (const auto& p : m.provenance) {
    const auto& w = tree.node(p.node).decision().weights;
    const auto idx = w.indices();
    const auto val = w.values();
    bool ok = false;
    for (std::size_t k = 0; k < idx.size() && !ok; ++k) {
      const bool wanted = p.child == Side::kLeft ? val[k] < 0.0 : val[k] > 0.0;
      ok = wanted && m.mult[idx[k]] == Ternary::kOne;
    }
    if (!ok) broken.push_back(p);
  }
  return broken;
}

namespace detail {

inline std::string describe(const std::vector<MaskProvenance>& ps) {
  std::string s;
  for (const auto& p : ps) {
    if (!s.empty()) s += ", ";
    s += "node " + std::to_string(p.node) + " -> " + to_string(p.child);
  }
  return s;
}

inline Mask and_all(std::size_t num_features, const std::vector<Mask>& parts) {
  Mask acc = Mask::all_wild(num_features);
  for (const auto& m : parts) acc = extended_and(acc, m);
  return acc;
}

inline void require_feasible(const Tree& tree, const Mask& m) {
  const auto broken = broken_diversions(tree, m);
  if (!broken.empty()) {
    throw InfeasibleMaskError("mask conflicts remove every kept feature at: " + describe(broken));
  }
}

inline std::vector<NodeIndex> leaves_of(const Tree& tree, Label k) {
  std::vector<NodeIndex> out;
  for (NodeIndex i : tree.leaves()) {
    if (tree.node(i).label() == k) out.push_back(i);
  }
  return out;
}

inline void check_class(const Tree& tree, Label k) {
  if (k < 0 || k >= tree.num_classes()) {
    throw InputError("class " + std::to_string(k) + " outside [0, " + std::to_string(tree.num_classes()) + ")");
  }
}

inline Side side_of(const Tree& tree, NodeIndex child) {
  const Node& p = tree.node(*tree.node(child).parent);
  return *p.left == child ? Side::kLeft : Side::kRight;
}

}  // namespace detail

// Extended-AND of several masks with the additive part recomputed; throws if a
// conflict destroys any diversion.
inline Mask combine_masks(const Tree& tree, const std::vector<Mask>& parts, double epsilon) {
  Mask m = detail::and_all(tree.num_features(), parts);
  finalize_additive(m, epsilon);
  detail::require_feasible(tree, m);
  return m;
}

// Forces every nonnegative input to a leaf of class k. With several leaves of
// class k, uses the feasible root-to-leaf path with the fewest conflicts.
inline Mask mask_all_to_class(const Tree& tree, Label k, double epsilon,
                              double bias_tol = kDefaultBiasTol) {
  detail::check_class(tree, k);
  const auto leaves = detail::leaves_of(tree, k);
  if (leaves.empty()) throw InfeasibleMaskError("class " + std::to_string(k) + " has no leaf in the tree");
  std::optional<Mask> best;
  std::string reasons;
  for (NodeIndex leaf : leaves) {
    std::vector<Mask> parts;
    try {
      NodeIndex child = leaf;
      while (tree.node(child).parent) {
        const NodeIndex p = *tree.node(child).parent;
        parts.push_back(node_mask(tree, p, detail::side_of(tree, child), epsilon, bias_tol));
        child = p;
      }
    } catch (const InfeasibleMaskError& e) {
      reasons += "\n  leaf " + std::to_string(leaf) + ": " + e.what();
      continue;
    }
    std::reverse(parts.begin(), parts.end());
    Mask m = detail::and_all(tree.num_features(), parts);
    const auto broken = broken_diversions(tree, m);
    if (!broken.empty()) {
      reasons += "\n  leaf " + std::to_string(leaf) + ": conflicts break " + detail::describe(broken);
      continue;
    }
    m.diagnostics.chosen_leaf = leaf;
    if (!best || m.diagnostics.conflicts.size() < best->diagnostics.conflicts.size()) best = std::move(m);
  }
  if (!best) throw InfeasibleMaskError("no feasible path to a leaf of class " + std::to_string(k) + ":" + reasons);
  if (leaves.size() > 1) {
    best->diagnostics.notes.push_back("class has " + std::to_string(leaves.size()) + " leaves; using leaf " +
                                      std::to_string(*best->diagnostics.chosen_leaf));
  }
  finalize_additive(*best, epsilon);
  best->recipe = MaskRecipe{RecipeKind::kAllToClass, k, 0, std::nullopt, {}};
  return *best;
}

// Diverts, at the parent of every leaf of class k, away from that leaf.
inline Mask mask_none_to_class(const Tree& tree, Label k, double epsilon,
                               double bias_tol = kDefaultBiasTol) {
  detail::check_class(tree, k);
  const auto leaves = detail::leaves_of(tree, k);
  Mask m = Mask::all_wild(tree.num_features());
  if (leaves.empty()) {
    m.diagnostics.notes.push_back("class " + std::to_string(k) + " has no leaf; mask is the identity");
  } else {
    if (!tree.node(leaves.front()).parent) {
      throw InfeasibleMaskError("the tree is a single leaf of class " + std::to_string(k));
    }
    std::vector<Mask> parts;
    std::vector<NodeIndex> parents;
    for (NodeIndex leaf : leaves) {
      const NodeIndex p = *tree.node(leaf).parent;
      if (std::find(parents.begin(), parents.end(), p) != parents.end()) {
        throw InfeasibleMaskError("both children of node " + std::to_string(p) + " are leaves of class " +
                                  std::to_string(k));
      }
      parents.push_back(p);
      parts.push_back(node_mask(tree, p, opposite(detail::side_of(tree, leaf)), epsilon, bias_tol));
    }
    m = combine_masks(tree, parts, epsilon);
  }
  m.recipe = MaskRecipe{RecipeKind::kNoneToClass, k, 0, std::nullopt, {}};
  return m;
}

// Redirects the k1 leaf to its sibling leaf of class k2.
inline Mask mask_class_to_class(const Tree& tree, Label k1, Label k2, double epsilon,
                                double bias_tol = kDefaultBiasTol) {
  detail::check_class(tree, k1);
  detail::check_class(tree, k2);
  if (k1 == k2) throw InputError("class_to_class needs two different classes");
  const auto from = detail::leaves_of(tree, k1);
  const auto to = detail::leaves_of(tree, k2);
  for (NodeIndex leaf : from) {
    const auto& parent = tree.node(leaf).parent;
    if (!parent) continue;
    const Side s = detail::side_of(tree, leaf);
    const NodeIndex sibling = tree.node(*parent).child(opposite(s));
    if (!tree.node(sibling).is_leaf() || tree.node(sibling).label() != k2) continue;
    Mask m = node_mask(tree, *parent, opposite(s), epsilon, bias_tol);
    m.recipe = MaskRecipe{RecipeKind::kClassToClass, k2, k1, leaf, {}};
    m.diagnostics.chosen_leaf = leaf;
    if (from.size() > 1) {
      m.diagnostics.notes.push_back("class " + std::to_string(k1) + " has " + std::to_string(from.size()) +
                                    " leaves; only leaf " + std::to_string(leaf) + " is redirected");
    }
    return m;
  }
  auto parents_of = [&](const std::vector<NodeIndex>& ls) {
    std::string s;
    for (NodeIndex l : ls) {
      if (!s.empty()) s += ",";
      s += tree.node(l).parent ? std::to_string(*tree.node(l).parent) : std::string("root");
    }
    return s.empty() ? std::string("none") : s;
  };
  throw InfeasibleMaskError("classes " + std::to_string(k1) + " and " + std::to_string(k2) +
                            " are not leaf siblings (parents of " + std::to_string(k1) + " leaves: " +
                            parents_of(from) + "; of " + std::to_string(k2) + " leaves: " + parents_of(to) + ")");
}

// Cuts the given child subtrees by diverting each node to its other child.
inline Mask mask_exclude_subtrees(const Tree& tree, const std::vector<MaskProvenance>& cuts, double epsilon,
                                  double bias_tol = kDefaultBiasTol) {
  if (cuts.empty()) throw InputError("exclude_subtree needs at least one cut");
  std::vector<Mask> parts;
  for (const auto& c : cuts) parts.push_back(node_mask(tree, c.node, opposite(c.child), epsilon, bias_tol));
  Mask m = combine_masks(tree, parts, epsilon);
  m.recipe = MaskRecipe{RecipeKind::kExcludeSubtree, 0, 0, std::nullopt, cuts};
  return m;
}

inline Mask mask_exclude_subtree(const Tree& tree, NodeIndex node, Side cut_child, double epsilon,
                                 double bias_tol = kDefaultBiasTol) {
  return mask_exclude_subtrees(tree, {{node, cut_child}}, epsilon, bias_tol);
}

// Keeps exactly the features some decision node uses; zero elsewhere.
inline Mask features_selected_mask(const Tree& tree) {
  Mask m = Mask::all_wild(tree.num_features());
  std::fill(m.mult.begin(), m.mult.end(), Ternary::kZero);
  for (auto j : features_used(tree)) m.mult[j] = Ternary::kOne;
  m.recipe.kind = RecipeKind::kFeaturesSelected;
  return m;
}

// ---------------------------------------------------------------------------
// Application

struct MaskedFeatures {
  std::vector<double> values;
  bool negative_input = false;  // nonnegativity assumed by the guarantees was violated
};

inline MaskedFeatures apply_mask(const Mask& m, std::span<const double> z) {
  if (z.size() != m.size()) {
    throw InputError("mask length " + std::to_string(m.size()) + " does not match feature length " +
                     std::to_string(z.size()));
  }
  MaskedFeatures out;
  out.values.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (z[j] < 0.0) out.negative_input = true;
    switch (m.mult[j]) {
      case Ternary::kZero: out.values[j] = 0.0; break;
      case Ternary::kOne: out.values[j] = z[j] + m.add[j]; break;
      case Ternary::kWild: out.values[j] = z[j]; break;
    }
  }
  return out;
}

// Real-valued mask; what randomization produces.
struct ConcreteMask {
  std::vector<double> mult;
  std::vector<double> add;
  friend bool operator==(const ConcreteMask&, const ConcreteMask&) = default;
};

inline ConcreteMask to_concrete(const Mask& m) {
  ConcreteMask c;
  c.mult.resize(m.size());
  c.add = m.add;
  for (std::size_t j = 0; j < m.size(); ++j) c.mult[j] = m.mult[j] == Ternary::kZero ? 0.0 : 1.0;
  return c;
}

inline MaskedFeatures apply_mask(const ConcreteMask& m, std::span<const double> z) {
  if (z.size() != m.mult.size()) throw InputError("mask length does not match feature length");
  MaskedFeatures out;
  out.values.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (z[j] < 0.0) out.negative_input = true;
    out.values[j] = m.mult[j] * z[j] + m.add[j];
  }
  return out;
}

// Features that decide how instances reach the masked nodes: used by a
// provenance node or any of its ancestors.
inline std::vector<char> routing_features(const Tree& tree, const Mask& m) {
  std::vector<char> used(tree.num_features(), 0);
  for (const auto& p : m.provenance) {
    std::optional<NodeIndex> i = p.node;
    while (i) {
      const Node& n = tree.node(*i);
      if (!n.is_leaf()) {
        for (auto j : n.decision().weights.indices()) used[j] = 1;
      }
      i = n.parent;
    }
  }
  if (m.recipe.source_leaf) {
    std::optional<NodeIndex> i = tree.node(*m.recipe.source_leaf).parent;
    while (i) {
      for (auto j : tree.node(*i).decision().weights.indices()) used[j] = 1;
      i = tree.node(*i).parent;
    }
  }
  return used;
}

// Per-instance disguise: each eligible position is perturbed with probability
// `fraction`. Wild positions outside the routing features get an arbitrary
// real multiplier; kept positions get a random positive push in
// [epsilon/2, 3 epsilon/2] where epsilon is the mask's own push (or
// `default_push` if it has none). Zeroed positions stay exactly 0.
inline ConcreteMask randomize_mask(const Mask& m, const Tree& tree, std::uint64_t seed, double fraction,
                                   double default_push = 1e-3) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InputError("randomize fraction must be in [0, 1]");
  if (m.size() != tree.num_features()) throw InputError("mask and tree dimensions differ");
  ConcreteMask c = to_concrete(m);
  if (fraction == 0.0) return c;
  const auto pinned = routing_features(tree, m);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> any(-1.0, 2.0);
  std::uniform_real_distribution<double> push(0.5, 1.5);
  for (std::size_t j = 0; j < m.size(); ++j) {
    const double u = coin(rng);
    const double v = any(rng);
    const double p = push(rng);
    if (u >= fraction) continue;
    if (m.mult[j] == Ternary::kWild && !pinned[j]) {
      c.mult[j] = v;
    } else if (m.mult[j] == Ternary::kOne) {
      const double eps = m.add[j] > 0.0 ? m.add[j] : default_push;
      c.add[j] = eps * p;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Verification on the tree

struct MaskCheck {
  std::size_t checked = 0;
  std::size_t applicable = 0;  // instances the guarantee speaks about
  std::size_t failures = 0;
  bool ok() const { return failures == 0; }
};

// Checks one original/masked pair against the recipe's guarantee.
inline bool satisfies_recipe(const Tree& tree, const MaskRecipe& r, std::span<const double> z,
                             std::span<const double> zbar, bool* applicable = nullptr) {
  if (applicable) *applicable = true;
  switch (r.kind) {
    case RecipeKind::kAllToClass: return predict(tree, zbar) == r.target;
    case RecipeKind::kNoneToClass: return predict(tree, zbar) != r.target;
    case RecipeKind::kClassToClass: {
      if (descend(tree, tree.root(), z) != *r.source_leaf) {
        if (applicable) *applicable = false;
        return true;
      }
      return predict(tree, zbar) == r.target;
    }
    case RecipeKind::kExcludeSubtree: {
      const auto path = route(tree, zbar).path;
      for (const auto& cut : r.cuts) {
        const NodeIndex removed = tree.node(cut.node).child(cut.child);
        if (std::find(path.begin(), path.end(), removed) != path.end()) return false;
      }
      return true;
    }
    case RecipeKind::kFeaturesSelected: return predict(tree, zbar) == predict(tree, z);
    case RecipeKind::kNone: break;
  }
  if (applicable) *applicable = false;
  return true;
}

template <typename AnyMask>
MaskCheck verify_mask(const Tree& tree, const MaskRecipe& recipe, const AnyMask& mask,
                      const std::vector<std::vector<double>>& inputs) {
  MaskCheck c;
  for (const auto& z : inputs) {
    const auto zbar = apply_mask(mask, z);
    bool applicable = true;
    const bool ok = satisfies_recipe(tree, recipe, z, zbar.values, &applicable);
    ++c.checked;
    c.applicable += applicable ? 1 : 0;
    c.failures += ok ? 0 : 1;
  }
  return c;
}

// Random nonnegative vectors resembling post-ReLU activations (about half the
// entries exactly 0), with the all-zero vector first.
inline std::vector<std::vector<double>> random_nonneg_vectors(std::size_t num_features, std::size_t count,
                                                              std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> out;
  if (count == 0) return out;
  out.emplace_back(num_features, 0.0);
  while (out.size() < count) {
    std::vector<double> z(num_features);
    for (double& v : z) {
      const double a = u(rng);
      const double b = u(rng);
      v = a < 0.5 ? 0.0 : scale * b;
    }
    out.push_back(std::move(z));
  }
  return out;
}

}  // namespace taotree
