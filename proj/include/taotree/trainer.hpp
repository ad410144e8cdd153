#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "taotree/dataset.hpp"
#include "taotree/error.hpp"
#include "taotree/solver.hpp"
#include "taotree/tree.hpp"

namespace taotree {

struct TrainConfig {
  double lambda = 0.0;
  int max_iters = 40;
  double tol = 0.0;  // stop once an iteration decreases the objective by < tol (0: run to a fixed point)
  int initial_depth = 4;
  std::uint64_t seed = 0;
  bool force_zero_bias = false;
  double init_bias_scale = 0.0;  // stddev of the initial biases when they are free
  bool normalize = false;
  int threads = 1;
  SolverConfig solver;

  void validate() const {
    if (!(lambda >= 0.0)) throw InputError("lambda must be >= 0");
    if (max_iters < 1) throw InputError("max_iters must be >= 1");
    if (!(tol >= 0.0)) throw InputError("tol must be >= 0");
    if (initial_depth < 1) throw InputError("initial_depth must be >= 1");
    if (initial_depth > 20) throw InputError("initial_depth above 20 is not supported");
    if (!(init_bias_scale >= 0.0)) throw InputError("init_bias_scale must be >= 0");
    if (threads < 1) throw InputError("threads must be >= 1");
    solver.validate();
  }
};

// ---------------------------------------------------------------------------
// Reduced sets

inline ReducedSets compute_reduced_sets(const Tree& tree, const Dataset& data) {
  check_dimension(tree, data.num_features());
  ReducedSets sets;
  sets.members.resize(tree.size());
  for (std::size_t n = 0; n < data.size(); ++n) {
    const auto z = data.row(n);
    NodeIndex i = tree.root();
    sets.members[i].push_back(static_cast<std::uint32_t>(n));
    while (!tree.node(i).is_leaf()) {
      const Node& nd = tree.node(i);
      i = nd.child(decide(nd.decision(), z));
      sets.members[i].push_back(static_cast<std::uint32_t>(n));
    }
  }
  return sets;
}

// Recomputes the sets strictly below `top` from the set of `top` itself.
inline void redistribute_below(const Tree& tree, const Dataset& data, NodeIndex top,
                               ReducedSets& sets) {
  std::vector<NodeIndex> stack;
  if (!tree.node(top).is_leaf()) {
    stack.push_back(*tree.node(top).left);
    stack.push_back(*tree.node(top).right);
  }
  while (!stack.empty()) {
    const NodeIndex i = stack.back();
    stack.pop_back();
    sets.members[i].clear();
    if (!tree.node(i).is_leaf()) {
      stack.push_back(*tree.node(i).left);
      stack.push_back(*tree.node(i).right);
    }
  }
  for (auto n : sets.members[top]) {
    const auto z = data.row(n);
    NodeIndex i = top;
    while (!tree.node(i).is_leaf()) {
      const Node& nd = tree.node(i);
      i = nd.child(decide(nd.decision(), z));
      sets.members[i].push_back(n);
    }
  }
}

// ---------------------------------------------------------------------------
// Pseudolabels

enum class Pseudolabel : std::uint8_t { kLeft, kRight, kDontCare };

struct PseudolabelEntry {
  std::uint32_t instance = 0;
  Pseudolabel label = Pseudolabel::kDontCare;
  std::uint8_t loss_left = 0;
  std::uint8_t loss_right = 0;
};

using PseudolabelSet = std::vector<PseudolabelEntry>;

// For each instance in the node's reduced set, the 0/1 loss of sending it
// down either child with everything else held fixed.
inline PseudolabelSet make_pseudolabels(const Tree& tree, NodeIndex node, const Dataset& data,
                                        const ReducedSets& reduced) {
  const Node& nd = tree.node(node);
  if (nd.is_leaf()) throw InputError("pseudolabels requested for leaf " + std::to_string(node));
  PseudolabelSet out;
  out.reserve(reduced[node].size());
  for (auto n : reduced[node]) {
    const auto z = data.row(n);
    const Label y = data.label(n);
    PseudolabelEntry e;
    e.instance = n;
    e.loss_left = tree.node(descend(tree, *nd.left, z)).label() != y ? 1 : 0;
    e.loss_right = tree.node(descend(tree, *nd.right, z)).label() != y ? 1 : 0;
    e.label = e.loss_left < e.loss_right   ? Pseudolabel::kLeft
              : e.loss_right < e.loss_left ? Pseudolabel::kRight
                                           : Pseudolabel::kDontCare;
    out.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Node updates

struct NodeUpdate {
  NodeIndex node = 0;
  bool accepted = false;
  bool skipped = false;  // empty care set
  std::size_t care_size = 0;
  long long delta_errors = 0;  // change in misclassifications over the reduced set
  double old_l1 = 0.0;
  double new_l1 = 0.0;
  SolverDiagnostics solver;
  DecisionParams proposal;
};

namespace detail {

// Accepts a proposal only if count + lambda * l1 does not increase. Proposals
// whose net change is a rounding-level tie are accepted only when neither the
// error count nor the l1 norm grows, so the recomputed global objective is
// nonincreasing in floating point too.
inline bool accept_update(long long delta_errors, double old_l1, double new_l1, double lambda) {
  if (lambda == 0.0) return delta_errors <= 0;
  if (delta_errors <= 0 && new_l1 <= old_l1) return true;
  const double delta = static_cast<double>(delta_errors) + lambda * (new_l1 - old_l1);
  const double scale = 1.0 + lambda * std::max(old_l1, new_l1);
  return delta < -1e-9 * scale;
}

}  // namespace detail

// Fits the surrogate on the node's care set and decides acceptance without
// modifying the tree.
inline NodeUpdate propose_decision_update(const Tree& tree, NodeIndex node, const Dataset& data,
                                          const ReducedSets& reduced, double lambda,
                                          const TrainConfig& config) {
  NodeUpdate u;
  u.node = node;
  const auto& current = tree.node(node).decision();
  u.old_l1 = current.weights.l1();
  u.proposal = current;

  const auto labels = make_pseudolabels(tree, node, data, reduced);
  const std::size_t F = data.num_features();
  std::vector<double> rows;
  std::vector<Side> sides;
  for (const auto& e : labels) {
    if (e.label == Pseudolabel::kDontCare) continue;
    const auto z = data.row(e.instance);
    rows.insert(rows.end(), z.begin(), z.end());
    sides.push_back(e.label == Pseudolabel::kRight ? Side::kRight : Side::kLeft);
  }
  u.care_size = sides.size();
  if (sides.empty()) {
    u.skipped = true;
    u.new_l1 = u.old_l1;
    return u;
  }

  BinaryProblem problem;
  problem.features = rows;
  problem.num_features = F;
  problem.labels = std::move(sides);
  problem.lambda = lambda;
  problem.fit_bias = !config.force_zero_bias;
  std::optional<DecisionParams> init = current;
  if (config.force_zero_bias) init->bias = 0.0;
  const auto sol = fit_l1_logistic(problem, config.solver, init);
  u.solver = sol.diagnostics;
  u.proposal = DecisionParams{sol.weights, config.force_zero_bias ? 0.0 : sol.bias};
  u.new_l1 = u.proposal.weights.l1();

  long long delta = 0;
  for (const auto& e : labels) {
    const auto z = data.row(e.instance);
    const Side before = decide(current, z);
    const Side after = decide(u.proposal, z);
    if (before == after) continue;
    const int loss_before = before == Side::kLeft ? e.loss_left : e.loss_right;
    const int loss_after = after == Side::kLeft ? e.loss_left : e.loss_right;
    delta += loss_after - loss_before;
  }
  u.delta_errors = delta;
  u.accepted = detail::accept_update(delta, u.old_l1, u.new_l1, lambda);
  return u;
}

inline void apply_update(Tree& tree, const NodeUpdate& u) {
  if (u.accepted) tree.node(u.node).decision() = u.proposal;
}

// Updates one decision node in place; the global objective never increases.
inline NodeUpdate update_decision_node(Tree& tree, NodeIndex node, const Dataset& data,
                                       const ReducedSets& reduced, double lambda,
                                       const TrainConfig& config) {
  if (tree.node(node).is_leaf()) throw InputError("node " + std::to_string(node) + " is a leaf");
  auto u = propose_decision_update(tree, node, data, reduced, lambda, config);
  apply_update(tree, u);
  return u;
}

// Sets the leaf to the majority class of its reduced set (ties to the
// smallest class). Returns true if the label changed.
inline bool update_leaf(Tree& tree, NodeIndex leaf, const Dataset& data, const ReducedSets& reduced) {
  Node& nd = tree.node(leaf);
  if (!nd.is_leaf()) throw InputError("node " + std::to_string(leaf) + " is not a leaf");
  const auto& members = reduced[leaf];
  if (members.empty()) return false;
  std::vector<std::size_t> counts(static_cast<std::size_t>(tree.num_classes()), 0);
  for (auto n : members) ++counts[static_cast<std::size_t>(data.label(n))];
  const auto best = static_cast<Label>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  const bool changed = best != nd.label();
  std::get<LeafParams>(nd.params).label = best;
  return changed;
}

// ---------------------------------------------------------------------------
// Iteration

struct TrainHooks {
  // After each node update is applied (leaves and decision nodes).
  std::function<void(const Tree&, NodeIndex)> on_node_update;
  // After every (re)computation of reduced sets.
  std::function<void(const Tree&, const ReducedSets&)> on_reduced_sets;
  // After each full iteration with the objective value.
  std::function<void(int, const Tree&, double)> on_iteration;
  // Line-delimited progress records when non-null.
  std::ostream* progress = nullptr;
};

struct IterationResult {
  double objective = 0.0;
  ReducedSets reduced;  // maintained incrementally through the iteration
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  bool changed = false;  // any parameter or label differs from the start of the pass
};

namespace detail {

template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t k = w; k < count; k += workers) fn(k);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

// One pass over all nodes in reverse BFS order: depths from deepest to root,
// nodes within a depth in ascending index. Same-depth nodes have disjoint
// reduced sets and are fitted concurrently when config.threads > 1.
inline IterationResult tao_iteration(Tree& tree, const Dataset& data, double lambda,
                                     const TrainConfig& config, const TrainHooks& hooks = {}) {
  IterationResult res;
  res.reduced = compute_reduced_sets(tree, data);
  if (hooks.on_reduced_sets) hooks.on_reduced_sets(tree, res.reduced);

  std::vector<std::vector<NodeIndex>> by_depth(static_cast<std::size_t>(tree.max_depth()) + 1);
  for (NodeIndex i = 0; i < tree.size(); ++i) by_depth[tree.node(i).depth].push_back(i);

  for (int d = static_cast<int>(by_depth.size()) - 1; d >= 0; --d) {
    const auto& level = by_depth[static_cast<std::size_t>(d)];
    std::vector<NodeIndex> decisions;
    for (NodeIndex i : level) {
      if (tree.node(i).is_leaf()) {
        res.changed |= update_leaf(tree, i, data, res.reduced);
        if (hooks.on_node_update) hooks.on_node_update(tree, i);
      } else {
        decisions.push_back(i);
      }
    }
    std::vector<NodeUpdate> updates(decisions.size());
    detail::parallel_for(decisions.size(), config.threads, [&](std::size_t k) {
      updates[k] = propose_decision_update(tree, decisions[k], data, res.reduced, lambda, config);
    });
    for (const auto& u : updates) {
      if (u.accepted && !(u.proposal == tree.node(u.node).decision())) res.changed = true;
      apply_update(tree, u);
      (u.accepted ? res.accepted : res.rejected) += 1;
      if (hooks.on_node_update) hooks.on_node_update(tree, u.node);
    }
    // Barrier: refresh the sets below the nodes just changed.
    for (NodeIndex i : decisions) redistribute_below(tree, data, i, res.reduced);
    if (!decisions.empty() && hooks.on_reduced_sets) hooks.on_reduced_sets(tree, res.reduced);
  }
  res.objective = objective(tree, data, lambda);
  return res;
}

// ---------------------------------------------------------------------------
// Pruning

// Removes dead branches, collapses zero-weight decision nodes to the side
// their bias selects (right when b = 0) and replaces pure subtrees by a leaf.
// Predictions on every instance of `data` are unchanged.
inline Tree prune(const Tree& tree, const Dataset& data) {
  const ReducedSets sets = compute_reduced_sets(tree, data);
  const bool have_data = data.size() > 0;

  auto resolve = [&](NodeIndex i) {
    for (;;) {
      const Node& n = tree.node(i);
      if (n.is_leaf()) return i;
      const auto& d = n.decision();
      if (d.weights.all_zero()) {
        i = d.bias >= 0.0 ? *n.right : *n.left;
        continue;
      }
      if (have_data && !sets[i].empty()) {
        if (sets[*n.left].empty()) {
          i = *n.right;
          continue;
        }
        if (sets[*n.right].empty()) {
          i = *n.left;
          continue;
        }
      }
      return i;
    }
  };

  Tree out(tree.num_features(), tree.num_classes());
  struct Item {
    NodeIndex old_index;
    NodeIndex new_index;
  };
  std::vector<Item> stack;
  const NodeIndex r = resolve(tree.root());
  stack.push_back({r, out.set_root(tree.node(r).params)});
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    const Node& n = tree.node(it.old_index);
    if (n.is_leaf()) continue;
    const NodeIndex l = resolve(*n.left);
    const NodeIndex rr = resolve(*n.right);
    stack.push_back({l, out.add_child(it.new_index, Side::kLeft, tree.node(l).params)});
    stack.push_back({rr, out.add_child(it.new_index, Side::kRight, tree.node(rr).params)});
  }

  // Pure subtrees: bottom-up label agreement.
  const auto order = out.bfs_order();
  std::vector<std::optional<Label>> pure(out.size());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node& n = out.node(*it);
    if (n.is_leaf()) {
      pure[*it] = n.label();
    } else if (pure[*n.left] && pure[*n.right] && *pure[*n.left] == *pure[*n.right]) {
      pure[*it] = pure[*n.left];
    }
  }
  Tree result(out.num_features(), out.num_classes());
  std::vector<std::pair<NodeIndex, NodeIndex>> work;
  auto params_for = [&](NodeIndex i) -> NodeParams {
    if (pure[i]) return LeafParams{*pure[i]};
    return out.node(i).params;
  };
  work.emplace_back(out.root(), result.set_root(params_for(out.root())));
  while (!work.empty()) {
    const auto [o, nw] = work.back();
    work.pop_back();
    if (pure[o] || out.node(o).is_leaf()) continue;
    const Node& n = out.node(o);
    work.emplace_back(*n.left, result.add_child(nw, Side::kLeft, params_for(*n.left)));
    work.emplace_back(*n.right, result.add_child(nw, Side::kRight, params_for(*n.right)));
  }
  return result.compacted();
}

// ---------------------------------------------------------------------------
// Training

// Complete tree of the given depth with i.i.d. standard-normal weights.
inline Tree random_complete_tree(std::size_t num_features, int num_classes, int depth,
                                 std::uint64_t seed, double bias_scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto decision = [&]() -> NodeParams {
    std::vector<double> w(num_features);
    for (double& v : w) v = normal(rng);
    const double b = bias_scale > 0.0 ? bias_scale * normal(rng) : 0.0;
    return DecisionParams{SparseVector::from_dense(w), b};
  };
  Tree t(num_features, num_classes);
  std::vector<NodeIndex> level{t.set_root(depth > 0 ? decision() : NodeParams{LeafParams{0}})};
  for (int d = 1; d <= depth; ++d) {
    std::vector<NodeIndex> next;
    for (NodeIndex p : level) {
      for (Side s : {Side::kLeft, Side::kRight}) {
        next.push_back(t.add_child(p, s, d < depth ? decision() : NodeParams{LeafParams{0}}));
      }
    }
    level = std::move(next);
  }
  return t;
}

struct TrainResult {
  Tree tree;
  int iterations = 0;
  std::vector<double> objective_history;  // after each iteration
  double final_objective = 0.0;           // of the returned tree
  double train_error = 0.0;
};

inline double error_rate(const Tree& tree, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  return static_cast<double>(count_errors(tree, data)) / static_cast<double>(data.size());
}

// Runs TAO from `initial` until an iteration leaves the tree unchanged, the
// objective decreases by less than tol (when tol > 0) or max_iters is reached, then refreshes the leaves, prunes and
// optionally normalizes.
inline TrainResult train_from(Tree initial, const Dataset& data, const TrainConfig& config,
                              const TrainHooks& hooks = {}) {
  config.validate();
  check_dimension(initial, data.num_features());
  if (initial.num_classes() != data.num_classes()) {
    throw InputError("tree and dataset disagree on the number of classes");
  }
  TrainResult res;
  const auto counts = data.class_counts();
  const auto present = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; });
  if (present <= 1) {
    const auto majority =
        static_cast<Label>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    res.tree = Tree::single_leaf(data.num_features(), data.num_classes(), majority);
    res.final_objective = objective(res.tree, data, config.lambda);
    res.train_error = error_rate(res.tree, data);
    return res;
  }

  Tree tree = std::move(initial);
  double prev = objective(tree, data, config.lambda);
  for (int it = 1; it <= config.max_iters; ++it) {
    const auto step = tao_iteration(tree, data, config.lambda, config, hooks);
    res.iterations = it;
    res.objective_history.push_back(step.objective);
    if (hooks.on_iteration) hooks.on_iteration(it, tree, step.objective);
    if (hooks.progress) {
      *hooks.progress << "{\"iteration\":" << it << ",\"objective\":" << step.objective
                      << ",\"nonzeros\":" << count_nonzeros(tree) << ",\"accepted\":" << step.accepted
                      << ",\"rejected\":" << step.rejected << "}\n";
    }
    const double decrease = prev - step.objective;
    prev = step.objective;
    if (!step.changed || (config.tol > 0.0 && decrease < config.tol)) break;
  }
  // The last pass changed ancestors after the leaves were set.
  const auto sets = compute_reduced_sets(tree, data);
  for (NodeIndex leaf : tree.leaves()) update_leaf(tree, leaf, data, sets);

  tree = prune(tree, data);
  if (config.normalize) tree = normalize(std::move(tree));
  res.final_objective = objective(tree, data, config.lambda);
  res.train_error = error_rate(tree, data);
  res.tree = std::move(tree);
  return res;
}

inline TrainResult train(const Dataset& data, const TrainConfig& config, const TrainHooks& hooks = {}) {
  config.validate();
  const double bias_scale = config.force_zero_bias ? 0.0 : config.init_bias_scale;
  return train_from(random_complete_tree(data.num_features(), data.num_classes(),
                                         config.initial_depth, config.seed, bias_scale),
                    data, config, hooks);
}

// ---------------------------------------------------------------------------
// Regularization path

struct PathPoint {
  double lambda = 0.0;
  Tree tree;
  double train_error = 0.0;
  std::optional<double> test_error;
  int depth = 0;
  std::size_t num_nodes = 0;
  std::size_t nonzeros = 0;
  std::size_t features_used_count = 0;
  int iters_run = 0;
};

inline PathPoint make_path_point(double lambda, const TrainResult& r, const Dataset* test) {
  PathPoint p;
  p.lambda = lambda;
  p.tree = r.tree;
  p.train_error = r.train_error;
  if (test) p.test_error = error_rate(r.tree, *test);
  const auto s = tree_stats(r.tree);
  p.depth = s.depth;
  p.num_nodes = s.num_nodes;
  p.nonzeros = s.nonzeros;
  p.features_used_count = s.features_used.size();
  p.iters_run = r.iterations;
  return p;
}

// One tree per lambda (ascending). With warm_start, each fit starts from the
// previous lambda's tree instead of a fresh random tree.
inline std::vector<PathPoint> sweep_path(const Dataset& data, const Dataset* test,
                                         const std::vector<double>& lambdas, const TrainConfig& base,
                                         bool warm_start = false, const TrainHooks& hooks = {}) {
  if (lambdas.empty()) throw InputError("lambda grid is empty");
  for (std::size_t k = 1; k < lambdas.size(); ++k) {
    if (lambdas[k] < lambdas[k - 1]) throw InputError("lambda grid must be ascending");
  }
  std::vector<PathPoint> out;
  std::optional<Tree> previous;
  for (double lambda : lambdas) {
    TrainConfig cfg = base;
    cfg.lambda = lambda;
    const TrainResult r = (warm_start && previous) ? train_from(*previous, data, cfg, hooks)
                                                   : train(data, cfg, hooks);
    previous = r.tree;
    out.push_back(make_path_point(lambda, r, test));
  }
  return out;
}

}  // namespace taotree
