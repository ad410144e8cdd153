#pragma once

// Hand-rolled data and tree generators shared by the unit and acceptance
// tests. Everything is seeded and deterministic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "taotree/taotree.hpp"

namespace fixtures {

using taotree::Dataset;
using taotree::DecisionParams;
using taotree::Label;
using taotree::LeafParams;
using taotree::NodeIndex;
using taotree::Side;
using taotree::SparseVector;
using taotree::Tree;
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Dataset random_dataset(std::size_t n, std::size_t f, int k, std::uint64_t seed, double lo = 0.0,
                              double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> x(n * f);
  for (auto& v : x) v = uniform(rng, lo, hi);
  std::vector<Label> y(n);
  std::uniform_int_distribution<Label> pick(0, k - 1);
  for (auto& v : y) v = pick(rng);
  return Dataset(n, f, std::move(x), std::move(y), k);
}

// Random complete tree of the given depth. Each decision weight is nonzero
// with probability `density`; with `zero_bias` all biases are 0. Leaf labels
// cycle through the classes in BFS order, so depth d with K = 2^d gives every
// class exactly one leaf.
inline Tree random_tree(std::size_t f, int k, int depth, std::uint64_t seed, bool zero_bias = false,
                        double density = 0.6) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto decision = [&] {
    std::vector<double> w(f, 0.0);
    for (auto& v : w) {
      if (uniform(rng) < density) v = gauss(rng);
    }
    // at least one positive and one negative weight when f >= 2
    if (f >= 2) {
      w[0] = std::abs(gauss(rng)) + 0.1;
      w[1] = -(std::abs(gauss(rng)) + 0.1);
      std::shuffle(w.begin(), w.end(), rng);
    }
    return DecisionParams{SparseVector::from_dense(w), zero_bias ? 0.0 : 0.3 * gauss(rng)};
  };
  Tree t(f, k);
  Label next = 0;
  auto leaf = [&] { return LeafParams{next++ % k}; };
  if (depth == 0) {
    t.set_root(leaf());
    return t;
  }
  std::vector<NodeIndex> frontier{t.set_root(decision())};
  for (int d = 1; d <= depth; ++d) {
    std::vector<NodeIndex> next_frontier;
    for (NodeIndex p : frontier) {
      for (Side s : {Side::kLeft, Side::kRight}) {
        if (d == depth) {
          t.add_child(p, s, leaf());
        } else {
          next_frontier.push_back(t.add_child(p, s, decision()));
        }
      }
    }
    frontier = std::move(next_frontier);
  }
  return t;
}

// Inputs in [0, 1]^f labeled by `teacher`, with a fraction `noise` of labels
// replaced at random.
inline Dataset planted(const Tree& teacher, std::size_t n, std::uint64_t seed, double noise = 0.0) {
  Rng rng(seed);
  const std::size_t f = teacher.num_features();
  std::vector<double> x(n * f);
  for (auto& v : x) v = uniform(rng);
  std::vector<Label> y(n);
  std::uniform_int_distribution<Label> pick(0, teacher.num_classes() - 1);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = taotree::predict(teacher, std::span<const double>(x.data() + i * f, f));
    if (uniform(rng) < noise) y[i] = pick(rng);
  }
  return Dataset(n, f, std::move(x), std::move(y), teacher.num_classes());
}

struct Planted {
  Tree teacher;
  Dataset data;
};

// Balanced planted problem: a random teacher tree of the given depth whose
// leaves carry distinct classes where possible. Each decision node is
// centered on the inputs reaching it (bias at the median of w.x) or, with
// zero_bias, has zero-sum weights so uniform inputs split roughly evenly.
inline Planted make_planted(std::size_t f, int k, int depth, std::size_t n, std::uint64_t seed,
                            double noise = 0.0, bool zero_bias = false, double density = 0.6) {
  Tree t = random_tree(f, k, depth, seed, zero_bias, density);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<double> x(n * f);
  for (auto& v : x) v = uniform(rng);
  auto row = [&](std::size_t i) { return std::span<const double>(x.data() + i * f, f); };
  std::vector<std::vector<std::size_t>> reach(t.size());
  for (std::size_t i = 0; i < n; ++i) reach[t.root()].push_back(i);
  for (NodeIndex id : t.bfs_order()) {
    auto& node = t.node(id);
    if (node.is_leaf()) continue;
    auto& dp = node.decision();
    if (zero_bias) {
      auto w = dp.weights.to_dense();
      double mean = 0.0;
      for (double v : w) mean += v;
      mean /= static_cast<double>(w.size());
      for (auto& v : w) v -= mean;
      dp.weights = SparseVector::from_dense(w);
    } else if (!reach[id].empty()) {
      std::vector<double> s;
      for (auto i : reach[id]) s.push_back(dp.weights.dot(row(i)));
      std::nth_element(s.begin(), s.begin() + static_cast<long>(s.size() / 2), s.end());
      dp.bias = -s[s.size() / 2];
    }
    for (auto i : reach[id]) reach[node.child(taotree::decide(dp, row(i)))].push_back(i);
  }
  std::vector<Label> y(n);
  std::uniform_int_distribution<Label> pick(0, k - 1);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = taotree::predict(t, row(i));
    if (uniform(rng) < noise) y[i] = pick(rng);
  }
  return {std::move(t), Dataset(n, f, std::move(x), std::move(y), k)};
}

// Two well-separated classes in [0, 1]^f: class 0 has coordinate sum below
// f/2 - margin, class 1 above f/2 + margin.
inline Dataset blobs(std::size_t n, std::size_t f, std::uint64_t seed, double margin = 0.2) {
  Rng rng(seed);
  std::vector<double> x;
  std::vector<Label> y;
  x.reserve(n * f);
  const double half = static_cast<double>(f) / 2.0;
  while (y.size() < n) {
    std::vector<double> p(f);
    const Label c = static_cast<Label>(y.size() % 2);
    const double center = c == 0 ? 0.3 : 0.7;
    double s = 0.0;
    for (auto& v : p) {
      v = std::clamp(center + 0.15 * std::normal_distribution<double>(0.0, 1.0)(rng), 0.0, 1.0);
      s += v;
    }
    if (c == 0 && s > half - margin) continue;
    if (c == 1 && s < half + margin) continue;
    x.insert(x.end(), p.begin(), p.end());
    y.push_back(c);
  }
  return Dataset(n, f, std::move(x), std::move(y), 2);
}

// Nonnegative features shaped like post-ReLU activations of a trained net:
// class c switches on its own block of `per_class` units (values in
// [0.5, 1.5]); every other unit fires weakly (up to 0.4) 30% of the time.
inline Dataset relu_class_features(std::size_t n, int k, std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t f = static_cast<std::size_t>(k) * per_class;
  std::vector<double> x(n * f, 0.0);
  std::vector<Label> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Label c = static_cast<Label>(i % static_cast<std::size_t>(k));
    y[i] = c;
    for (std::size_t j = 0; j < f; ++j) {
      double& v = x[i * f + j];
      if (static_cast<Label>(j / per_class) == c) {
        v = uniform(rng, 0.5, 1.5);
      } else if (uniform(rng) < 0.3) {
        v = uniform(rng, 0.0, 0.4);
      }
    }
  }
  return Dataset(n, f, std::move(x), std::move(y), k);
}

// w = (1, -1), b = 0; left leaf 0, right leaf 1.
inline Tree two_node() {
  Tree t(2, 2);
  const auto r = t.set_root(DecisionParams{SparseVector::from_dense(std::vector<double>{1.0, -1.0}), 0.0});
  t.add_child(r, Side::kLeft, LeafParams{0});
  t.add_child(r, Side::kRight, LeafParams{1});
  return t;
}

// Four 2-D points; two_node() routes (2,1) and (3,0) right, (1,2) and (0,3)
// left. Only (3,0) is misclassified.
inline Dataset four_points() {
  return Dataset(4, 2, {2, 1, 3, 0, 1, 2, 0, 3}, {1, 0, 0, 0}, 2);
}

inline std::vector<std::vector<double>> nonneg_vectors(std::size_t f, std::size_t count, std::uint64_t seed,
                                                       double scale = 1.0) {
  Rng rng(seed);
  std::vector<std::vector<double>> out;
  out.emplace_back(f, 0.0);
  while (out.size() < count) {
    std::vector<double> z(f);
    const double density = uniform(rng);
    for (auto& v : z) v = uniform(rng) < density ? scale * uniform(rng) : 0.0;
    out.push_back(std::move(z));
  }
  return out;
}

inline std::vector<double> masked_vector(const taotree::Mask& m, const std::vector<double>& z) {
  std::vector<double> out(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    switch (m.mult[j]) {
      case taotree::Ternary::kZero: out[j] = 0.0; break;
      case taotree::Ternary::kOne: out[j] = z[j] + m.add[j]; break;
      case taotree::Ternary::kWild: out[j] = z[j]; break;
    }
  }
  return out;
}

}  // namespace fixtures
