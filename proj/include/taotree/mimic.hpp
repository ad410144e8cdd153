#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "taotree/dataset.hpp"
#include "taotree/error.hpp"
#include "taotree/masks.hpp"
#include "taotree/tree.hpp"

namespace taotree {

enum class Activation : std::uint8_t { kNone = 0, kRelu = 1 };

struct DenseLayer {
  std::size_t out = 0;
  std::size_t in = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;     // out
  Activation activation = Activation::kNone;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// The post-split part g of a net: dense layers with optional ReLU, ending in
// K class scores. Softmax is monotone, so the label is the score argmax.
struct ClassifierHead {
  std::vector<DenseLayer> layers;

  std::size_t num_inputs() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t num_classes() const { return layers.empty() ? 0 : layers.back().out; }

  void validate() const {
    if (layers.empty()) throw InputError("classifier head has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      if (L.out == 0 || L.in == 0) throw InputError("head layer " + std::to_string(l) + " has a zero dimension");
      if (L.weights.size() != L.out * L.in || L.bias.size() != L.out) {
        throw InputError("head layer " + std::to_string(l) + " parameter sizes do not match its shape");
      }
      if (l > 0 && layers[l - 1].out != L.in) {
        throw InputError("head layer " + std::to_string(l) + " expects " + std::to_string(L.in) +
                         " inputs but the previous layer produces " + std::to_string(layers[l - 1].out));
      }
    }
    if (num_classes() < 2) throw InputError("classifier head must produce at least 2 scores");
  }

  friend bool operator==(const ClassifierHead&, const ClassifierHead&) = default;
};

struct HeadOutput {
  std::vector<double> scores;
  Label label = 0;
};

// First index of the maximum.
inline Label argmax(std::span<const double> v) {
  return static_cast<Label>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline HeadOutput head_forward(const ClassifierHead& head, std::span<const double> z) {
  if (head.layers.empty()) throw InputError("classifier head has no layers");
  if (z.size() != head.num_inputs()) {
    throw InputError("head expects " + std::to_string(head.num_inputs()) + " features, got " +
                     std::to_string(z.size()));
  }
  std::vector<double> cur(z.begin(), z.end()), next;
  for (const auto& L : head.layers) {
    next.assign(L.out, 0.0);
    for (std::size_t o = 0; o < L.out; ++o) {
      const double* w = L.weights.data() + o * L.in;
      double s = L.bias[o];
      for (std::size_t i = 0; i < L.in; ++i) s += w[i] * cur[i];
      next[o] = L.activation == Activation::kRelu ? std::max(0.0, s) : s;
    }
    cur.swap(next);
  }
  HeadOutput out;
  out.label = argmax(cur);
  out.scores = std::move(cur);
  return out;
}

// ---------------------------------------------------------------------------
// Predictors and confusion matrices

using Predictor = std::function<Label(std::span<const double>)>;

inline Predictor tree_predictor(const Tree& tree) {
  return [&tree](std::span<const double> z) { return predict(tree, z); };
}

inline Predictor head_predictor(const ClassifierHead& head) {
  return [&head](std::span<const double> z) { return head_forward(head, z).label; };
}

// Applies the mask to the features before the wrapped predictor.
inline Predictor masked(Predictor inner, ConcreteMask mask) {
  return [inner = std::move(inner), mask = std::move(mask)](std::span<const double> z) {
    return inner(apply_mask(mask, z).values);
  };
}

struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::size_t> counts;  // K x K, (reference, evaluated)

  explicit ConfusionMatrix(int k = 0)
      : num_classes(k), counts(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0) {}

  std::size_t& at(Label ref, Label got) {
    return counts[static_cast<std::size_t>(ref) * static_cast<std::size_t>(num_classes) + static_cast<std::size_t>(got)];
  }
  std::size_t at(Label ref, Label got) const {
    return counts[static_cast<std::size_t>(ref) * static_cast<std::size_t>(num_classes) + static_cast<std::size_t>(got)];
  }

  std::size_t total() const {
    std::size_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }

  std::size_t diagonal() const {
    std::size_t s = 0;
    for (Label k = 0; k < num_classes; ++k) s += at(k, k);
    return s;
  }

  double agreement() const {
    const auto t = total();
    return t == 0 ? 1.0 : static_cast<double>(diagonal()) / static_cast<double>(t);
  }

  std::size_t column_total(Label got) const {
    std::size_t s = 0;
    for (Label k = 0; k < num_classes; ++k) s += at(k, got);
    return s;
  }

  // Row-stochastic view; zero rows stay zero.
  std::vector<double> row_normalized() const {
    std::vector<double> out(counts.size(), 0.0);
    const auto K = static_cast<std::size_t>(num_classes);
    for (std::size_t r = 0; r < K; ++r) {
      std::size_t row = 0;
      for (std::size_t c = 0; c < K; ++c) row += counts[r * K + c];
      if (row == 0) continue;
      for (std::size_t c = 0; c < K; ++c) {
        out[r * K + c] = static_cast<double>(counts[r * K + c]) / static_cast<double>(row);
      }
    }
    return out;
  }
};

// Rows are the reference labels (ground truth when `reference` is empty),
// columns the predictor's labels.
inline ConfusionMatrix eval_confusion(const Predictor& predictor, const Dataset& data,
                                      const Predictor& reference = {}) {
  ConfusionMatrix cm(data.num_classes());
  for (std::size_t n = 0; n < data.size(); ++n) {
    const auto z = data.row(n);
    const Label ref = reference ? reference(z) : data.label(n);
    const Label got = predictor(z);
    if (ref < 0 || ref >= cm.num_classes || got < 0 || got >= cm.num_classes) {
      throw InputError("prediction outside [0, " + std::to_string(cm.num_classes) + ") at row " + std::to_string(n));
    }
    ++cm.at(ref, got);
  }
  return cm;
}

// ---------------------------------------------------------------------------
// Class scores

// Sum of the features in `set`.
inline double class_score(std::span<const FeatureIndex> set, std::span<const double> z) {
  double s = 0.0;
  for (auto j : set) {
    if (j >= z.size()) throw InputError("feature index " + std::to_string(j) + " out of range");
    s += z[j];
  }
  return s;
}

// Per-class feature sets: the kept (ONE) features of the all-to-class mask.
// Classes without a feasible mask get an empty set.
inline std::vector<std::vector<FeatureIndex>> class_feature_sets(const Tree& tree, double epsilon) {
  std::vector<std::vector<FeatureIndex>> out(static_cast<std::size_t>(tree.num_classes()));
  for (Label k = 0; k < tree.num_classes(); ++k) {
    try {
      out[static_cast<std::size_t>(k)] = mask_all_to_class(tree, k, epsilon).ones();
    } catch (const InfeasibleMaskError&) {
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rotated-features control

// Dense orthogonal matrix q_ij = sqrt(2/(n+1)) sin(pi i j / (n+1)), 1-based,
// row-major n x n. It is symmetric and its own inverse.
inline std::vector<double> sine_rotation(std::size_t n) {
  std::vector<double> q(n * n);
  const double c = std::sqrt(2.0 / static_cast<double>(n + 1));
  const double step = std::numbers::pi / static_cast<double>(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      // Reduce i*j modulo 2(n+1) before the sine to keep the argument small.
      const std::size_t r = (i * j) % (2 * (n + 1));
      q[(i - 1) * n + (j - 1)] = c * std::sin(step * static_cast<double>(r));
    }
  }
  return q;
}

// max |Q^T Q - I|. Exact O(n^3) for n <= full_limit, otherwise over a fixed
// pseudo-random sample of column pairs (always including the diagonal).
inline double orthogonality_error(const std::vector<double>& q, std::size_t n, std::size_t full_limit = 1024) {
  auto entry = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += q[k * n + a] * q[k * n + b];
    return std::abs(s - (a == b ? 1.0 : 0.0));
  };
  double err = 0.0;
  if (n <= full_limit) {
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a; b < n; ++b) err = std::max(err, entry(a, b));
    }
    return err;
  }
  std::mt19937_64 rng(n);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t a = 0; a < n; ++a) err = std::max(err, entry(a, a));
  for (std::size_t s = 0; s < 4 * n; ++s) err = std::max(err, entry(pick(rng), pick(rng)));
  return err;
}

// features <- features Q^T.
inline Dataset rotate_features(const Dataset& data) {
  const std::size_t F = data.num_features();
  if (F == 0) throw InputError("cannot rotate a dataset with no features");
  const auto q = sine_rotation(F);
  const double err = orthogonality_error(q, F);
  if (err > 1e-8) throw Error("rotation matrix failed the orthogonality check: " + std::to_string(err));
  std::vector<double> out(data.size() * F, 0.0);
  for (std::size_t n = 0; n < data.size(); ++n) {
    const auto x = data.row(n);
    double* y = out.data() + n * F;
    for (std::size_t i = 0; i < F; ++i) {
      const double* qi = q.data() + i * F;
      double s = 0.0;
      for (std::size_t j = 0; j < F; ++j) s += qi[j] * x[j];
      y[i] = s;
    }
  }
  return Dataset(data.size(), F, std::move(out), data.labels(), data.num_classes());
}

}  // namespace taotree
