#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "taotree/error.hpp"
#include "taotree/tree.hpp"

namespace taotree {

struct SolverConfig {
  int max_iters = 1000;
  double tol = 1e-6;            // bound on the l1 subgradient residual
  double initial_lipschitz = 1.0;
  double backtrack_factor = 2.0;   // step-size inverse grows by this on a failed test
  double lipschitz_decay = 0.9;    // shrink applied before each line search
  bool accelerate = true;

  void validate() const {
    if (max_iters < 1) throw InputError("solver max_iters must be >= 1");
    if (!(tol > 0.0)) throw InputError("solver tol must be > 0");
    if (!(initial_lipschitz > 0.0) || !(backtrack_factor > 1.0) || !(lipschitz_decay > 0.0) ||
        lipschitz_decay > 1.0) {
      throw InputError("invalid solver step control parameters");
    }
  }
};

// Binary l1-regularized logistic regression problem over `num_rows` rows of a
// row-major feature buffer. Label kRight is the positive class.
struct BinaryProblem {
  std::span<const double> features;
  std::size_t num_features = 0;
  std::vector<Side> labels;
  std::vector<std::uint8_t> sample_mask;  // empty means every row is used
  double lambda = 0.0;
  bool fit_bias = true;

  std::size_t num_rows() const { return labels.size(); }
  std::span<const double> row(std::size_t m) const {
    return features.subspan(m * num_features, num_features);
  }
  bool used(std::size_t m) const { return sample_mask.empty() || sample_mask[m] != 0; }

  void validate() const {
    if (labels.empty()) throw InputError("binary problem has no rows");
    if (features.size() != labels.size() * num_features) {
      throw InputError("binary problem feature buffer does not match rows x features");
    }
    if (!sample_mask.empty() && sample_mask.size() != labels.size()) {
      throw InputError("sample mask length does not match row count");
    }
    if (!(lambda >= 0.0)) throw InputError("lambda must be nonnegative");
  }
};

struct SolverDiagnostics {
  int iterations = 0;
  bool converged = false;   // residual <= tol
  bool degenerate = false;  // every used label identical
  double residual = 0.0;
  double objective = 0.0;
  double lipschitz = 0.0;
};

struct LogisticSolution {
  SparseVector weights;
  double bias = 0.0;
  SolverDiagnostics diagnostics;
};

// Called after every iteration with (iteration, penalized objective).
using SolverHook = std::function<void(int, double)>;

// Bias assigned when every used label is identical.
inline constexpr double kDegenerateBias = 20.0;

namespace detail {

// log(1 + exp(-t)) without overflow.
inline double log1p_exp_neg(double t) {
  return t > 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// Gathers the used rows and +-1 targets once so the iterations touch
// contiguous memory only.
struct PackedProblem {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> x;
  std::vector<double> sign;

  explicit PackedProblem(const BinaryProblem& p) : cols(p.num_features) {
    for (std::size_t m = 0; m < p.num_rows(); ++m) {
      if (!p.used(m)) continue;
      const auto r = p.row(m);
      x.insert(x.end(), r.begin(), r.end());
      sign.push_back(p.labels[m] == Side::kRight ? 1.0 : -1.0);
      ++rows;
    }
  }

  void margins(std::span<const double> w, double b, std::span<double> out) const {
    for (std::size_t m = 0; m < rows; ++m) {
      const double* xr = x.data() + m * cols;
      double s = b;
      for (std::size_t j = 0; j < cols; ++j) s += xr[j] * w[j];
      out[m] = s;
    }
  }

  double loss(std::span<const double> margin) const {
    double f = 0.0;
    for (std::size_t m = 0; m < rows; ++m) f += log1p_exp_neg(sign[m] * margin[m]);
    return f;
  }

  // loss(base + delta) - loss(base), accurate even when the change is far
  // below the rounding error of either sum.
  double loss_change(std::span<const double> base, std::span<const double> delta) const {
    double f = 0.0;
    for (std::size_t m = 0; m < rows; ++m) {
      const double t = sign[m] * base[m];
      const double d = sign[m] * delta[m];
      if (std::abs(d) > 30.0) {
        f += log1p_exp_neg(t + d) - log1p_exp_neg(t);
      } else {
        f += std::log1p(sigmoid(-t) * std::expm1(-d));
      }
    }
    return f;
  }

  // Gradient of the smooth loss; the last entry is the bias derivative.
  void gradient(std::span<const double> margin, std::span<double> grad) const {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0;
    for (std::size_t m = 0; m < rows; ++m) {
      const double r = -sign[m] * sigmoid(-sign[m] * margin[m]);
      if (r == 0.0) continue;
      const double* xr = x.data() + m * cols;
      for (std::size_t j = 0; j < cols; ++j) grad[j] += r * xr[j];
      gb += r;
    }
    grad[cols] = gb;
  }
};

inline double l1_norm(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) s += std::abs(v);
  return s;
}

// Distance from 0 to the subdifferential of loss + lambda*|w|_1, maximized
// over coordinates. The bias coordinate counts only when it is free.
inline double subgradient_residual(std::span<const double> grad, std::span<const double> w,
                                   double lambda, bool fit_bias) {
  double r = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double g = grad[j];
    const double d = w[j] != 0.0 ? std::abs(g + lambda * (w[j] > 0.0 ? 1.0 : -1.0))
                                 : std::max(0.0, std::abs(g) - lambda);
    r = std::max(r, d);
  }
  if (fit_bias) r = std::max(r, std::abs(grad[w.size()]));
  return r;
}

}  // namespace detail

// Max-coordinate l1 subgradient residual at (w, b); 0 exactly at an optimum.
inline double check_optimality(const BinaryProblem& problem, std::span<const double> w, double b) {
  problem.validate();
  if (w.size() != problem.num_features) throw InputError("weight dimension mismatch");
  const detail::PackedProblem pk(problem);
  std::vector<double> margin(pk.rows), grad(pk.cols + 1);
  pk.margins(w, b, margin);
  pk.gradient(margin, grad);
  return detail::subgradient_residual(grad, w, problem.lambda, problem.fit_bias);
}

inline double check_optimality(const BinaryProblem& problem, const SparseVector& w, double b) {
  const auto dense = w.to_dense();
  return check_optimality(problem, std::span<const double>(dense), b);
}

// Penalized logistic objective at (w, b).
inline double logistic_objective(const BinaryProblem& problem, std::span<const double> w, double b) {
  problem.validate();
  const detail::PackedProblem pk(problem);
  std::vector<double> margin(pk.rows);
  pk.margins(w, b, margin);
  return pk.loss(margin) + problem.lambda * detail::l1_norm(w);
}

// Proximal gradient with backtracking and monotone (restarted) acceleration.
// Deterministic: identical inputs give bit-identical outputs.
inline LogisticSolution fit_l1_logistic(const BinaryProblem& problem, const SolverConfig& config,
                                        const std::optional<DecisionParams>& init = std::nullopt,
                                        const SolverHook& hook = {}) {
  problem.validate();
  config.validate();
  const detail::PackedProblem pk(problem);
  if (pk.rows == 0) throw InputError("binary problem: sample mask selects no rows");
  const std::size_t F = pk.cols;
  const double lambda = problem.lambda;

  LogisticSolution out;
  out.weights = SparseVector(F);

  const bool all_right = std::all_of(pk.sign.begin(), pk.sign.end(), [](double s) { return s > 0; });
  const bool all_left = std::all_of(pk.sign.begin(), pk.sign.end(), [](double s) { return s < 0; });
  if (all_right || all_left) {
    out.bias = problem.fit_bias ? (all_right ? kDegenerateBias : -kDegenerateBias) : 0.0;
    out.diagnostics.degenerate = true;
    out.diagnostics.converged = true;
    std::vector<double> margin(pk.rows, out.bias);
    out.diagnostics.objective = pk.loss(margin);
    return out;
  }

  // x: current iterate, z: last prox point, y: extrapolated point.
  std::vector<double> x(F, 0.0), z(F), y(F), x_prev(F), dw(F);
  double xb = 0.0;
  if (init) {
    if (init->weights.dim() != F) throw InputError("initial weights have wrong dimension");
    x = init->weights.to_dense();
    xb = problem.fit_bias ? init->bias : 0.0;
  }
  std::vector<double> mx(pk.rows), mz(pk.rows), my(pk.rows), mx_prev(pk.rows), dm(pk.rows);
  std::vector<double> grad(F + 1);
  pk.margins(x, xb, mx);
  double fx = pk.loss(mx) + lambda * detail::l1_norm(x);

  pk.gradient(mx, grad);
  double residual = detail::subgradient_residual(grad, x, lambda, problem.fit_bias);

  // Smooth-loss change from (a, ab) with margins ma to (c, cb). Computed from
  // the margin differences so it stays exact-ish near the optimum, where the
  // change is below the rounding error of the loss itself.
  auto smooth_change = [&](const std::vector<double>& a, double ab, const std::vector<double>& ma,
                           const std::vector<double>& c, double cb) {
    for (std::size_t j = 0; j < F; ++j) dw[j] = c[j] - a[j];
    pk.margins(dw, cb - ab, dm);
    return pk.loss_change(ma, dm);
  };
  // Values closer than this are compared through smooth_change.
  auto band = [](double f) { return 1e-10 * (1.0 + std::abs(f)); };

  y = x;
  my = mx;
  double yb = xb;
  double zb = xb;
  double t = 1.0;
  double L = config.initial_lipschitz;
  int iter = 0;
  bool grad_at_y_is_x = true;  // grad currently holds the gradient at x == y

  while (residual > config.tol && iter < config.max_iters) {
    ++iter;
    if (!grad_at_y_is_x) pk.gradient(my, grad);
    const double fy_smooth = pk.loss(my);

    // Backtracking on the quadratic upper bound of the smooth part.
    L *= config.lipschitz_decay;
    double fz_smooth = 0.0;
    for (;;) {
      const double step = 1.0 / L;
      const double thresh = lambda * step;
      for (std::size_t j = 0; j < F; ++j) {
        const double v = y[j] - step * grad[j];
        z[j] = v > thresh ? v - thresh : (v < -thresh ? v + thresh : 0.0);
      }
      zb = problem.fit_bias ? yb - step * grad[F] : 0.0;
      pk.margins(z, zb, mz);
      fz_smooth = pk.loss(mz);
      double lin = (zb - yb) * grad[F], quad = (zb - yb) * (zb - yb);
      for (std::size_t j = 0; j < F; ++j) {
        const double d = z[j] - y[j];
        lin += d * grad[j];
        quad += d * d;
      }
      if (quad == 0.0) break;
      const double allowed = lin + 0.5 * L * quad;
      double change = fz_smooth - fy_smooth;
      if (std::abs(change - allowed) <= band(fy_smooth)) change = smooth_change(y, yb, my, z, zb);
      if (change <= allowed) break;
      L *= config.backtrack_factor;
    }
    const double fz = fz_smooth + lambda * detail::l1_norm(z);

    // Monotone step: keep x unless the prox point does not increase F.
    x_prev = x;
    mx_prev = mx;
    const double xb_prev = xb;
    bool improved = fz <= fx;
    double fz_tracked = fz;
    if (std::abs(fz - fx) <= band(fx)) {
      double l1_change = 0.0;
      for (std::size_t j = 0; j < F; ++j) l1_change += std::abs(z[j]) - std::abs(x[j]);
      const double delta = smooth_change(x, xb, mx, z, zb) + lambda * l1_change;
      improved = delta <= 0.0;
      fz_tracked = fx + delta;
    }
    if (improved) {
      x = z;
      xb = zb;
      mx = mz;
      fx = std::min(fx, fz_tracked);
    }

    if (hook) hook(iter, fx);

    pk.gradient(mx, grad);
    residual = detail::subgradient_residual(grad, x, lambda, problem.fit_bias);
    if (residual <= config.tol) break;

    if (!config.accelerate || !improved) {
      // Restart from the current iterate; its gradient is already in grad.
      t = 1.0;
      y = x;
      yb = xb;
      my = mx;
      grad_at_y_is_x = true;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double c = (t - 1.0) / t_next;
    t = t_next;
    // x == z here, so the extrapolation reduces to x + c (x - x_prev). Margins
    // are affine in (w, b) and follow the same combination.
    for (std::size_t j = 0; j < F; ++j) y[j] = x[j] + c * (x[j] - x_prev[j]);
    yb = xb + c * (xb - xb_prev);
    for (std::size_t m = 0; m < pk.rows; ++m) my[m] = mx[m] + c * (mx[m] - mx_prev[m]);
    grad_at_y_is_x = (c == 0.0);
  }

  out.weights = SparseVector::from_dense(x);
  out.bias = xb;
  out.diagnostics.iterations = iter;
  out.diagnostics.residual = residual;
  out.diagnostics.converged = residual <= config.tol;
  out.diagnostics.objective = pk.loss(mx) + lambda * detail::l1_norm(x);
  out.diagnostics.lipschitz = L;
  return out;
}

}  // namespace taotree
