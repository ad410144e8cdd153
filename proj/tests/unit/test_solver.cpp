#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace taotree;

namespace {

struct Problem {
  oracles::LogisticData data;
  std::vector<Side> labels;

  BinaryProblem binary(double lambda, bool fit_bias = true) const {
    BinaryProblem p;
    p.features = data.x;
    p.num_features = data.cols;
    p.labels = labels;
    p.lambda = lambda;
    p.fit_bias = fit_bias;
    return p;
  }
};

// Gaussian design with noisy linear labels; both labels always present.
Problem random_problem(std::size_t m, std::size_t f, std::uint64_t seed, double noise = 1.0) {
  fixtures::Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Problem p;
  p.data.rows = m;
  p.data.cols = f;
  p.data.x.resize(m * f);
  for (auto& v : p.data.x) v = g(rng);
  std::vector<double> truth(f);
  for (auto& v : truth) v = g(rng);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.3 * g(rng) * noise;
    for (std::size_t j = 0; j < f; ++j) s += truth[j] * p.data.x[i * f + j];
    s += noise * g(rng);
    p.labels.push_back(s >= 0 ? Side::kRight : Side::kLeft);
  }
  p.labels[0] = Side::kLeft;
  p.labels[1] = Side::kRight;
  for (auto s : p.labels) p.data.sign.push_back(s == Side::kRight ? 1.0 : -1.0);
  return p;
}

SolverConfig tight() {
  SolverConfig c;
  c.tol = 1e-8;
  c.max_iters = 100000;
  return c;
}

}  // namespace

TEST(Solver, SeparableOneDimensional) {
  Problem p;
  p.data.rows = 4;
  p.data.cols = 1;
  p.data.x = {-1, 1, -1, 1};
  p.labels = {Side::kLeft, Side::kRight, Side::kLeft, Side::kRight};
  const auto sol = fit_l1_logistic(p.binary(0.0), SolverConfig{});
  ASSERT_GT(sol.weights[0], 0.0);
  for (std::size_t m = 0; m < 4; ++m) {
    const double s = sol.weights[0] * p.data.x[m] + sol.bias;
    EXPECT_EQ(s >= 0 ? Side::kRight : Side::kLeft, p.labels[m]);
  }
}

TEST(Solver, ZeroAboveLambdaMax) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_problem(30 + seed * 5, 1 + seed % 7, seed);
    for (bool fit_bias : {true, false}) {
      const double lmax = oracles::lambda_max(p.data, fit_bias);
      const auto sol = fit_l1_logistic(p.binary(1.01 * lmax, fit_bias), SolverConfig{});
      EXPECT_EQ(sol.weights.nnz(), 0u) << "seed " << seed;
      // and just below lambda_max something enters
      const auto below = fit_l1_logistic(p.binary(0.9 * lmax, fit_bias), tight());
      EXPECT_GT(below.weights.nnz(), 0u) << "seed " << seed;
    }
  }
}

TEST(Solver, SmallProblemMatchesCoordinateOracle) {
  const auto p = random_problem(5, 3, 123);
  const auto sol = fit_l1_logistic(p.binary(0.1), tight());
  const auto ref = oracles::coordinate_descent(p.data, 0.1, true);
  const double obj = oracles::objective(p.data, sol.weights.to_dense(), sol.bias, 0.1);
  EXPECT_NEAR(obj, ref.objective, 1e-6 * std::max(1.0, std::abs(ref.objective)));
  EXPECT_LE(sol.diagnostics.residual, 1e-8);
}

TEST(Solver, RandomProblemsMatchOracleAndReachTolerance) {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const auto p = random_problem(20 + 13 * seed, 1 + seed % 10, 1000 + seed);
    const double lambda = (0.05 + 0.06 * static_cast<double>(seed)) * oracles::lambda_max(p.data, true);
    const auto sol = fit_l1_logistic(p.binary(lambda), SolverConfig{});
    EXPECT_TRUE(sol.diagnostics.converged) << "seed " << seed;
    EXPECT_LE(sol.diagnostics.residual, 1e-6);
    EXPECT_LE(check_optimality(p.binary(lambda), sol.weights, sol.bias), 1e-6);
    const auto ref = oracles::coordinate_descent(p.data, lambda, true);
    const double obj = oracles::objective(p.data, sol.weights.to_dense(), sol.bias, lambda);
    EXPECT_NEAR(obj, ref.objective, 1e-6 * std::abs(ref.objective)) << "seed " << seed;
    EXPECT_NEAR(obj, sol.diagnostics.objective, 1e-9 * std::abs(obj));
  }
}

TEST(Solver, FixedZeroBiasStaysZero) {
  const auto p = random_problem(60, 4, 5);
  const auto sol = fit_l1_logistic(p.binary(0.5, false), SolverConfig{});
  EXPECT_EQ(sol.bias, 0.0);
  const auto ref = oracles::coordinate_descent(p.data, 0.5, false);
  const double obj = oracles::objective(p.data, sol.weights.to_dense(), 0.0, 0.5);
  EXPECT_NEAR(obj, ref.objective, 1e-6 * ref.objective);
}

TEST(Solver, DegenerateLabels) {
  auto p = random_problem(10, 3, 9);
  p.labels.assign(10, Side::kRight);
  auto sol = fit_l1_logistic(p.binary(0.1), SolverConfig{});
  EXPECT_TRUE(sol.diagnostics.degenerate);
  EXPECT_EQ(sol.weights.nnz(), 0u);
  EXPECT_GT(sol.bias, 5.0);
  p.labels.assign(10, Side::kLeft);
  sol = fit_l1_logistic(p.binary(0.1), SolverConfig{});
  EXPECT_LT(sol.bias, -5.0);
  sol = fit_l1_logistic(p.binary(0.1, false), SolverConfig{});
  EXPECT_EQ(sol.bias, 0.0);
  EXPECT_TRUE(sol.diagnostics.degenerate);
}

TEST(Solver, EmptyCareSetIsAnError) {
  auto bp = random_problem(10, 3, 9).binary(0.1);
  bp.sample_mask.assign(10, 0);
  EXPECT_THROW(fit_l1_logistic(bp, SolverConfig{}), InputError);
}

TEST(Solver, SampleMaskEqualsSubsetProblem) {
  const auto p = random_problem(40, 3, 17);
  auto masked = p.binary(0.2);
  masked.sample_mask.assign(40, 1);
  Problem sub;
  sub.data.cols = 3;
  for (std::size_t m = 0; m < 40; ++m) {
    if (m % 3 == 0) {
      masked.sample_mask[m] = 0;
      continue;
    }
    sub.data.x.insert(sub.data.x.end(), p.data.x.begin() + static_cast<long>(m * 3),
                      p.data.x.begin() + static_cast<long>(m * 3 + 3));
    sub.labels.push_back(p.labels[m]);
    sub.data.sign.push_back(p.data.sign[m]);
  }
  sub.data.rows = sub.labels.size();
  const auto a = fit_l1_logistic(masked, tight());
  const auto b = fit_l1_logistic(sub.binary(0.2), tight());
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(Solver, InvalidProblemsAreRejected) {
  const auto p = random_problem(10, 3, 2);
  auto bp = p.binary(-1.0);
  EXPECT_THROW(fit_l1_logistic(bp, SolverConfig{}), InputError);
  bp = p.binary(0.1);
  bp.num_features = 4;
  EXPECT_THROW(fit_l1_logistic(bp, SolverConfig{}), InputError);
  SolverConfig bad;
  bad.tol = 0.0;
  EXPECT_THROW(fit_l1_logistic(p.binary(0.1), bad), InputError);
  bad = SolverConfig{};
  bad.max_iters = 0;
  EXPECT_THROW(fit_l1_logistic(p.binary(0.1), bad), InputError);
}

TEST(CheckOptimality, ContractExamples) {
  const auto p = random_problem(50, 4, 31);
  const auto sol = fit_l1_logistic(p.binary(0.3), tight());
  EXPECT_LE(check_optimality(p.binary(0.3), sol.weights, sol.bias), 1e-8);
  auto w = sol.weights.to_dense();
  w[0] += 0.1;
  EXPECT_GT(check_optimality(p.binary(0.3), std::span<const double>(w), sol.bias), 1e-3);
}

TEST(CheckOptimality, ZeroIsExactOnBalancedSymmetricData) {
  // Balanced labels, so b* = 0 and the residual at (0, 0) vanishes exactly.
  Problem p;
  p.data.rows = 4;
  p.data.cols = 2;
  p.data.x = {1, 2, -1, -2, 2, 1, -2, -1};
  p.labels = {Side::kRight, Side::kLeft, Side::kLeft, Side::kRight};
  for (auto s : p.labels) p.data.sign.push_back(s == Side::kRight ? 1.0 : -1.0);
  const double lmax = oracles::lambda_max(p.data, true);
  const std::vector<double> zero(2, 0.0);
  EXPECT_EQ(check_optimality(p.binary(lmax), std::span<const double>(zero), 0.0), 0.0);
  EXPECT_EQ(check_optimality(p.binary(2 * lmax), std::span<const double>(zero), 0.0), 0.0);
  if (lmax > 0) EXPECT_GT(check_optimality(p.binary(0.5 * lmax), std::span<const double>(zero), 0.0), 0.0);
}

TEST(SolverProperties, ObjectiveIsMonotoneAcrossIterations) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = random_problem(80, 8, 50 + seed, 0.5);
    std::vector<double> trace;
    fit_l1_logistic(p.binary(0.05 * oracles::lambda_max(p.data, true)), tight(), std::nullopt,
                    [&](int, double f) { trace.push_back(f); });
    ASSERT_FALSE(trace.empty());
    for (std::size_t k = 1; k < trace.size(); ++k) ASSERT_LE(trace[k], trace[k - 1]) << "seed " << seed;
  }
}

TEST(SolverProperties, SolutionIsSoftThresholdFixedPoint) {
  // Orthonormal design (rows of the sine transform), no bias.
  const std::size_t n = 16;
  const auto q = sine_rotation(n);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Problem p;
    p.data.rows = n;
    p.data.cols = n;
    p.data.x = q;
    fixtures::Rng rng(seed);
    for (std::size_t m = 0; m < n; ++m) p.labels.push_back(fixtures::uniform(rng) < 0.5 ? Side::kLeft : Side::kRight);
    p.labels[0] = Side::kLeft;
    p.labels[1] = Side::kRight;
    for (auto s : p.labels) p.data.sign.push_back(s == Side::kRight ? 1.0 : -1.0);
    const double lambda = 0.4 * oracles::lambda_max(p.data, false);
    const auto sol = fit_l1_logistic(p.binary(lambda, false), tight());
    const auto w = sol.weights.to_dense();
    // gradient of the smooth part by hand
    std::vector<double> g(n, 0.0);
    for (std::size_t m = 0; m < n; ++m) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += q[m * n + j] * w[j];
      const double coef = -p.data.sign[m] * oracles::logistic(-p.data.sign[m] * s);
      for (std::size_t j = 0; j < n; ++j) g[j] += coef * q[m * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double v = w[j] - g[j];
      const double st = v > lambda ? v - lambda : (v < -lambda ? v + lambda : 0.0);
      EXPECT_NEAR(st, w[j], 1e-7);
      if (w[j] == 0.0) {
        EXPECT_LE(std::abs(g[j]), lambda + 1e-8);
      }
    }
  }
}

TEST(SolverProperties, SupportMatchesOracleAlongLambda) {
  // The support at each lambda must agree with the oracle's. Whether the
  // support shrinks monotonically in lambda is recorded, not asserted: it is
  // not guaranteed for l1 paths in general.
  int monotone_violations = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto p = random_problem(60, 6, 700 + seed);
    const double lmax = oracles::lambda_max(p.data, true);
    std::size_t prev = p.data.cols + 1;
    for (double frac : {0.05, 0.2, 0.4, 0.6, 0.8}) {
      const double lambda = frac * lmax;
      const auto sol = fit_l1_logistic(p.binary(lambda), tight());
      const auto ref = oracles::coordinate_descent(p.data, lambda, true);
      const auto w = sol.weights.to_dense();
      for (std::size_t j = 0; j < w.size(); ++j) {
        // coordinates clearly away from zero in one must be nonzero in the other
        if (std::abs(ref.w[j]) > 1e-5) {
          EXPECT_NE(w[j], 0.0) << "seed " << seed << " lambda " << lambda;
        }
        if (std::abs(w[j]) > 1e-5) {
          EXPECT_NE(ref.w[j], 0.0);
        }
      }
      if (sol.weights.nnz() > prev) ++monotone_violations;
      prev = sol.weights.nnz();
    }
  }
  RecordProperty("support_monotonicity_violations", monotone_violations);
}

TEST(SolverProperties, LabelSwapNegatesSolution) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto p = random_problem(70, 5, 300 + seed);
    const double lambda = 0.2 * oracles::lambda_max(p.data, true);
    const auto a = fit_l1_logistic(p.binary(lambda), tight());
    for (auto& s : p.labels) s = opposite(s);
    for (auto& s : p.data.sign) s = -s;
    const auto b = fit_l1_logistic(p.binary(lambda), tight());
    const auto wa = a.weights.to_dense();
    const auto wb = b.weights.to_dense();
    for (std::size_t j = 0; j < wa.size(); ++j) EXPECT_NEAR(wa[j], -wb[j], 1e-6);
    EXPECT_NEAR(a.bias, -b.bias, 1e-6);
  }
}

TEST(SolverProperties, DeterministicAndWarmStartConsistent) {
  const auto p = random_problem(90, 7, 4242);
  const auto a = fit_l1_logistic(p.binary(1.0), SolverConfig{});
  const auto b = fit_l1_logistic(p.binary(1.0), SolverConfig{});
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
  const auto warm = fit_l1_logistic(p.binary(1.0), SolverConfig{}, DecisionParams{a.weights, a.bias});
  EXPECT_LE(warm.diagnostics.iterations, 1);
  EXPECT_NEAR(warm.diagnostics.objective, a.diagnostics.objective, 1e-9 * a.diagnostics.objective);
}
