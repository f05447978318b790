// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gaussvis/fixtures.hpp"
#include "gaussvis/optimizer.hpp"

using namespace gaussvis;

namespace {

Objective quadratic(const Eigen::MatrixXd& a) {
  auto value = [a](std::span<const double> x) {
    const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    return 0.5 * v.dot(a * v);
  };
  auto vg = [a](std::span<const double> x, std::vector<double>& g) {
    const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::VectorXd av = a * v;
    g.assign(av.data(), av.data() + av.size());
    return 0.5 * v.dot(av);
  };
  return Objective{value, vg};
}

Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd b(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = u(rng);
  return b * b.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

double rosenbrock(std::span<const double> x) {
  return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
}

Objective rosenbrock_objective() {
  return Objective{rosenbrock, [](std::span<const double> x, std::vector<double>& g) {
                     g = {-400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]), 200.0 * (x[1] - x[0] * x[0])};
                     return rosenbrock(x);
                   }};
}

}  // namespace

TEST(Minimize, ConvexQuadratic) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd a = random_spd(rng, 5);
    OptimConfig cfg;
    cfg.gradient_tolerance = 1e-10;
    const OptimResult r = minimize(quadratic(a), {1.0, -2.0, 0.5, 3.0, -1.0}, cfg);
    EXPECT_LE(r.trace.records.size() - 1, 50u);
    EXPECT_EQ(r.trace.reason, StopReason::gradient_tolerance);
    for (double v : r.theta) EXPECT_NEAR(v, 0.0, 1e-8);
  }
}

TEST(Minimize, Rosenbrock) {
  OptimConfig cfg;
  cfg.max_iterations = 5000;
  cfg.gradient_tolerance = 1e-9;
  const OptimResult r = minimize(rosenbrock_objective(), {-1.2, 1.0}, cfg);
  EXPECT_LT(r.energy, 1e-6);
  EXPECT_LE(r.trace.records.back().iteration, 5000);
}

TEST(Minimize, NeverWorseThanStart) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> x0{u(rng), u(rng)};
    OptimConfig cfg;
    cfg.max_iterations = 5 + i;
    const OptimResult r = minimize(rosenbrock_objective(), x0, cfg);
    EXPECT_LE(r.energy, rosenbrock(x0));
    for (std::size_t k = 1; k < r.trace.records.size(); ++k)
      EXPECT_LE(r.trace.records[k].energy, r.trace.records[k - 1].energy);
  }
}

TEST(LineSearch, AcceptedStepsSatisfySufficientDecrease) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  const Objective obj = rosenbrock_objective();
  for (bool refine : {false, true})
    for (int i = 0; i < 100; ++i) {
      const std::vector<double> x{u(rng), u(rng)};
      std::vector<double> g;
      const double f0 = obj.value_and_gradient(x, g);
      const std::vector<double> d{-g[0], -g[1]};
      const double slope = -(g[0] * g[0] + g[1] * g[1]);
      OptimConfig cfg;
      cfg.refine_step = refine;
      const LineSearchResult ls = line_search(obj.value, x, d, f0, slope, 1.0, cfg);
      ASSERT_TRUE(ls.success);
      const std::vector<double> xa{x[0] + ls.alpha * d[0], x[1] + ls.alpha * d[1]};
      EXPECT_EQ(ls.value, rosenbrock(xa));
      EXPECT_LE(ls.value, f0 + cfg.sufficient_decrease * ls.alpha * slope);
    }
}

TEST(LineSearch, GradientVariantReturnsGradientOfAcceptedPoint) {
  const Objective obj = rosenbrock_objective();
  const std::vector<double> x{-1.0, 0.5};
  std::vector<double> g;
  const double f0 = obj.value_and_gradient(x, g);
  const std::vector<double> d{-g[0], -g[1]};
  const LineSearchResult ls =
      line_search(obj.value, &obj.value_and_gradient, x, d, f0, -(g[0] * g[0] + g[1] * g[1]), 1.0, OptimConfig{});
  ASSERT_TRUE(ls.success);
  std::vector<double> ref;
  obj.value_and_gradient(std::vector<double>{x[0] + ls.alpha * d[0], x[1] + ls.alpha * d[1]}, ref);
  EXPECT_EQ(ls.gradient, ref);
}

TEST(LineSearch, RejectsAscentDirection) {
  const Objective obj = rosenbrock_objective();
  const std::vector<double> x{0.0, 0.0}, d{1.0, 0.0};
  EXPECT_FALSE(line_search(obj.value, x, d, 1.0, 0.5, 1.0, OptimConfig{}).success);
}

TEST(Minimize, ReducesToSteepestDescent) {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd a = random_spd(rng, 4);
  const Objective obj = quadratic(a);
  OptimConfig cfg;
  cfg.preconditioner = Preconditioner::none;
  cfg.restart_interval = 1;
  cfg.max_iterations = 15;
  cfg.initial_step = 0.1;
  cfg.refine_step = false;
  const OptimResult r = minimize(obj, {1.0, 2.0, -1.0, 0.5}, cfg);

  // Reference: x <- x - alpha g with the same line search and step guess.
  std::vector<double> x{1.0, 2.0, -1.0, 0.5}, g;
  double f = obj.value_and_gradient(x, g);
  double prev_alpha = cfg.initial_step, prev_slope = 0.0;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    std::vector<double> d(4);
    double slope = 0.0;
    for (int i = 0; i < 4; ++i) {
      d[i] = -g[i];
      slope -= g[i] * g[i];
    }
    const double alpha0 = it == 1 ? cfg.initial_step : prev_alpha * prev_slope / slope;
    const LineSearchResult ls = line_search(obj.value, x, d, f, slope, alpha0, cfg);
    ASSERT_TRUE(ls.success);
    for (int i = 0; i < 4; ++i) x[i] += ls.alpha * d[i];
    f = obj.value_and_gradient(x, g);
    prev_alpha = ls.alpha;
    prev_slope = slope;
    EXPECT_EQ(r.trace.records[it].energy, f) << "iteration " << it;
  }
  EXPECT_EQ(r.theta, x);
}

TEST(Minimize, DeterministicTrace) {
  auto run = [] {
    OptimConfig cfg;
    cfg.max_iterations = 300;
    cfg.seed = 42;
    const OptimResult r = minimize(rosenbrock_objective(), {-1.2, 1.0}, cfg);
    std::ostringstream os;
    r.trace.write_csv(os);
    return os.str();
  };
  const std::string a = run();
  EXPECT_EQ(a, run());
  EXPECT_EQ(a.substr(0, a.find('\n')), "iteration,energy,grad_norm,step");
}

TEST(Minimize, AbortsOnNonFinite) {
  Objective obj{[](std::span<const double> x) { return x[0] < -1.0 ? std::nan("") : x[0] * x[0] - x[0] * x[0] * x[0] * x[0] * 0.0 + x[0]; },
                [](std::span<const double> x, std::vector<double>& g) {
                  g = {2.0 * x[0] + 1.0};
                  return x[0] < -1.0 ? std::nan("") : x[0] * x[0] + x[0];
                }};
  OptimConfig cfg;
  const OptimResult ok = minimize(obj, {3.0}, cfg);
  EXPECT_FALSE(ok.aborted());

  Objective bad{[](std::span<const double>) { return std::nan(""); },
                [](std::span<const double>, std::vector<double>& g) {
                  g = {1.0};
                  return std::nan("");
                }};
  const OptimResult r = minimize(bad, {0.0}, cfg);
  EXPECT_TRUE(r.aborted());
  EXPECT_EQ(r.trace.records.size(), 1u);
}

TEST(OptimConfig, Validation) {
  OptimConfig c;
  c.backtrack = 1.0;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = OptimConfig{};
  c.gradient_tolerance = 0.0;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = OptimConfig{};
  c.sufficient_decrease = 1.5;
  EXPECT_THROW(validate(c), std::invalid_argument);
}

TEST(Minimize, SphereCubeOverlapInitialization) {
  const auto rig = fixtures::sphere_cube_rig();
  const PoseObjective obj = fixtures::rig_objective(rig);
  const OptimResult r = minimize(make_objective(obj), rig.manual_inits[0], fixtures::rig_optimizer());
  const fixtures::PoseError e = fixtures::pose_error(rig, r.theta);
  EXPECT_LE(e.sphere, 2e-2);
  EXPECT_LE(e.cube, 5e-2);
}

TEST(TrackSequence, FollowsMovingTarget) {
  auto rig = fixtures::sphere_cube_rig({0.1, 48});
  std::vector<PoseObjective> frames;
  std::vector<std::vector<double>> truths;
  for (int t = 0; t < 3; ++t) {
    PoseParams p = rig.mapping;
    p.values[0] += 0.05 * t;
    p.values[3] -= 0.04 * t;
    truths.push_back(p.values);
    const Image target = render(apply_mapping(p, rig.templ), rig.camera);
    EnergyConfig cfg;
    cfg.accel_weight = 1e-3;
    frames.emplace_back(rig.templ, rig.mapping, std::vector<View>{View{rig.camera, target}}, cfg);
  }
  const auto results = track_sequence(frames, rig.truth, fixtures::rig_optimizer());
  ASSERT_EQ(results.size(), 3u);
  for (int t = 0; t < 3; ++t) {
    EXPECT_NEAR(results[t].theta[0], truths[t][0], 2e-2);
    EXPECT_NEAR(results[t].theta[3], truths[t][3], 2e-2);
  }
}
