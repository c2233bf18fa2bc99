#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "tsb/error.hpp"
#include "tsb/stability_index.hpp"

using namespace tsb;
using tsbtest::case9;

namespace {

Trajectory constant_excursion(double c, double t_end, double dt) {
  Trajectory t;
  const auto n = static_cast<std::size_t>(std::llround(t_end / dt)) + 1;
  t.delta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 2);
  t.omega = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n), 2);
  for (std::size_t k = 0; k < n; ++k) {
    t.times.push_back(static_cast<double>(k) * dt);
    t.delta(static_cast<Eigen::Index>(k), 0) = c;
    t.coi.push_back(0.0);
  }
  return t;
}

}  // namespace

TEST(TransientIndex, StableAtRestIntegratesDeltaMaxSquared) {
  SimConfig cfg;
  const auto t = constant_excursion(0.0, cfg.t_end, cfg.dt);
  const auto v = classify_stability(t, cfg);
  const auto r = transient_index(t, v, cfg);
  EXPECT_EQ(r.lambda, 1);
  EXPECT_NEAR(r.phi, 5.0 * std::numbers::pi * std::numbers::pi, 1e-9);
  for (bool clipped : r.clip_mask) EXPECT_FALSE(clipped);
}

TEST(TransientIndex, ConstantViolation) {
  SimConfig cfg;
  const double c = 4.0;
  const auto t = constant_excursion(c, cfg.t_end, cfg.dt);
  const auto v = classify_stability(t, cfg);
  ASSERT_FALSE(v.stable);
  const auto r = transient_index(t, v, cfg);
  EXPECT_EQ(r.lambda, -1);
  EXPECT_NEAR(r.phi, cfg.t_end * (c * c - cfg.delta_max * cfg.delta_max), 1e-9);
}

TEST(TransientIndex, ClipsNegativeIntegrand) {
  SimConfig cfg;
  auto t = constant_excursion(0.0, cfg.t_end, cfg.dt);
  // unstable only in the last second: before that theta < 0 is clipped away
  for (std::size_t k = 0; k < t.steps(); ++k) {
    t.delta(static_cast<Eigen::Index>(k), 0) = t.times[k] >= 4.0 - 1e-9 ? 4.0 : 1.0;
  }
  const auto v = classify_stability(t, cfg);
  const auto r = transient_index(t, v, cfg);
  EXPECT_EQ(r.lambda, -1);
  const double viol = 16.0 - cfg.delta_max * cfg.delta_max;
  // trapezoid over [4, 5] plus the half-interval ramp before t = 4
  EXPECT_NEAR(r.phi, viol * 1.0 + 0.5 * cfg.dt * viol, 1e-9);
  EXPECT_TRUE(r.clip_mask.front());
  EXPECT_FALSE(r.clip_mask.back());
}

TEST(TransientIndex, ArgmaxTiesToLowestIndex) {
  SimConfig cfg;
  auto t = constant_excursion(0.5, 0.01, cfg.dt);
  for (std::size_t k = 0; k < t.steps(); ++k) t.delta(static_cast<Eigen::Index>(k), 1) = -0.5;
  const auto r = transient_index(t, classify_stability(t, cfg), cfg);
  for (int g : r.argmax_gen) EXPECT_EQ(g, 0);
}

TEST(TransientIndex, NineBusMatchesFineQuadrature) {
  const auto& c = case9();
  const auto op = reference_op(c, {163.0, 85.0});
  SimConfig cfg;
  const auto a = analyze_op(c, op, tsbtest::bus5_fault(), cfg);
  ASSERT_TRUE(a.feasible);
  SimConfig fine = cfg;
  fine.dt = cfg.dt / 10.0;
  const auto b = analyze_op(c, op, tsbtest::bus5_fault(), fine);
  EXPECT_NEAR(a.index.phi, b.index.phi, 5e-3 * std::abs(b.index.phi));
  EXPECT_GE(a.index.phi, 0.0);
}

TEST(TransientIndex, NonNegativeAndStableNeverClips) {
  const auto& c = case9();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 300.0);
  int stable = 0;
  for (int k = 0; k < 30; ++k) {
    const auto a = analyze_op(c, reference_op(c, {u(rng), u(rng)}), tsbtest::bus5_fault(), SimConfig{});
    if (!a.feasible) continue;
    EXPECT_GE(a.index.phi, 0.0);
    if (a.verdict.stable) {
      ++stable;
      for (bool clipped : a.index.clip_mask) EXPECT_FALSE(clipped);
    }
  }
  EXPECT_GT(stable, 0);
}

TEST(FdGradient, QuadraticIsExact) {
  const IndexFunction phi = [](const std::vector<double>& u) -> std::optional<double> {
    double s = 0.0;
    for (double v : u) s += v * v;
    return s;
  };
  const std::vector<double> u{1.5, -2.0, 0.25};
  const auto g = fd_gradient(phi, u, 0.1);
  ASSERT_EQ(g.grad.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(g.grad[i], 2.0 * u[i], 1e-10);
    EXPECT_FALSE(g.one_sided[i]);
  }
}

TEST(FdGradient, OneSidedFallback) {
  const IndexFunction phi = [](const std::vector<double>& u) -> std::optional<double> {
    if (u[0] > 1.0) return std::nullopt;
    return 3.0 * u[0];
  };
  const auto g = fd_gradient(phi, {1.0}, 0.01);
  EXPECT_TRUE(g.one_sided[0]);
  EXPECT_NEAR(g.grad[0], 3.0, 1e-9);
}

TEST(FdGradient, SecondOrderRichardson) {
  const IndexFunction phi = [](const std::vector<double>& u) -> std::optional<double> { return std::sin(u[0]); };
  const double x = 0.7, exact = std::cos(x);
  const double e1 = std::abs(fd_gradient(phi, {x}, 0.1).grad[0] - exact);
  const double e2 = std::abs(fd_gradient(phi, {x}, 0.05).grad[0] - exact);
  EXPECT_NEAR(e1 / e2, 4.0, 0.05);
}

TEST(Adjoint, TerminalCostateAndDeterminism) {
  const auto& c = case9();
  const auto op = reference_op(c, {163.0, 85.0});
  const auto g = adjoint_gradient(c, op, tsbtest::bus5_fault(), SimConfig{});
  EXPECT_EQ(g.costate_terminal_norm, 0.0);
  EXPECT_EQ(g.method, GradientMethod::Adjoint);
  const auto h = adjoint_gradient(c, op, tsbtest::bus5_fault(), SimConfig{});
  EXPECT_EQ(g.grad, h.grad);
}

TEST(Adjoint, NullParameterHasZeroComponent) {
  const auto& c = case9();
  const auto op = reference_op(c, {163.0, 85.0});
  const Contingency k = tsbtest::bus5_fault();
  SimConfig cfg;
  const auto a = analyze_op(c, op, k, cfg);
  ASSERT_TRUE(a.feasible);
  auto dp = init_parameter_derivatives(c, op, k, 1e-2);
  dp.push_back(ParamDerivative::zero(c.generators.size()));
  const auto g = adjoint_gradient(*a.init, k, cfg, a.trajectory, a.index, dp);
  ASSERT_EQ(g.grad.size(), 3u);
  EXPECT_LE(std::abs(g.grad[2]), 1e-12);
}

TEST(Adjoint, MatchesCentralDifferences) {
  const auto& c = case9();
  const Contingency k = tsbtest::bus5_fault();
  SimConfig cfg;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(10.0, 290.0);
  int compared = 0;
  for (int trial = 0; trial < 60 && compared < 6; ++trial) {
    const auto op = reference_op(c, {u(rng), u(rng)});
    const auto a = analyze_op(c, op, k, cfg);
    if (!a.feasible || a.trajectory.divergent) continue;
    if (argmax_switch_near_clearing(a.index, clearing_step(cfg, k.t_clear))) continue;
    // h = 0.1 keeps the truncation error well below the tolerance near the boundary
    const auto fd = fd_gradient(c, op, k, cfg, 0.1);
    if (fd.label_changed) continue;
    if (std::any_of(fd.one_sided.begin(), fd.one_sided.end(), [](bool b) { return b; })) continue;
    const auto ad = adjoint_gradient(c, op, k, cfg, a);
    double inf = 0.0;
    for (double v : fd.grad) inf = std::max(inf, std::abs(v));
    for (std::size_t i = 0; i < fd.grad.size(); ++i) {
      if (std::abs(fd.grad[i]) <= 1e-3 * inf) continue;
      EXPECT_LE(std::abs(ad.grad[i] - fd.grad[i]) / std::abs(fd.grad[i]), 5e-2)
          << "u=(" << op.gen_p[0] << "," << op.gen_p[1] << ") component " << i;
    }
    ++compared;
  }
  EXPECT_EQ(compared, 6);
}

TEST(Adjoint, InfeasibleOperatingPointThrows) {
  const auto& c = case9();
  EXPECT_THROW(adjoint_gradient(c, reference_op(c, {300.0, 300.0}), tsbtest::bus5_fault(), SimConfig{}),
               InfeasibleError);
}
