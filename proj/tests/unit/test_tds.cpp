#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "tsb/error.hpp"
#include "tsb/tds.hpp"

using namespace tsb;
using tsbtest::case9;

namespace {

// Lossless two-machine system (no loads, r = 0, b = 0): its post-fault motion
// conserves W = sum 0.5 T_J omega_s (w-1)^2 - sum pm delta - E1 E2 B12 cos(d1 - d2).
GridCase lossless_pair() {
  return parse_case(R"({"name":"pair","base_mva":100,
    "buses":[{"id":1,"v_setpoint":1.0,"v_min":0.9,"v_max":1.1},{"id":2,"v_setpoint":1.0,"v_min":0.9,"v_max":1.1},{"id":3,"v_setpoint":1.0,"v_min":0.9,"v_max":1.1}],
    "branches":[{"id":"1-3a","from":1,"to":3,"r":0,"x":0.3,"b":0,"rating":999},
                {"id":"1-3b","from":1,"to":3,"r":0,"x":0.3,"b":0,"rating":999},
                {"from":3,"to":2,"r":0,"x":0.1,"b":0,"rating":999}],
    "generators":[{"bus":1,"tj":8,"xd_prime":0.2,"damping":0,"p_min":-300,"p_max":300,"q_min":-300,"q_max":300,"slack":true},
                  {"bus":2,"tj":4,"xd_prime":0.25,"damping":0,"p_min":0,"p_max":300,"q_min":-300,"q_max":300,"slack":false}],
    "loads":[]})");
}

struct Sim {
  DynamicInit init;
  Trajectory traj;
};

Sim run(const GridCase& c, const OperatingPoint& op, const Contingency& k, const SimConfig& cfg) {
  const auto sol = solve_power_flow(c, op);
  EXPECT_TRUE(sol.converged);
  Sim s{init_dynamic_state(c, op, sol, &k), {}};
  s.traj = simulate(s.init, k, cfg);
  return s;
}

}  // namespace

TEST(Simulate, EquilibriumIsStationaryWithoutDisturbance) {
  const auto& c = case9();
  const Contingency none{"none", std::nullopt, std::nullopt, 0.2};
  const auto s = run(c, reference_op(c, {163.0, 85.0}), none, SimConfig{});
  for (std::size_t n = 0; n < s.traj.steps(); ++n) {
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(s.traj.delta(n, i), s.init.delta0[i], 1e-8);
      EXPECT_NEAR(s.traj.omega(n, i), 1.0, 1e-10);
    }
  }
}

TEST(Simulate, GridLayoutAndClearingStep) {
  SimConfig cfg;
  EXPECT_EQ(clearing_step(cfg, 0.2), 40u);
  cfg.dt = 0.003;
  EXPECT_THROW(clearing_step(cfg, 0.2), ConfigError);
  cfg = SimConfig{};
  const auto& c = case9();
  const auto s = run(c, reference_op(c, {163.0, 85.0}), tsbtest::bus5_fault(), cfg);
  EXPECT_EQ(s.traj.steps(), 1001u);
  EXPECT_DOUBLE_EQ(s.traj.times.front(), 0.0);
  EXPECT_NEAR(s.traj.times.back(), 5.0, 1e-12);
  EXPECT_FALSE(s.traj.divergent);
}

TEST(Simulate, EnergyConservedOnLosslessPair) {
  const auto c = lossless_pair();
  const Contingency k{"f3", 3, std::string("1-3a"), 0.1};
  SimConfig cfg;
  const auto s = run(c, reference_op(c, {60.0}), k, cfg);
  SwingModel post(s.init.emf_mag, s.init.pm, s.init.inertia, s.init.damping, s.init.y_post, cfg.omega_s);
  EXPECT_LT(post.conductance().cwiseAbs().maxCoeff(), 1e-12);
  const double b12 = post.susceptance()(0, 1);
  const double e1e2 = s.init.emf_mag[0] * s.init.emf_mag[1];
  auto energy = [&](std::size_t n) {
    double w = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      const double dw = s.traj.omega(n, i) - 1.0;
      w += 0.5 * s.init.inertia[i] * cfg.omega_s * dw * dw - s.init.pm[i] * s.traj.delta(n, i);
    }
    return w - e1e2 * b12 * std::cos(s.traj.delta(n, 0) - s.traj.delta(n, 1));
  };
  const std::size_t nc = clearing_step(cfg, k.t_clear);
  const double w0 = energy(nc);
  double drift = 0.0;
  for (std::size_t n = nc; n < s.traj.steps(); ++n) drift = std::max(drift, std::abs(energy(n) - w0));
  EXPECT_LT(drift, 1e-6 * std::max(1.0, std::abs(w0)));
  // and the fault actually excited the rotors
  double swing = 0.0;
  for (std::size_t n = nc; n < s.traj.steps(); ++n) swing = std::max(swing, std::abs(s.traj.omega(n, 1) - 1.0));
  EXPECT_GT(swing, 1e-4);
}

TEST(Simulate, FourthOrderConvergence) {
  const auto& c = case9();
  const auto op = reference_op(c, {163.0, 85.0});
  const auto k = tsbtest::bus5_fault();
  auto sim = [&](double dt) {
    SimConfig cfg;
    cfg.dt = dt;
    cfg.t_end = 2.0;
    return run(c, op, k, cfg).traj;
  };
  const double dt_ref = 0.000625;
  const auto ref = sim(dt_ref);
  // max-norm error over the shared time grid
  auto error = [&](double dt) {
    const auto t = sim(dt);
    const auto stride = static_cast<Eigen::Index>(std::llround(dt / dt_ref));
    double e = 0.0;
    for (Eigen::Index n = 0; n < static_cast<Eigen::Index>(t.steps()); ++n)
      for (Eigen::Index i = 0; i < 3; ++i) e = std::max(e, std::abs(t.delta(n, i) - ref.delta(n * stride, i)));
    return e;
  };
  const double e1 = error(0.02), e2 = error(0.01), e3 = error(0.005);
  EXPECT_NEAR(e1 / e2, 16.0, 2.0);
  EXPECT_NEAR(e2 / e3, 16.0, 2.0);
}

TEST(Simulate, CoiIdentityOnRandomTrajectories) {
  const auto& c = case9();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(20.0, 220.0);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto op = reference_op(c, {u(rng), u(rng)});
    const auto sol = solve_power_flow(c, op);
    if (!sol.converged) continue;
    const auto k = tsbtest::bus5_fault();
    const auto init = init_dynamic_state(c, op, sol, &k);
    const auto traj = simulate(init, k, SimConfig{});
    double tj = 0.0;
    for (double m : init.inertia) tj += m;
    for (std::size_t n = 0; n < traj.steps(); ++n) {
      double s = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        s += init.inertia[i] * (traj.delta(n, i) - traj.coi[n]);
        scale += init.inertia[i] * std::abs(traj.delta(n, i));
      }
      ASSERT_LE(std::abs(s), 1e-9 * std::max(tj, scale));
    }
    ++checked;
  }
  EXPECT_GE(checked, 10);
}

TEST(Stability, ClassifiesNineBusFault) {
  const auto& c = case9();
  const auto k = tsbtest::bus5_fault();
  SimConfig cfg;
  const auto stable = run(c, reference_op(c, {163.0, 85.0}), k, cfg);
  const auto v = classify_stability(stable.traj, cfg);
  EXPECT_TRUE(v.stable);
  EXPECT_EQ(v.lambda, 1);
  EXPECT_FALSE(v.first_violation_time.has_value());
  EXPECT_LT(v.max_excursion, cfg.delta_max);

  const auto unstable = run(c, reference_op(c, {20.0, 240.0}), k, cfg);
  const auto w = classify_stability(unstable.traj, cfg);
  EXPECT_FALSE(w.stable);
  EXPECT_EQ(w.lambda, -1);
  ASSERT_TRUE(w.first_violation_time.has_value());
  EXPECT_GT(*w.first_violation_time, 0.0);
}

TEST(Stability, ClassifierOnSyntheticTrajectory) {
  Trajectory t;
  t.times = {0.0, 0.1, 0.2};
  t.delta = Eigen::MatrixXd::Zero(3, 2);
  t.omega = Eigen::MatrixXd::Ones(3, 2);
  t.coi = {0.0, 0.0, 0.0};
  SimConfig cfg;
  EXPECT_TRUE(classify_stability(t, cfg).stable);
  t.delta(2, 0) = 3.5;
  const auto v = classify_stability(t, cfg);
  EXPECT_FALSE(v.stable);
  ASSERT_TRUE(v.first_violation_time);
  EXPECT_DOUBLE_EQ(*v.first_violation_time, 0.2);
}

TEST(Trajectory, CsvHeader) {
  const auto& c = case9();
  SimConfig cfg;
  cfg.t_end = 0.3;
  const auto s = run(c, reference_op(c, {163.0, 85.0}), tsbtest::bus5_fault(), cfg);
  std::ostringstream os;
  write_trajectory_csv(s.traj, os);
  std::string header;
  std::getline(std::istringstream(os.str()) >> std::ws, header);
  EXPECT_EQ(header, "t,delta_1,delta_2,delta_3,omega_1,omega_2,omega_3,coi");
}

TEST(Contingency, Validation) {
  const auto& c = case9();
  EXPECT_NO_THROW(validate_contingency(c, tsbtest::bus5_fault()));
  EXPECT_THROW(validate_contingency(c, {"x", 5, std::string("8-9"), 0.2}), ValidationError);
  EXPECT_NO_THROW(validate_contingency(c, {"x", 5, std::string("8-9"), 0.2}, false));
  EXPECT_THROW(validate_contingency(c, {"x", 42, std::string("5-7"), 0.2}), ValidationError);
  EXPECT_THROW(validate_contingency(c, {"x", 5, std::string("nope"), 0.2}), ValidationError);
}
