#pragma once

// Fixed-step time-domain simulation of the classical swing equations on the
// Kron-reduced network, centre-of-inertia frame and rotor-angle stability
// classification.

#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tsb/grid.hpp"

namespace tsb {

/// Bus fault cleared by tripping a branch. A contingency without a fault bus
/// keeps the pre-fault network during the "fault-on" interval; without a
/// tripped branch the post-fault network equals the pre-fault one.
struct Contingency {
  std::string id;
  std::optional<int> fault_bus;
  std::optional<std::string> tripped_branch;
  double t_clear = 0.2;  // s
};

/// Throws ValidationError; `require_endpoint` enforces that the faulted bus is
/// an endpoint of the tripped branch.
void validate_contingency(const GridCase& c, const Contingency& cont, bool require_endpoint = true);

struct SimConfig {
  double t_end = 5.0;                      // s
  double dt = 0.005;                       // s
  double delta_max = std::numbers::pi;     // rad
  double omega_s = 2.0 * std::numbers::pi * 60.0;  // rad/s
};

/// Throws ConfigError when the grid does not land on t_clear or bounds are off.
void validate_sim_config(const SimConfig& cfg, double t_clear);

struct Trajectory {
  std::vector<double> times;
  Eigen::MatrixXd delta;  // steps x generators, rad
  Eigen::MatrixXd omega;  // steps x generators, pu
  std::vector<double> coi;
  bool divergent = false;  // truncated at the first non-finite state

  std::size_t steps() const { return times.size(); }
  std::size_t generators() const { return static_cast<std::size_t>(delta.cols()); }
};

struct StabilityVerdict {
  bool stable = true;
  int lambda = 1;
  std::optional<double> first_violation_time;
  double max_excursion = 0.0;  // rad, max |delta_i - coi|
};

/// Right-hand side of the swing equations for one network topology.
/// State layout: [delta_1..delta_n, omega_1..omega_n].
class SwingModel {
 public:
  SwingModel(std::vector<double> emf, std::vector<double> pm, std::vector<double> inertia,
             std::vector<double> damping, const ComplexMatrix& y_red, double omega_s);

  std::size_t generators() const { return emf_.size(); }

  void rhs(const Eigen::VectorXd& x, Eigen::VectorXd& dx) const;
  /// Electrical power P_e,i(delta).
  void electrical_power(const Eigen::VectorXd& x, Eigen::VectorXd& pe) const;
  /// dP_e,i / d delta_k.
  void electrical_power_jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& dpe) const;

  const std::vector<double>& emf() const { return emf_; }
  const std::vector<double>& pm() const { return pm_; }
  const std::vector<double>& inertia() const { return inertia_; }
  const std::vector<double>& damping() const { return damping_; }
  const Eigen::MatrixXd& conductance() const { return g_; }
  const Eigen::MatrixXd& susceptance() const { return b_; }
  double omega_s() const { return omega_s_; }

 private:
  std::vector<double> emf_, pm_, inertia_, damping_;
  Eigen::MatrixXd g_, b_;
  double omega_s_;
};

/// Initial state vector [delta0, omega0].
Eigen::VectorXd initial_state(const DynamicInit& init);

/// Number of RK4 steps spent on the fault-on network; throws ConfigError when
/// dt does not divide t_clear.
std::size_t clearing_step(const SimConfig& cfg, double t_clear);

Trajectory simulate(const DynamicInit& init, const Contingency& cont, const SimConfig& cfg);

std::vector<double> coi_series(const Trajectory& traj, const std::vector<GeneratorParams>& gens);
std::vector<double> coi_series(const Eigen::MatrixXd& delta, const std::vector<double>& inertia);

StabilityVerdict classify_stability(const Trajectory& traj, const SimConfig& cfg);

/// CSV with header `t,delta_1..delta_N,omega_1..omega_N,coi`.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);

}  // namespace tsb
