#pragma once

// Static network model: case data, AC power flow, static limit screening,
// classical-machine initialization and network reduction onto generator
// internal nodes.

#include <complex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace tsb {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

struct Bus {
  int id = 0;
  double v_setpoint = 1.0;  // pu; used for PV/slack buses and as the flat-start magnitude
  double v_min = 0.9;
  double v_max = 1.1;
};

struct Branch {
  std::string id;  // defaults to "<from>-<to>"
  int from = 0;
  int to = 0;
  double r = 0.0;  // pu on base_mva
  double x = 0.0;
  double b = 0.0;  // total line charging
  double rating = 0.0;
};

struct GeneratorParams {
  int bus = 0;
  double inertia_tj = 0.0;  // s, T_J = 2H
  double xd_prime = 0.0;    // pu
  double damping = 0.0;     // pu torque per pu speed
  double p_min = 0.0;       // MW
  double p_max = 0.0;
  double q_min = 0.0;  // MVAr
  double q_max = 0.0;
  bool is_slack = false;
};

struct Load {
  int bus = 0;
  double p_mw = 0.0;
  double q_mvar = 0.0;
};

struct GridCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<GeneratorParams> generators;
  std::vector<Load> loads;

  // Index helpers; throw ValidationError for unknown ids.
  std::size_t bus_index(int bus_id) const;
  std::size_t branch_index(std::string_view branch_id) const;
  std::size_t slack_index() const;
  /// Generator indices that are controllable (all but the slack), in case order.
  std::vector<std::size_t> controllable() const;
  std::size_t n_controllable() const { return generators.empty() ? 0 : generators.size() - 1; }

  /// Lower/upper active-power limits of the controllable generators (MW).
  std::vector<double> u_min() const;
  std::vector<double> u_max() const;
};

/// Controllable generator outputs (MW, non-slack order) plus per-load multipliers.
struct OperatingPoint {
  std::vector<double> gen_p;
  std::vector<double> load_scale;

  bool operator==(const OperatingPoint&) const = default;
};

/// Operating point with the given controllable dispatch and every load at its
/// reference level.
OperatingPoint reference_op(const GridCase& c, std::vector<double> gen_p);

/// Throws ContractError when dimensions or generator limits are violated.
void validate_op(const GridCase& c, const OperatingPoint& op);

struct PowerFlowOptions {
  double tolerance = 1e-8;  // pu, infinity norm of the mismatch
  int max_iterations = 20;
};

struct PowerFlowSolution {
  ComplexVector bus_voltages;   // pu, case bus order
  double slack_p = 0.0;         // MW
  std::vector<double> gen_p;    // MW, all generators in case order
  std::vector<double> gen_q;    // MVAr, all generators in case order
  bool converged = false;
  int iterations = 0;
  double mismatch = 0.0;  // final infinity norm, pu
};

enum class ViolationKind { Voltage, GenQ, SlackP };

struct Violation {
  ViolationKind kind;
  int id;  // bus id for voltage violations, generator index otherwise
  double value;
  double bound;
};

struct StaticLimitsReport {
  bool feasible = true;
  std::vector<Violation> violations;
};

struct TopologyVariant {
  enum class Kind { PreFault, FaultOn, PostFault };
  Kind kind = Kind::PreFault;
  int fault_bus = 0;            // FaultOn
  std::string tripped_branch;   // PostFault; may be empty for "no trip"

  static TopologyVariant pre_fault() { return {}; }
  static TopologyVariant fault_on(int bus) { return {Kind::FaultOn, bus, {}}; }
  static TopologyVariant post_fault(std::string branch) {
    return {Kind::PostFault, 0, std::move(branch)};
  }
};

/// Bus admittance matrix together with the ids of the buses its rows refer to.
struct Admittance {
  ComplexMatrix y;
  std::vector<int> bus_ids;
};

struct DynamicInit {
  std::vector<double> emf_mag;  // pu
  std::vector<double> delta0;   // rad
  std::vector<double> omega0;   // pu
  std::vector<double> pm;       // pu on base_mva
  std::vector<double> inertia;  // s, copied from the case
  std::vector<double> damping;
  ComplexMatrix y_pre;
  ComplexMatrix y_fault;
  ComplexMatrix y_post;
};

struct Contingency;

GridCase parse_case(std::string_view text);
GridCase load_case_file(const std::string& path);
std::string case_to_json(const GridCase& c);

/// Throws ValidationError describing the first violated invariant.
void validate_case(const GridCase& c);

Admittance build_admittance(const GridCase& c, const TopologyVariant& variant);

PowerFlowSolution solve_power_flow(const GridCase& c, const OperatingPoint& op,
                                   const PowerFlowOptions& opts = {});

/// Recomputed complex power mismatch S_spec - S_calc at every bus (pu).
ComplexVector power_mismatch(const GridCase& c, const OperatingPoint& op,
                             const ComplexVector& voltages, double slack_p_mw,
                             const std::vector<double>& gen_q_mvar);

StaticLimitsReport check_static_limits(const GridCase& c, const PowerFlowSolution& sol);

/// Classical-machine initialization. Without a contingency the fault-on and
/// post-fault matrices equal the pre-fault one.
DynamicInit init_dynamic_state(const GridCase& c, const OperatingPoint& op,
                               const PowerFlowSolution& sol,
                               const Contingency* cont = nullptr);

/// Schur complement of `y` onto the nodes in `keep` (in the given order).
ComplexMatrix kron_reduce(const ComplexMatrix& y, const std::vector<std::size_t>& keep);

/// Electrical power of every machine for rotor angles `delta` (pu).
std::vector<double> electrical_power(const ComplexMatrix& y_red, const std::vector<double>& emf,
                                     const std::vector<double>& delta);

}  // namespace tsb
