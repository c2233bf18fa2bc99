#pragma once

// Integral transient stability index and its gradient with respect to the
// controllable generator outputs. The trajectory part of the gradient comes
// from a backward co-state integration; the dependence of the initial state
// and network parameters on the dispatch is differentiated numerically
// through the (cheap) power-flow + initialization pipeline.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tsb/grid.hpp"
#include "tsb/tds.hpp"

namespace tsb {

struct IndexResult {
  double phi = 0.0;              // rad^2 s
  int lambda = 1;
  std::vector<int> argmax_gen;   // per step
  std::vector<bool> clip_mask;   // per step, true where theta < 0 was clipped
};

/// theta(t) = lambda * (delta_max^2 - max_i (delta_i - coi)^2), integrated after
/// clipping at zero with the composite trapezoid rule on the simulation grid.
IndexResult transient_index(const Trajectory& traj, const StabilityVerdict& verdict, const SimConfig& cfg);

enum class GradientMethod { Adjoint, FiniteDifference };

struct GradientResult {
  std::vector<double> grad;  // rad^2 s per MW, one entry per controllable generator
  GradientMethod method = GradientMethod::Adjoint;
  double costate_terminal_norm = 0.0;
  bool divergent = false;          // forward trajectory truncated
  std::vector<bool> one_sided;     // finite differences only
  bool label_changed = false;      // finite differences straddled the stability boundary
};

/// Derivative of the swing-model parameters with respect to one controllable
/// variable (per MW).
struct ParamDerivative {
  std::vector<double> dpm;
  std::vector<double> demf;
  std::vector<double> ddelta0;
  Eigen::MatrixXd dg_fault, db_fault;
  Eigen::MatrixXd dg_post, db_post;

  static ParamDerivative zero(std::size_t generators);
};

struct AdjointOptions {
  double init_step_mw = 1e-2;  // central-difference step through power flow + init
};

/// Everything computed for one (operating point, contingency) evaluation.
struct OpAnalysis {
  bool converged = false;
  bool feasible = false;  // converged and statically feasible
  PowerFlowSolution power_flow;
  StaticLimitsReport limits;
  std::optional<DynamicInit> init;
  Trajectory trajectory;
  StabilityVerdict verdict;
  IndexResult index;
};

/// Power flow, static screen, TDS and index. Never throws for infeasible points.
OpAnalysis analyze_op(const GridCase& c, const OperatingPoint& op, const Contingency& cont, const SimConfig& cfg);

/// Numerical derivative of the initialization pipeline for each controllable
/// generator. Throws InfeasibleError when neither side of a probe converges.
std::vector<ParamDerivative> init_parameter_derivatives(const GridCase& c, const OperatingPoint& op,
                                                        const Contingency& cont, double step_mw);

/// Backward co-state pass over an already simulated trajectory.
GradientResult adjoint_gradient(const DynamicInit& init, const Contingency& cont, const SimConfig& cfg,
                                const Trajectory& traj, const IndexResult& index,
                                const std::vector<ParamDerivative>& dparams);

/// Full pipeline: forward simulation, co-state pass and initialization coupling.
/// Throws InfeasibleError for non-converged or statically infeasible points.
GradientResult adjoint_gradient(const GridCase& c, const OperatingPoint& op, const Contingency& cont,
                                const SimConfig& cfg, const AdjointOptions& opts = {});

/// Same as above, reusing an analysis that was already computed for `op`.
GradientResult adjoint_gradient(const GridCase& c, const OperatingPoint& op, const Contingency& cont,
                                const SimConfig& cfg, const OpAnalysis& analysis,
                                const AdjointOptions& opts = {});

using IndexFunction = std::function<std::optional<double>(const std::vector<double>&)>;

/// Central differences of an arbitrary index; coordinates whose perturbed
/// evaluation returns nullopt fall back to a one-sided difference.
GradientResult fd_gradient(const IndexFunction& phi, const std::vector<double>& u, double h);

/// Central differences of the grid index. Points outside generator limits or
/// statically infeasible count as unavailable.
GradientResult fd_gradient(const GridCase& c, const OperatingPoint& op, const Contingency& cont,
                           const SimConfig& cfg, double h);

/// True if the argmax generator changes within two steps of clearing.
bool argmax_switch_near_clearing(const IndexResult& index, std::size_t clearing_step);

}  // namespace tsb
