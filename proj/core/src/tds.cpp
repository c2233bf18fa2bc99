#include "tsb/tds.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "tsb/error.hpp"

namespace tsb {

void validate_contingency(const GridCase& c, const Contingency& cont, bool require_endpoint) {
  if (!(cont.t_clear > 0.0)) throw ValidationError("contingency '" + cont.id + "': t_clear must be positive");
  if (cont.fault_bus) c.bus_index(*cont.fault_bus);
  if (cont.tripped_branch) {
    const auto& br = c.branches[c.branch_index(*cont.tripped_branch)];
    if (require_endpoint && cont.fault_bus && br.from != *cont.fault_bus && br.to != *cont.fault_bus) {
      throw ValidationError("contingency '" + cont.id + "': fault bus is not an endpoint of the tripped branch");
    }
  }
}

std::size_t clearing_step(const SimConfig& cfg, double t_clear) {
  const double ratio = t_clear / cfg.dt;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    throw ConfigError("dt does not divide the clearing time");
  }
  return static_cast<std::size_t>(rounded);
}

void validate_sim_config(const SimConfig& cfg, double t_clear) {
  if (!(cfg.dt > 0.0) || cfg.dt > t_clear + 1e-15) throw ConfigError("dt must lie in (0, t_clear]");
  if (!(cfg.t_end > t_clear)) throw ConfigError("t_end must exceed t_clear");
  if (!(cfg.delta_max > 0.0) || cfg.delta_max > std::numbers::pi + 1e-15) {
    throw ConfigError("delta_max must lie in (0, pi]");
  }
  if (!(cfg.omega_s > 0.0)) throw ConfigError("omega_s must be positive");
  clearing_step(cfg, t_clear);
}

SwingModel::SwingModel(std::vector<double> emf, std::vector<double> pm, std::vector<double> inertia,
                       std::vector<double> damping, const ComplexMatrix& y_red, double omega_s)
    : emf_(std::move(emf)),
      pm_(std::move(pm)),
      inertia_(std::move(inertia)),
      damping_(std::move(damping)),
      g_(y_red.real()),
      b_(y_red.imag()),
      omega_s_(omega_s) {}

void SwingModel::electrical_power(const Eigen::VectorXd& x, Eigen::VectorXd& pe) const {
  const auto n = static_cast<Eigen::Index>(emf_.size());
  pe.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ei = emf_[static_cast<std::size_t>(i)];
    double acc = ei * ei * g_(i, i);
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == i) continue;
      const double d = x(i) - x(k);
      acc += ei * emf_[static_cast<std::size_t>(k)] * (g_(i, k) * std::cos(d) + b_(i, k) * std::sin(d));
    }
    pe(i) = acc;
  }
}

void SwingModel::electrical_power_jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& dpe) const {
  const auto n = static_cast<Eigen::Index>(emf_.size());
  dpe.setZero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ei = emf_[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == i) continue;
      const double d = x(i) - x(k);
      const double ek = emf_[static_cast<std::size_t>(k)];
      const double term = ei * ek * (-g_(i, k) * std::sin(d) + b_(i, k) * std::cos(d));
      dpe(i, i) += term;
      dpe(i, k) = -term;
    }
  }
}

void SwingModel::rhs(const Eigen::VectorXd& x, Eigen::VectorXd& dx) const {
  const auto n = static_cast<Eigen::Index>(emf_.size());
  Eigen::VectorXd pe;
  electrical_power(x, pe);
  dx.resize(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    const double slip = x(n + i) - 1.0;
    dx(i) = omega_s_ * slip;
    dx(n + i) = (pm_[s] - pe(i) - damping_[s] * slip) / inertia_[s];
  }
}

Eigen::VectorXd initial_state(const DynamicInit& init) {
  const auto n = static_cast<Eigen::Index>(init.delta0.size());
  Eigen::VectorXd x(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i) = init.delta0[static_cast<std::size_t>(i)];
    x(n + i) = init.omega0[static_cast<std::size_t>(i)];
  }
  return x;
}

std::vector<double> coi_series(const Eigen::MatrixXd& delta, const std::vector<double>& inertia) {
  double total = 0.0;
  for (double t : inertia) total += t;
  std::vector<double> coi(static_cast<std::size_t>(delta.rows()), 0.0);
  for (Eigen::Index s = 0; s < delta.rows(); ++s) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < delta.cols(); ++i) acc += inertia[static_cast<std::size_t>(i)] * delta(s, i);
    coi[static_cast<std::size_t>(s)] = acc / total;
  }
  return coi;
}

std::vector<double> coi_series(const Trajectory& traj, const std::vector<GeneratorParams>& gens) {
  if (gens.size() != traj.generators()) throw ContractError("coi_series: generator count mismatch");
  std::vector<double> inertia;
  for (const auto& g : gens) inertia.push_back(g.inertia_tj);
  return coi_series(traj.delta, inertia);
}

Trajectory simulate(const DynamicInit& init, const Contingency& cont, const SimConfig& cfg) {
  validate_sim_config(cfg, cont.t_clear);
  const std::size_t n_clear = clearing_step(cfg, cont.t_clear);
  const auto steps = static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt));
  const auto ng = static_cast<Eigen::Index>(init.delta0.size());

  const SwingModel fault(init.emf_mag, init.pm, init.inertia, init.damping, init.y_fault, cfg.omega_s);
  const SwingModel post(init.emf_mag, init.pm, init.inertia, init.damping, init.y_post, cfg.omega_s);

  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.delta.resize(static_cast<Eigen::Index>(steps + 1), ng);
  traj.omega.resize(static_cast<Eigen::Index>(steps + 1), ng);

  Eigen::VectorXd x = initial_state(init);
  Eigen::VectorXd k1, k2, k3, k4, tmp;
  std::size_t stored = 0;
  auto store = [&](std::size_t n) {
    traj.times.push_back(static_cast<double>(n) * cfg.dt);
    traj.delta.row(static_cast<Eigen::Index>(n)) = x.head(ng).transpose();
    traj.omega.row(static_cast<Eigen::Index>(n)) = x.tail(ng).transpose();
    stored = n + 1;
  };
  store(0);
  const double h = cfg.dt;
  for (std::size_t n = 0; n < steps; ++n) {
    const SwingModel& m = n < n_clear ? fault : post;
    m.rhs(x, k1);
    tmp = x + 0.5 * h * k1;
    m.rhs(tmp, k2);
    tmp = x + 0.5 * h * k2;
    m.rhs(tmp, k3);
    tmp = x + h * k3;
    m.rhs(tmp, k4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) {
      traj.divergent = true;
      break;
    }
    store(n + 1);
  }
  traj.delta.conservativeResize(static_cast<Eigen::Index>(stored), ng);
  traj.omega.conservativeResize(static_cast<Eigen::Index>(stored), ng);
  traj.coi = coi_series(traj.delta, init.inertia);
  return traj;
}

StabilityVerdict classify_stability(const Trajectory& traj, const SimConfig& cfg) {
  StabilityVerdict v;
  for (std::size_t s = 0; s < traj.steps(); ++s) {
    const auto row = static_cast<Eigen::Index>(s);
    for (Eigen::Index i = 0; i < traj.delta.cols(); ++i) {
      const double exc = std::abs(traj.delta(row, i) - traj.coi[s]);
      v.max_excursion = std::max(v.max_excursion, exc);
      if (exc > cfg.delta_max && !v.first_violation_time) v.first_violation_time = traj.times[s];
    }
  }
  v.stable = !v.first_violation_time && !traj.divergent;
  if (traj.divergent && !v.first_violation_time && !traj.times.empty()) v.first_violation_time = traj.times.back();
  v.lambda = v.stable ? 1 : -1;
  return v;
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  const auto ng = traj.generators();
  out << "t";
  for (std::size_t i = 1; i <= ng; ++i) out << ",delta_" << i;
  for (std::size_t i = 1; i <= ng; ++i) out << ",omega_" << i;
  out << ",coi\n";
  out << std::setprecision(17);
  for (std::size_t s = 0; s < traj.steps(); ++s) {
    const auto row = static_cast<Eigen::Index>(s);
    out << traj.times[s];
    for (Eigen::Index i = 0; i < traj.delta.cols(); ++i) out << ',' << traj.delta(row, i);
    for (Eigen::Index i = 0; i < traj.omega.cols(); ++i) out << ',' << traj.omega(row, i);
    out << ',' << traj.coi[s] << '\n';
  }
}

}  // namespace tsb
