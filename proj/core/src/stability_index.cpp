#include "tsb/stability_index.hpp"

#include <algorithm>
#include <cmath>

#include "tsb/error.hpp"

namespace tsb {

namespace {

struct ExcursionPeak {
  int gen = 0;
  double excursion = 0.0;  // delta_m - coi (signed)
};

// Largest squared COI deviation, lowest generator index on ties.
ExcursionPeak peak_excursion(const Eigen::VectorXd& delta, double coi) {
  ExcursionPeak p;
  double best = -1.0;
  for (Eigen::Index i = 0; i < delta.size(); ++i) {
    const double e = delta(i) - coi;
    if (e * e > best) {
      best = e * e;
      p.gen = static_cast<int>(i);
      p.excursion = e;
    }
  }
  return p;
}

double weighted_mean(const Eigen::VectorXd& delta, const std::vector<double>& w) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < delta.size(); ++i) acc += w[static_cast<std::size_t>(i)] * delta(i);
  return acc;
}

std::vector<double> inertia_weights(const std::vector<double>& inertia) {
  double total = 0.0;
  for (double t : inertia) total += t;
  std::vector<double> w;
  for (double t : inertia) w.push_back(t / total);
  return w;
}

// Clipped integrand and its gradient with respect to delta.
double integrand(const Eigen::VectorXd& x, Eigen::Index ng, const std::vector<double>& w, int lambda,
                 double delta_max, Eigen::VectorXd* grad_delta) {
  const Eigen::VectorXd delta = x.head(ng);
  const double coi = weighted_mean(delta, w);
  const auto peak = peak_excursion(delta, coi);
  const double theta = lambda * (delta_max * delta_max - peak.excursion * peak.excursion);
  if (grad_delta) {
    grad_delta->setZero(ng);
    if (theta > 0.0) {
      const double scale = -2.0 * lambda * peak.excursion;
      for (Eigen::Index j = 0; j < ng; ++j) {
        (*grad_delta)(j) = scale * ((j == peak.gen ? 1.0 : 0.0) - w[static_cast<std::size_t>(j)]);
      }
    }
  }
  return std::max(0.0, theta);
}

// d(F_omega)/dp contracted with the omega co-states, plus nothing for the
// delta rows (omega_s does not depend on the dispatch).
double costate_param_product(const SwingModel& m, const Eigen::VectorXd& x, const Eigen::VectorXd& lam,
                             const ParamDerivative& dp, bool fault_segment) {
  const auto ng = static_cast<Eigen::Index>(m.generators());
  const Eigen::MatrixXd& g = m.conductance();
  const Eigen::MatrixXd& b = m.susceptance();
  const Eigen::MatrixXd& dg = fault_segment ? dp.dg_fault : dp.dg_post;
  const Eigen::MatrixXd& db = fault_segment ? dp.db_fault : dp.db_post;
  const auto& e = m.emf();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ng; ++i) {
    const auto si = static_cast<std::size_t>(i);
    double dpe = 0.0;
    for (Eigen::Index k = 0; k < ng; ++k) {
      const auto sk = static_cast<std::size_t>(k);
      const double d = x(i) - x(k);
      const double c = std::cos(d), s = std::sin(d);
      dpe += (dp.demf[si] * e[sk] + e[si] * dp.demf[sk]) * (g(i, k) * c + b(i, k) * s) +
             e[si] * e[sk] * (dg(i, k) * c + db(i, k) * s);
    }
    acc += lam(ng + i) * (dp.dpm[si] - dpe) / m.inertia()[si];
  }
  return acc;
}

// Right-hand side of the co-state equation in reversed time.
void costate_rhs(const SwingModel& m, const Eigen::VectorXd& x, const Eigen::VectorXd& lam,
                 const std::vector<double>& w, int lambda_sign, double delta_max, Eigen::VectorXd& out,
                 Eigen::MatrixXd& dpe) {
  const auto ng = static_cast<Eigen::Index>(m.generators());
  Eigen::VectorXd gd;
  integrand(x, ng, w, lambda_sign, delta_max, &gd);
  m.electrical_power_jacobian(x, dpe);
  out.resize(2 * ng);
  Eigen::VectorXd scaled(ng);
  for (Eigen::Index i = 0; i < ng; ++i) scaled(i) = lam(ng + i) / m.inertia()[static_cast<std::size_t>(i)];
  out.head(ng) = gd - dpe.transpose() * scaled;
  for (Eigen::Index i = 0; i < ng; ++i) {
    const auto si = static_cast<std::size_t>(i);
    out(ng + i) = m.omega_s() * lam(i) - m.damping()[si] / m.inertia()[si] * lam(ng + i);
  }
}

}  // namespace

IndexResult transient_index(const Trajectory& traj, const StabilityVerdict& verdict, const SimConfig& cfg) {
  IndexResult r;
  r.lambda = verdict.lambda;
  const auto ng = static_cast<Eigen::Index>(traj.generators());
  std::vector<double> values(traj.steps());
  r.argmax_gen.resize(traj.steps());
  r.clip_mask.resize(traj.steps());
  const double dm2 = cfg.delta_max * cfg.delta_max;
  for (std::size_t s = 0; s < traj.steps(); ++s) {
    const Eigen::VectorXd delta = traj.delta.row(static_cast<Eigen::Index>(s)).transpose();
    const auto peak = peak_excursion(delta, traj.coi[s]);
    const double theta = r.lambda * (dm2 - peak.excursion * peak.excursion);
    r.argmax_gen[s] = peak.gen;
    r.clip_mask[s] = theta < 0.0;
    values[s] = std::max(0.0, theta);
  }
  (void)ng;
  for (std::size_t s = 1; s < values.size(); ++s) {
    r.phi += 0.5 * (traj.times[s] - traj.times[s - 1]) * (values[s] + values[s - 1]);
  }
  return r;
}

ParamDerivative ParamDerivative::zero(std::size_t generators) {
  const auto n = static_cast<Eigen::Index>(generators);
  ParamDerivative d;
  d.dpm.assign(generators, 0.0);
  d.demf.assign(generators, 0.0);
  d.ddelta0.assign(generators, 0.0);
  d.dg_fault = d.db_fault = d.dg_post = d.db_post = Eigen::MatrixXd::Zero(n, n);
  return d;
}

OpAnalysis analyze_op(const GridCase& c, const OperatingPoint& op, const Contingency& cont, const SimConfig& cfg) {
  OpAnalysis a;
  a.power_flow = solve_power_flow(c, op);
  a.converged = a.power_flow.converged;
  if (!a.converged) return a;
  a.limits = check_static_limits(c, a.power_flow);
  a.feasible = a.limits.feasible;
  if (!a.feasible) return a;
  a.init = init_dynamic_state(c, op, a.power_flow, &cont);
  a.trajectory = simulate(*a.init, cont, cfg);
  a.verdict = classify_stability(a.trajectory, cfg);
  a.index = transient_index(a.trajectory, a.verdict, cfg);
  return a;
}

std::vector<ParamDerivative> init_parameter_derivatives(const GridCase& c, const OperatingPoint& op,
                                                        const Contingency& cont, double step_mw) {
  auto initialize = [&](const OperatingPoint& p) -> std::optional<DynamicInit> {
    const auto sol = solve_power_flow(c, p);
    if (!sol.converged) return std::nullopt;
    return init_dynamic_state(c, p, sol, &cont);
  };
  const auto center = initialize(op);
  if (!center) throw InfeasibleError("power flow does not converge at the operating point");
  const std::size_t ng = c.generators.size();
  std::vector<ParamDerivative> out;
  for (std::size_t j = 0; j < op.gen_p.size(); ++j) {
    OperatingPoint plus = op, minus = op;
    plus.gen_p[j] += step_mw;
    minus.gen_p[j] -= step_mw;
    auto ip = initialize(plus);
    auto im = initialize(minus);
    double span = 2.0 * step_mw;
    if (!ip && !im) throw InfeasibleError("initialization fails on both sides of the operating point");
    if (!ip) {
      ip = center;
      span = step_mw;
    } else if (!im) {
      im = center;
      span = step_mw;
    }
    ParamDerivative d = ParamDerivative::zero(ng);
    for (std::size_t i = 0; i < ng; ++i) {
      d.dpm[i] = (ip->pm[i] - im->pm[i]) / span;
      d.demf[i] = (ip->emf_mag[i] - im->emf_mag[i]) / span;
      d.ddelta0[i] = (ip->delta0[i] - im->delta0[i]) / span;
    }
    d.dg_fault = (ip->y_fault.real() - im->y_fault.real()) / span;
    d.db_fault = (ip->y_fault.imag() - im->y_fault.imag()) / span;
    d.dg_post = (ip->y_post.real() - im->y_post.real()) / span;
    d.db_post = (ip->y_post.imag() - im->y_post.imag()) / span;
    out.push_back(std::move(d));
  }
  return out;
}

GradientResult adjoint_gradient(const DynamicInit& init, const Contingency& cont, const SimConfig& cfg,
                                const Trajectory& traj, const IndexResult& index,
                                const std::vector<ParamDerivative>& dparams) {
  const std::size_t n_clear = clearing_step(cfg, cont.t_clear);
  const auto ng = static_cast<Eigen::Index>(init.delta0.size());
  const SwingModel fault(init.emf_mag, init.pm, init.inertia, init.damping, init.y_fault, cfg.omega_s);
  const SwingModel post(init.emf_mag, init.pm, init.inertia, init.damping, init.y_post, cfg.omega_s);
  const auto w = inertia_weights(init.inertia);
  const int sign = index.lambda;
  const std::size_t np = dparams.size();

  GradientResult res;
  res.method = GradientMethod::Adjoint;
  res.divergent = traj.divergent;
  res.grad.assign(np, 0.0);

  const std::size_t last = traj.steps() - 1;
  auto state = [&](std::size_t n) {
    Eigen::VectorXd x(2 * ng);
    x.head(ng) = traj.delta.row(static_cast<Eigen::Index>(n)).transpose();
    x.tail(ng) = traj.omega.row(static_cast<Eigen::Index>(n)).transpose();
    return x;
  };

  Eigen::VectorXd lam = Eigen::VectorXd::Zero(2 * ng);  // co-state at T
  res.costate_terminal_norm = lam.norm();
  std::vector<double> mu(np, 0.0);
  Eigen::VectorXd k1, k2, k3, k4, f0, f1, tmp;
  Eigen::MatrixXd dpe;
  Eigen::VectorXd x1 = state(last);
  for (std::size_t n = last; n-- > 0;) {
    const double h = traj.times[n + 1] - traj.times[n];
    const bool in_fault = n < n_clear;
    const SwingModel& m = in_fault ? fault : post;
    const Eigen::VectorXd x0 = state(n);
    m.rhs(x0, f0);
    m.rhs(x1, f1);
    // Cubic Hermite midpoint of the forward state.
    const Eigen::VectorXd xm = 0.5 * (x0 + x1) + (h / 8.0) * (f0 - f1);

    costate_rhs(m, x1, lam, w, sign, cfg.delta_max, k1, dpe);
    const Eigen::VectorXd l2 = lam + 0.5 * h * k1;
    costate_rhs(m, xm, l2, w, sign, cfg.delta_max, k2, dpe);
    const Eigen::VectorXd l3 = lam + 0.5 * h * k2;
    costate_rhs(m, xm, l3, w, sign, cfg.delta_max, k3, dpe);
    const Eigen::VectorXd l4 = lam + h * k3;
    costate_rhs(m, x0, l4, w, sign, cfg.delta_max, k4, dpe);
    for (std::size_t j = 0; j < np; ++j) {
      const double q1 = costate_param_product(m, x1, lam, dparams[j], in_fault);
      const double q2 = costate_param_product(m, xm, l2, dparams[j], in_fault);
      const double q3 = costate_param_product(m, xm, l3, dparams[j], in_fault);
      const double q4 = costate_param_product(m, x0, l4, dparams[j], in_fault);
      mu[j] += (h / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4);
    }
    lam += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    x1 = x0;
  }
  for (std::size_t j = 0; j < np; ++j) {
    double coupling = 0.0;
    for (Eigen::Index i = 0; i < ng; ++i) coupling += lam(i) * dparams[j].ddelta0[static_cast<std::size_t>(i)];
    res.grad[j] = mu[j] + coupling;
  }
  return res;
}

GradientResult adjoint_gradient(const GridCase& c, const OperatingPoint& op, const Contingency& cont,
                                const SimConfig& cfg, const OpAnalysis& analysis, const AdjointOptions& opts) {
  if (!analysis.converged) throw InfeasibleError("power flow does not converge at the operating point");
  if (!analysis.feasible) throw InfeasibleError("operating point violates static limits");
  const auto dparams = init_parameter_derivatives(c, op, cont, opts.init_step_mw);
  return adjoint_gradient(*analysis.init, cont, cfg, analysis.trajectory, analysis.index, dparams);
}

GradientResult adjoint_gradient(const GridCase& c, const OperatingPoint& op, const Contingency& cont,
                                const SimConfig& cfg, const AdjointOptions& opts) {
  validate_op(c, op);
  return adjoint_gradient(c, op, cont, cfg, analyze_op(c, op, cont, cfg), opts);
}

GradientResult fd_gradient(const IndexFunction& phi, const std::vector<double>& u, double h) {
  if (!(h > 0.0)) throw ContractError("finite-difference step must be positive");
  GradientResult res;
  res.method = GradientMethod::FiniteDifference;
  res.grad.assign(u.size(), 0.0);
  res.one_sided.assign(u.size(), false);
  std::optional<double> center;
  for (std::size_t j = 0; j < u.size(); ++j) {
    auto up = u, dn = u;
    up[j] += h;
    dn[j] -= h;
    const auto fp = phi(up);
    const auto fm = phi(dn);
    if (fp && fm) {
      res.grad[j] = (*fp - *fm) / (2.0 * h);
      continue;
    }
    if (!center) center = phi(u);
    if (!center) throw InfeasibleError("index unavailable at the operating point");
    res.one_sided[j] = true;
    if (fp) {
      res.grad[j] = (*fp - *center) / h;
    } else if (fm) {
      res.grad[j] = (*center - *fm) / h;
    } else {
      throw InfeasibleError("index unavailable on both sides of coordinate " + std::to_string(j));
    }
  }
  return res;
}

GradientResult fd_gradient(const GridCase& c, const OperatingPoint& op, const Contingency& cont,
                           const SimConfig& cfg, double h) {
  validate_op(c, op);
  const auto base = analyze_op(c, op, cont, cfg);
  if (!base.feasible) throw InfeasibleError("operating point is not statically feasible");
  const auto lo = c.u_min();
  const auto hi = c.u_max();
  bool label_changed = false;
  auto phi = [&](const std::vector<double>& u) -> std::optional<double> {
    for (std::size_t j = 0; j < u.size(); ++j) {
      if (u[j] < lo[j] || u[j] > hi[j]) return std::nullopt;
    }
    OperatingPoint p = op;
    p.gen_p = u;
    const auto a = analyze_op(c, p, cont, cfg);
    if (!a.feasible) return std::nullopt;
    if (a.verdict.lambda != base.verdict.lambda) label_changed = true;
    return a.index.phi;
  };
  auto res = fd_gradient(phi, op.gen_p, h);
  res.label_changed = label_changed;
  res.divergent = base.trajectory.divergent;
  return res;
}

bool argmax_switch_near_clearing(const IndexResult& index, std::size_t clearing_step) {
  if (index.argmax_gen.empty()) return false;
  const std::size_t lo = clearing_step >= 2 ? clearing_step - 2 : 0;
  const std::size_t hi = std::min(clearing_step + 2, index.argmax_gen.size() - 1);
  for (std::size_t s = lo + 1; s <= hi; ++s) {
    if (index.argmax_gen[s] != index.argmax_gen[s - 1]) return true;
  }
  return false;
}

}  // namespace tsb
