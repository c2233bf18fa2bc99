#include "tsb/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tsb/error.hpp"
#include "tsb/parallel.hpp"

namespace tsb {

namespace {

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

double norm2(const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

OperatingPoint midpoint(const OperatingPoint& a, const OperatingPoint& b) {
  OperatingPoint m;
  m.gen_p.resize(a.gen_p.size());
  for (std::size_t k = 0; k < a.gen_p.size(); ++k) m.gen_p[k] = 0.5 * (a.gen_p[k] + b.gen_p[k]);
  m.load_scale.resize(a.load_scale.size());
  for (std::size_t k = 0; k < a.load_scale.size(); ++k) m.load_scale[k] = 0.5 * (a.load_scale[k] + b.load_scale[k]);
  return m;
}

Sample infeasible_sample(const OperatingPoint& op, const std::string& id, Provenance p) {
  return make_sample(op, id, Evaluation{}, p);
}

std::vector<double> mid_band_loads(const SearchSpace& box, const SamplerConfig& cfg) {
  return std::vector<double>(box.n_loads, 0.5 * (cfg.load_band_min + cfg.load_band_max));
}

void validate_sampler_config(const SamplerConfig& cfg) {
  if (!(cfg.nu_min > 0.0 && cfg.nu_min <= cfg.nu_max && cfg.nu_max <= 1.0)) {
    throw ConfigError("sampler: need 0 < nu_min <= nu_max <= 1");
  }
  if (!(cfg.phi_cri > 0.0)) throw ConfigError("sampler: phi_cri must be positive");
  if (cfg.gamma_cri < 0.0) throw ConfigError("sampler: gamma_cri must be positive");
  if (cfg.n_seeds == 0) throw ConfigError("sampler: n_seeds must be at least 1");
  if (!(cfg.traverse_step > 0.0)) throw ConfigError("sampler: traverse_step must be positive");
  if (!(cfg.bisect_width > 0.0)) throw ConfigError("sampler: bisect_width must be positive");
  if (cfg.load_band_min > cfg.load_band_max) throw ConfigError("sampler: empty load band");
}

// Collects samples in a fixed order, skipping exact duplicates and enforcing
// the evaluation budget.
class Collector {
 public:
  explicit Collector(std::size_t budget) : budget_(budget) {}

  bool exhausted() const { return evaluations_ >= budget_; }
  std::size_t evaluations() const { return evaluations_; }
  std::size_t remaining() const { return exhausted() ? 0 : budget_ - evaluations_; }

  bool add(Sample s, int path, int& step) {
    if (s.feasible() && exhausted()) return false;
    for (const auto& t : samples_) {
      if (t.op == s.op && t.contingency_id == s.contingency_id) return true;
    }
    s.path = path;
    s.step = step++;
    if (s.feasible()) ++evaluations_;
    samples_.push_back(std::move(s));
    return true;
  }

  std::vector<Sample>& samples() { return samples_; }

 private:
  std::size_t budget_;
  std::size_t evaluations_ = 0;
  std::vector<Sample> samples_;
};

}  // namespace

GridEvaluator::GridEvaluator(GridCase c, Contingency cont, SimConfig sim, AdjointOptions adj)
    : case_(std::move(c)), cont_(std::move(cont)), sim_(sim), adj_(adj) {
  validate_contingency(case_, cont_);
  validate_sim_config(sim_, cont_.t_clear);
}

bool GridEvaluator::feasible(const OperatingPoint& op) const {
  try {
    validate_op(case_, op);
    const auto sol = solve_power_flow(case_, op);
    return sol.converged && check_static_limits(case_, sol).feasible;
  } catch (const ValidationError&) {
    return false;
  } catch (const NumericalError&) {
    return false;
  }
}

Evaluation GridEvaluator::evaluate(const OperatingPoint& op, bool with_gradient) const {
  Evaluation e;
  try {
    validate_op(case_, op);
    const OpAnalysis a = analyze_op(case_, op, cont_, sim_);
    if (!a.feasible) return e;
    e.label = a.verdict.stable ? Label::Stable : Label::Unstable;
    e.lambda = a.verdict.lambda;
    e.phi = a.index.phi;
    if (with_gradient) {
      try {
        e.grad = adjoint_gradient(case_, op, cont_, sim_, a, adj_).grad;
      } catch (const InfeasibleError&) {
      } catch (const NumericalError&) {
      }
    }
  } catch (const ValidationError&) {
    return Evaluation{};
  } catch (const NumericalError&) {
    return Evaluation{};
  }
  return e;
}

SubspaceEvaluator::SubspaceEvaluator(std::shared_ptr<const OpEvaluator> full, OperatingPoint base,
                                     std::vector<std::size_t> dims)
    : full_(std::move(full)), base_(std::move(base)), dims_(std::move(dims)) {
  if (!full_) throw ContractError("subspace evaluator: missing evaluator");
  for (auto d : dims_) {
    if (d >= base_.gen_p.size()) throw ContractError("subspace evaluator: dimension out of range");
  }
}

OperatingPoint SubspaceEvaluator::expand(const OperatingPoint& reduced) const {
  if (reduced.gen_p.size() != dims_.size()) throw ContractError("subspace evaluator: dimension mismatch");
  OperatingPoint op = base_;
  for (std::size_t k = 0; k < dims_.size(); ++k) op.gen_p[dims_[k]] = reduced.gen_p[k];
  if (!reduced.load_scale.empty()) op.load_scale = reduced.load_scale;
  return op;
}

OperatingPoint SubspaceEvaluator::reduce(const OperatingPoint& full) const {
  OperatingPoint op;
  for (auto d : dims_) op.gen_p.push_back(full.gen_p.at(d));
  op.load_scale = full.load_scale;
  return op;
}

bool SubspaceEvaluator::feasible(const OperatingPoint& op) const { return full_->feasible(expand(op)); }

Evaluation SubspaceEvaluator::evaluate(const OperatingPoint& op, bool with_gradient) const {
  Evaluation e = full_->evaluate(expand(op), with_gradient);
  if (e.grad) {
    std::vector<double> g;
    for (auto d : dims_) g.push_back((*e.grad)[d]);
    e.grad = std::move(g);
  }
  return e;
}

FunctionEvaluator::FunctionEvaluator(std::string id, std::size_t dim, Fn fn, Screen screen)
    : id_(std::move(id)), dim_(dim), fn_(std::move(fn)), screen_(std::move(screen)) {}

bool FunctionEvaluator::feasible(const OperatingPoint& op) const { return !screen_ || screen_(op.gen_p); }

Evaluation FunctionEvaluator::evaluate(const OperatingPoint& op, bool with_gradient) const {
  if (!feasible(op)) return Evaluation{};
  Evaluation e = fn_(op.gen_p);
  if (e.label == Label::Infeasible) return Evaluation{};
  e.lambda = e.label == Label::Stable ? 1 : -1;
  if (!with_gradient) e.grad.reset();
  return e;
}

SearchSpace SearchSpace::from_case(const GridCase& c) {
  SearchSpace s;
  s.lower = c.u_min();
  s.upper = c.u_max();
  s.u_max = c.u_max();
  s.n_loads = c.loads.size();
  return s;
}

void SearchSpace::validate() const {
  if (lower.empty()) throw ConfigError("search space: no coordinates");
  if (upper.size() != lower.size() || u_max.size() != lower.size()) throw ConfigError("search space: ragged bounds");
  for (std::size_t k = 0; k < lower.size(); ++k) {
    if (!(lower[k] <= upper[k])) throw ConfigError("search space: empty box");
    if (!(u_max[k] > 0.0)) throw ConfigError("search space: u_max must be positive");
  }
}

std::vector<double> SearchSpace::clip(const std::vector<double>& u) const {
  std::vector<double> v(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) v[k] = std::clamp(u[k], lower[k], upper[k]);
  return v;
}

std::vector<OperatingPoint> seed_initial_ops(const SearchSpace& box, std::size_t n, std::uint64_t rng_seed,
                                             double load_min, double load_max) {
  box.validate();
  if (n == 0) throw ConfigError("seed_initial_ops: n must be at least 1");
  if (load_min > load_max) throw ConfigError("seed_initial_ops: empty load band");
  Rng rng = derive_rng(rng_seed, 0x5eed);
  const std::size_t d = box.dimension();
  std::vector<OperatingPoint> ops(n);
  for (std::size_t k = 0; k < d; ++k) {
    const auto perm = permutation(rng, n);
    for (std::size_t i = 0; i < n; ++i) {
      const double frac = (static_cast<double>(perm[i]) + 0.5) / static_cast<double>(n);
      ops[i].gen_p.push_back(box.lower[k] + frac * (box.upper[k] - box.lower[k]));
    }
  }
  for (auto& op : ops) {
    for (std::size_t l = 0; l < box.n_loads; ++l) op.load_scale.push_back(uniform(rng, load_min, load_max));
  }
  return ops;
}

double step_coefficient(double phi, const SamplerConfig& cfg, double phi_ref) {
  const double ref = phi_ref > 0.0 ? phi_ref : 1.0;
  return std::clamp(cfg.nu_max * std::tanh(std::abs(phi) / ref), cfg.nu_min, cfg.nu_max);
}

OperatingPoint step_toward_boundary(const Sample& s, const SamplerConfig& cfg, const SearchSpace& box,
                                    double phi_ref, double shrink) {
  if (!s.feasible() || !s.grad) throw ContractError("step_toward_boundary: needs a feasible sample with gradient");
  const auto& g = *s.grad;
  if (g.size() != box.dimension()) throw ContractError("step_toward_boundary: dimension mismatch");
  double ginf = 0.0;
  for (double v : g) ginf = std::max(ginf, std::abs(v));
  if (!(ginf > 0.0) || !std::isfinite(ginf)) throw StationaryPointError("step_toward_boundary: zero gradient");
  const double nu = step_coefficient(s.phi, cfg, phi_ref) * shrink;
  std::vector<double> u(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) u[k] = s.u()[k] - nu * box.u_max[k] * g[k] / ginf;
  OperatingPoint op;
  op.gen_p = box.clip(u);
  op.load_scale = s.op.load_scale;
  return op;
}

Sample make_sample(const OperatingPoint& op, const std::string& contingency_id, const Evaluation& e,
                   Provenance p) {
  Sample s;
  s.op = op;
  s.contingency_id = contingency_id;
  s.provenance = p;
  s.label = e.label;
  if (e.label != Label::Infeasible) {
    s.phi = e.phi;
    s.lambda = e.label == Label::Stable ? 1 : -1;
    s.grad = e.grad;
  }
  return s;
}

Sample bisect_crossing(const Sample& a, const Sample& b, const OpEvaluator& ev, double phi_cri, double width,
                       std::vector<Sample>* trail) {
  if (!a.feasible() || !b.feasible()) throw InfeasibleError("bisect_crossing: infeasible endpoint");
  if (a.label == b.label) throw ContractError("bisect_crossing: endpoints share a label");
  if (a.contingency_id != b.contingency_id) throw ContractError("bisect_crossing: different contingencies");
  if (a.u().size() != b.u().size()) throw ContractError("bisect_crossing: dimension mismatch");
  Sample lo = a, hi = b;
  while (true) {
    const OperatingPoint m = midpoint(lo.op, hi.op);
    const Evaluation e = ev.evaluate(m, true);
    Sample s = make_sample(m, a.contingency_id, e, Provenance::Route2Bisect);
    if (!s.feasible()) {
      if (trail) trail->push_back(s);
      throw InfeasibleError("bisect_crossing: infeasible midpoint");
    }
    const bool done = std::abs(s.phi) < phi_cri || 0.5 * max_abs_diff(lo.u(), hi.u()) < width;
    if (done) {
      s.critical = true;
      if (trail) trail->push_back(s);
      return s;
    }
    if (trail) trail->push_back(s);
    (s.label == lo.label ? lo : hi) = std::move(s);
  }
}

std::vector<double> tangent_direction(const std::vector<double>& grad, Rng& rng) {
  const double gn = norm2(grad);
  if (!(gn > 0.0)) throw StationaryPointError("tangent_direction: zero gradient");
  if (grad.size() < 2) throw ContractError("tangent_direction: needs at least two coordinates");
  if (grad.size() == 2) return {-grad[1] / gn, grad[0] / gn};
  for (int attempt = 0; attempt < 16; ++attempt) {
    std::vector<double> v(grad.size());
    for (auto& x : v) x = standard_normal(rng);
    const double proj = std::inner_product(v.begin(), v.end(), grad.begin(), 0.0) / (gn * gn);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] -= proj * grad[k];
    const double vn = norm2(v);
    if (vn > 1e-8) {
      for (auto& x : v) x /= vn;
      return v;
    }
  }
  throw NumericalError("tangent_direction: degenerate draw");
}

std::optional<Sample> correct_to_boundary(const Sample& s, const OpEvaluator& ev, const SamplerConfig& cfg,
                                          const SearchSpace& box, double probe, std::vector<Sample>& trail) {
  if (!s.feasible() || !s.grad) return std::nullopt;
  const double gn = norm2(*s.grad);
  if (!(gn > 0.0)) return std::nullopt;
  Sample near = s;
  double dist = probe;
  for (std::size_t attempt = 0; attempt <= cfg.max_reflections; ++attempt, dist *= 2.0) {
    std::vector<double> u(s.u().size());
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = s.u()[k] - dist * (*s.grad)[k] / gn;
    OperatingPoint q;
    q.gen_p = box.clip(u);
    q.load_scale = s.op.load_scale;
    if (q.gen_p == near.op.gen_p) return std::nullopt;
    if (!ev.feasible(q)) {
      trail.push_back(infeasible_sample(q, s.contingency_id, s.provenance));
      return std::nullopt;
    }
    Sample qs = make_sample(q, s.contingency_id, ev.evaluate(q, true), s.provenance);
    trail.push_back(qs);
    if (!qs.feasible()) return std::nullopt;
    if (qs.label != s.label) {
      try {
        return bisect_crossing(near, qs, ev, cfg.phi_cri, cfg.bisect_width, &trail);
      } catch (const InfeasibleError&) {
        return std::nullopt;
      }
    }
    near = std::move(qs);
  }
  return std::nullopt;
}

TraverseResult traverse_boundary(const Sample& critical, const OpEvaluator& ev, const SamplerConfig& cfg,
                                 const SearchSpace& box, Rng& rng, const std::vector<std::vector<double>>& known,
                                 std::size_t max_evaluations) {
  TraverseResult out;
  if (cfg.max_route_steps == 0) return out;
  if (!critical.feasible() || !critical.grad) throw ContractError("traverse_boundary: needs a critical sample with gradient");
  if (box.dimension() < 2) return out;
  const double step = cfg.traverse_step * *std::max_element(box.u_max.begin(), box.u_max.end());
  const std::vector<double> t0 = tangent_direction(*critical.grad, rng);
  std::vector<std::vector<double>> seen = known;
  std::size_t produced = 0;
  auto spent = [&]() {
    return static_cast<std::size_t>(
        std::count_if(out.trail.begin(), out.trail.end(), [](const Sample& s) { return s.feasible(); }));
  };
  for (double sign : {1.0, -1.0}) {
    Sample cur = critical;
    std::vector<double> t = t0;
    for (auto& x : t) x *= sign;
    while (produced < cfg.max_route_steps && spent() < max_evaluations) {
      std::vector<double> raw(t.size());
      for (std::size_t k = 0; k < t.size(); ++k) raw[k] = cur.u()[k] + step * t[k];
      OperatingPoint p;
      p.gen_p = box.clip(raw);
      p.load_scale = cur.op.load_scale;
      const bool clipped = max_abs_diff(raw, p.gen_p) > 1e-9;
      if (std::sqrt(sqdist(p.gen_p, cur.u())) < 0.5 * step) break;
      if (!ev.feasible(p)) {
        out.trail.push_back(infeasible_sample(p, critical.contingency_id, Provenance::Route3Traverse));
        break;
      }
      Sample ps = make_sample(p, critical.contingency_id, ev.evaluate(p, true), Provenance::Route3Traverse);
      out.trail.push_back(ps);
      out.probes.push_back(p);
      if (!ps.feasible() || !ps.grad) break;
      auto corrected = correct_to_boundary(ps, ev, cfg, box, 0.25 * step, out.trail);
      if (!corrected) break;
      out.points.push_back(corrected->op);
      ++produced;
      const bool near = std::any_of(seen.begin(), seen.end(), [&](const std::vector<double>& k) {
        return sqdist(k, corrected->u()) < 0.25 * step * step;
      });
      seen.push_back(corrected->u());
      if (near || clipped || !corrected->grad) break;
      const auto& g = *corrected->grad;
      const double gg = std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
      if (!(gg > 0.0)) break;
      const double proj = std::inner_product(t.begin(), t.end(), g.begin(), 0.0) / gg;
      for (std::size_t k = 0; k < t.size(); ++k) t[k] -= proj * g[k];
      const double tn = norm2(t);
      if (!(tn > 1e-12)) break;
      for (auto& x : t) x /= tn;
      cur = std::move(*corrected);
    }
  }
  for (auto& s : out.trail) s.provenance = Provenance::Route3Traverse;
  return out;
}

std::vector<GapCandidate> resample_gaps(const SampleSet& set, const BoundaryModel& model, const SearchSpace& box,
                                        std::size_t n_new, std::uint64_t rng_seed, std::size_t pool,
                                        const std::function<bool(const std::vector<double>&)>& screen,
                                        double perturb) {
  box.validate();
  if (n_new == 0) throw ContractError("resample_gaps: n_new must be at least 1");
  if (model.dimension() != box.dimension()) throw ContractError("resample_gaps: model dimension mismatch");
  Rng rng = derive_rng(rng_seed, 0x6a70);
  const std::size_t d = box.dimension();
  std::vector<std::vector<double>> refs;
  for (const auto& s : set.samples) {
    if (s.feasible() && s.critical) refs.push_back(s.u());
  }
  auto draw = [&]() {
    std::vector<double> u(d);
    for (std::size_t k = 0; k < d; ++k) u[k] = uniform(rng, box.lower[k], box.upper[k]);
    return u;
  };
  std::vector<std::vector<double>> cands;
  bool seen_pos = false, seen_neg = false;
  auto chord = [&](const std::vector<double>& a, const std::vector<double>& b) {
    const double fa = decision(model, a), fb = decision(model, b);
    (fa > 0.0 ? seen_pos : seen_neg) = true;
    (fb > 0.0 ? seen_pos : seen_neg) = true;
    if ((fa > 0.0) == (fb > 0.0)) return;
    const auto proj = project_to_boundary(model, a, b);
    if (!screen || screen(proj.point)) cands.push_back(proj.point);
  };
  for (std::size_t i = 0; i < pool; ++i) {
    const auto a = draw();
    const auto b = draw();
    chord(a, b);
  }
  const double radius = perturb * *std::max_element(box.u_max.begin(), box.u_max.end());
  for (const auto& c : refs) {
    for (int r = 0; r < 2; ++r) {
      std::vector<double> v(d);
      for (auto& x : v) x = standard_normal(rng);
      const double vn = norm2(v);
      if (!(vn > 0.0)) continue;
      std::vector<double> a(d), b(d);
      for (std::size_t k = 0; k < d; ++k) {
        a[k] = c[k] + radius * v[k] / vn;
        b[k] = c[k] - radius * v[k] / vn;
      }
      chord(box.clip(a), box.clip(b));
    }
  }
  if (cands.empty()) {
    if (!(seen_pos && seen_neg)) throw NoBoundaryError("resample_gaps: model predicts a single class");
    return {};
  }
  std::vector<double> gam(cands.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < cands.size(); ++i)
    for (const auto& r : refs) gam[i] = std::min(gam[i], sqdist(cands[i], r));
  std::vector<bool> taken(cands.size(), false);
  std::vector<GapCandidate> out;
  while (out.size() < n_new) {
    std::size_t best = cands.size();
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (!taken[i] && (best == cands.size() || gam[i] > gam[best])) best = i;
    }
    if (best == cands.size()) break;
    taken[best] = true;
    out.push_back({cands[best], gam[best]});
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (!taken[i]) gam[i] = std::min(gam[i], sqdist(cands[i], cands[best]));
    }
  }
  return out;
}

bool check_termination(const std::vector<double>& gammas, double gamma_cri) {
  if (gammas.empty()) throw ContractError("check_termination: no gammas");
  return *std::min_element(gammas.begin(), gammas.end()) <= gamma_cri;
}

SampleSet generate_dataset(const OpEvaluator& ev, const SearchSpace& box, const SamplerConfig& cfg,
                           std::size_t workers, const TrainOptions& train_opts) {
  validate_sampler_config(cfg);
  box.validate();
  if (box.dimension() != ev.dimension()) throw ContractError("generate_dataset: box dimension mismatch");
  const std::string id = ev.contingency_id();
  Collector col(cfg.max_evaluations);
  int next_path = 0;

  const auto seeds = seed_initial_ops(box, cfg.n_seeds, cfg.rng_seed, cfg.load_band_min, cfg.load_band_max);
  const auto seed_samples = parallel_map(seeds.size(), workers, [&](std::size_t i) {
    if (!ev.feasible(seeds[i])) return infeasible_sample(seeds[i], id, Provenance::Seed);
    return make_sample(seeds[i], id, ev.evaluate(seeds[i], true), Provenance::Seed);
  });
  double phi_ref = cfg.phi_ref;
  bool any_feasible = false;
  for (const auto& s : seed_samples) {
    if (s.feasible()) {
      if (!any_feasible && phi_ref <= 0.0) phi_ref = std::abs(s.phi) > 0.0 ? std::abs(s.phi) : 1.0;
      any_feasible = true;
    }
  }
  if (!any_feasible) throw InfeasibleError("generate_dataset: all seeds are infeasible");

  // Descent toward the boundary (route 1) and bisection on a label change (route 2).
  const auto paths = parallel_map(seed_samples.size(), workers, [&](std::size_t i) {
    std::vector<Sample> trail;
    const Sample& seed = seed_samples[i];
    if (!seed.feasible() || !seed.grad) return trail;
    Rng rng = derive_rng(cfg.rng_seed, 0x0de5, static_cast<std::uint32_t>(i));
    Sample cur = seed;
    for (std::size_t stepi = 0; stepi < cfg.max_route_steps; ++stepi) {
      std::optional<Sample> landed;
      double shrink = 1.0;
      for (std::size_t refl = 0; refl <= cfg.max_reflections; ++refl, shrink *= 0.5) {
        OperatingPoint next;
        try {
          next = step_toward_boundary(cur, cfg, box, phi_ref, shrink);
        } catch (const StationaryPointError&) {
          std::vector<double> u(box.dimension());
          for (std::size_t k = 0; k < u.size(); ++k) {
            u[k] = cur.u()[k] + shrink * cfg.nu_max * box.u_max[k] * uniform(rng, -1.0, 1.0);
          }
          next.gen_p = box.clip(u);
          next.load_scale = cur.op.load_scale;
        }
        if (next.gen_p == cur.op.gen_p) break;
        if (!ev.feasible(next)) {
          trail.push_back(infeasible_sample(next, id, Provenance::Route1));
          continue;
        }
        landed = make_sample(next, id, ev.evaluate(next, true), Provenance::Route1);
        trail.push_back(*landed);
        break;
      }
      if (!landed || !landed->feasible()) break;
      if (landed->label != cur.label) {
        try {
          bisect_crossing(cur, *landed, ev, cfg.phi_cri, cfg.bisect_width, &trail);
        } catch (const InfeasibleError&) {
        }
        break;
      }
      if (!landed->grad) break;
      cur = std::move(*landed);
    }
    return trail;
  });
  for (std::size_t i = 0; i < seed_samples.size(); ++i) {
    int step = 0;
    const int path = next_path++;
    col.add(seed_samples[i], path, step);
    for (const auto& s : paths[i]) {
      if (!col.add(s, path, step)) break;
    }
  }

  // Traversal along the boundary from every critical sample found so far (route 3).
  const double step_len = cfg.traverse_step * *std::max_element(box.u_max.begin(), box.u_max.end());
  std::vector<Sample> origins;
  for (const auto& s : col.samples()) {
    if (s.critical && s.grad) origins.push_back(s);
  }
  std::vector<std::vector<double>> known;
  for (const auto& s : origins) known.push_back(s.u());
  std::vector<std::vector<double>> covered;
  for (std::size_t oi = 0; oi < origins.size() && !col.exhausted(); ++oi) {
    const auto& o = origins[oi];
    const bool done = std::any_of(covered.begin(), covered.end(), [&](const std::vector<double>& k) {
      return sqdist(k, o.u()) < 0.5625 * step_len * step_len;
    });
    if (done) continue;
    Rng rng = derive_rng(cfg.rng_seed, 0x7a7e, static_cast<std::uint32_t>(oi));
    const auto res = traverse_boundary(o, ev, cfg, box, rng, known, col.remaining());
    int step = 0;
    const int path = next_path++;
    for (const auto& s : res.trail) {
      if (!col.add(s, path, step)) break;
    }
    covered.push_back(o.u());
    for (const auto& p : res.points) {
      known.push_back(p.gen_p);
      covered.push_back(p.gen_p);
    }
  }

  SampleSet set;
  set.config = cfg;
  set.lower = box.lower;
  set.upper = box.upper;

  // Maximin re-sampling of the gaps left along the trained boundary.
  const double gamma_cri = cfg.effective_gamma_cri(box.u_max);
  const auto loads = mid_band_loads(box, cfg);
  TrainOptions round_opts = train_opts;
  for (std::size_t round = 0; round < cfg.resample_rounds && !col.exhausted(); ++round) {
    set.samples = col.samples();
    BoundaryModel model;
    std::vector<GapCandidate> cands;
    try {
      model = train(set, round_opts);
      // hyperparameters are searched once, later rounds refit only
      round_opts.c = model.c;
      round_opts.kernel_gamma = model.kernel_gamma;
      auto screen = [&](const std::vector<double>& u) { return ev.feasible(OperatingPoint{u, loads}); };
      cands = resample_gaps(set, model, box, cfg.resample_points,
                            cfg.rng_seed + 0x9e3779b97f4a7c15ULL * (round + 1), cfg.resample_pool, screen,
                            cfg.traverse_step);
    } catch (const NoBoundaryError&) {
      break;
    }
    if (cands.empty()) break;
    std::vector<double> gammas;
    for (const auto& c : cands) gammas.push_back(c.gamma);
    set.trace.round_gammas.push_back(gammas);
    if (check_termination(gammas, gamma_cri)) {
      set.trace.terminated = true;
      break;
    }
    const auto trails = parallel_map(cands.size(), workers, [&](std::size_t i) {
      std::vector<Sample> trail;
      const OperatingPoint op{cands[i].u, loads};
      Sample s = make_sample(op, id, ev.evaluate(op, true), Provenance::GapResample);
      trail.push_back(s);
      if (s.feasible()) correct_to_boundary(s, ev, cfg, box, step_len / 8.0, trail);
      for (auto& t : trail) t.provenance = Provenance::GapResample;
      return trail;
    });
    for (const auto& trail : trails) {
      int step = 0;
      const int path = next_path++;
      for (const auto& s : trail) {
        if (!col.add(s, path, step)) break;
      }
    }
  }

  set.samples = std::move(col.samples());
  std::stable_sort(set.samples.begin(), set.samples.end(), [](const Sample& a, const Sample& b) {
    if (a.provenance != b.provenance) return static_cast<int>(a.provenance) < static_cast<int>(b.provenance);
    if (a.path != b.path) return a.path < b.path;
    return a.step < b.step;
  });
  set.trace.evaluations = col.evaluations();
  return set;
}

SampleSet generate_dataset(const GridCase& c, const Contingency& cont, const SamplerConfig& cfg,
                           const SimConfig& sim, std::size_t workers) {
  const GridEvaluator ev(c, cont, sim);
  SampleSet set = generate_dataset(ev, SearchSpace::from_case(c), cfg, workers);
  set.case_ref = c.name;
  return set;
}

SampleSet baseline_dataset(const OpEvaluator& ev, const SearchSpace& box, std::size_t n, std::uint64_t rng_seed,
                           bool latin, double load_min, double load_max, std::size_t workers) {
  box.validate();
  std::vector<OperatingPoint> ops;
  if (latin) {
    ops = seed_initial_ops(box, n, rng_seed, load_min, load_max);
  } else {
    Rng rng = derive_rng(rng_seed, 0xba5e);
    for (std::size_t i = 0; i < n; ++i) {
      OperatingPoint op;
      for (std::size_t k = 0; k < box.dimension(); ++k) op.gen_p.push_back(uniform(rng, box.lower[k], box.upper[k]));
      for (std::size_t l = 0; l < box.n_loads; ++l) op.load_scale.push_back(uniform(rng, load_min, load_max));
      ops.push_back(std::move(op));
    }
  }
  const std::string id = ev.contingency_id();
  auto samples = parallel_map(ops.size(), workers, [&](std::size_t i) {
    if (!ev.feasible(ops[i])) return infeasible_sample(ops[i], id, Provenance::Baseline);
    return make_sample(ops[i], id, ev.evaluate(ops[i], false), Provenance::Baseline);
  });
  SampleSet set;
  set.lower = box.lower;
  set.upper = box.upper;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].path = -1;
    samples[i].step = static_cast<int>(i);
    if (samples[i].feasible()) ++set.trace.evaluations;
  }
  set.samples = std::move(samples);
  return set;
}

}  // namespace tsb
