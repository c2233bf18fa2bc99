#include "tsb/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tsb/error.hpp"
#include "tsb/tds.hpp"

namespace tsb {

using nlohmann::json;

namespace {

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError("missing field '" + std::string(key) + "' in " + where);
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError("field '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

template <typename T>
T optional_field(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError("field '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

const json& required_array(const json& j, const char* key) {
  if (!j.contains(key)) throw ParseError("missing field '" + std::string(key) + "'");
  const json& a = j.at(key);
  if (!a.is_array()) throw ParseError("field '" + std::string(key) + "' must be an array");
  return a;
}

std::string default_branch_id(int from, int to) {
  return std::to_string(from) + "-" + std::to_string(to);
}

constexpr double kLimitSlack = 1e-9;

}  // namespace

std::size_t GridCase::bus_index(int bus_id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == bus_id) return i;
  }
  throw ValidationError("unknown bus id " + std::to_string(bus_id));
}

std::size_t GridCase::branch_index(std::string_view branch_id) const {
  for (std::size_t i = 0; i < branches.size(); ++i) {
    if (branches[i].id == branch_id) return i;
  }
  throw ValidationError("unknown branch id '" + std::string(branch_id) + "'");
}

std::size_t GridCase::slack_index() const {
  for (std::size_t i = 0; i < generators.size(); ++i) {
    if (generators[i].is_slack) return i;
  }
  throw ValidationError("case has no slack generator");
}

std::vector<std::size_t> GridCase::controllable() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < generators.size(); ++i) {
    if (!generators[i].is_slack) out.push_back(i);
  }
  return out;
}

std::vector<double> GridCase::u_min() const {
  std::vector<double> out;
  for (auto i : controllable()) out.push_back(generators[i].p_min);
  return out;
}

std::vector<double> GridCase::u_max() const {
  std::vector<double> out;
  for (auto i : controllable()) out.push_back(generators[i].p_max);
  return out;
}

OperatingPoint reference_op(const GridCase& c, std::vector<double> gen_p) {
  OperatingPoint op;
  op.gen_p = std::move(gen_p);
  op.load_scale.assign(c.loads.size(), 1.0);
  return op;
}

void validate_op(const GridCase& c, const OperatingPoint& op) {
  if (op.gen_p.size() != c.n_controllable()) {
    throw ContractError("operating point has " + std::to_string(op.gen_p.size()) +
                        " controllable outputs, case expects " +
                        std::to_string(c.n_controllable()));
  }
  if (op.load_scale.size() != c.loads.size()) {
    throw ContractError("operating point has " + std::to_string(op.load_scale.size()) +
                        " load multipliers, case has " + std::to_string(c.loads.size()) +
                        " loads");
  }
  const auto ctrl = c.controllable();
  for (std::size_t j = 0; j < ctrl.size(); ++j) {
    const auto& g = c.generators[ctrl[j]];
    if (!std::isfinite(op.gen_p[j]) || op.gen_p[j] < g.p_min - kLimitSlack ||
        op.gen_p[j] > g.p_max + kLimitSlack) {
      throw ContractError("gen_p[" + std::to_string(j) + "] outside generator limits");
    }
  }
}

void validate_case(const GridCase& c) {
  if (!(c.base_mva > 0.0)) throw ValidationError("base_mva must be positive");
  if (c.buses.empty()) throw ValidationError("case has no buses");
  std::set<int> ids;
  for (const auto& b : c.buses) {
    if (!ids.insert(b.id).second) throw ValidationError("duplicate bus id " + std::to_string(b.id));
    if (!(b.v_min <= b.v_max)) throw ValidationError("bus " + std::to_string(b.id) + ": v_min > v_max");
  }
  std::set<std::string> branch_ids;
  for (const auto& br : c.branches) {
    if (!ids.count(br.from) || !ids.count(br.to)) {
      throw ValidationError("branch '" + br.id + "' references a nonexistent bus");
    }
    if (br.from == br.to) throw ValidationError("branch '" + br.id + "' is a self loop");
    if (br.r == 0.0 && br.x == 0.0) throw ValidationError("branch '" + br.id + "' has zero impedance");
    if (!branch_ids.insert(br.id).second) throw ValidationError("duplicate branch id '" + br.id + "'");
  }
  int slack = 0;
  for (std::size_t i = 0; i < c.generators.size(); ++i) {
    const auto& g = c.generators[i];
    const std::string name = "generator " + std::to_string(i);
    if (!ids.count(g.bus)) throw ValidationError(name + " is on nonexistent bus " + std::to_string(g.bus));
    if (!(g.inertia_tj > 0.0)) throw ValidationError(name + ": tj must be positive");
    if (!(g.xd_prime > 0.0)) throw ValidationError(name + ": xd_prime must be positive");
    if (!(g.p_min <= g.p_max)) throw ValidationError(name + ": p_min > p_max");
    if (!(g.q_min <= g.q_max)) throw ValidationError(name + ": q_min > q_max");
    if (g.is_slack) ++slack;
  }
  if (slack != 1) throw ValidationError("case must have exactly one slack generator, found " + std::to_string(slack));
  for (const auto& l : c.loads) {
    if (!ids.count(l.bus)) throw ValidationError("load on nonexistent bus " + std::to_string(l.bus));
  }
}

GridCase parse_case(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("case is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("case must be a JSON object");

  GridCase c;
  c.name = optional_field<std::string>(j, "name", "", "case");
  c.base_mva = required<double>(j, "base_mva", "case");

  const auto& buses = required_array(j, "buses");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const std::string where = "buses[" + std::to_string(i) + "]";
    Bus b;
    b.id = required<int>(buses[i], "id", where);
    b.v_setpoint = required<double>(buses[i], "v_setpoint", where);
    b.v_min = required<double>(buses[i], "v_min", where);
    b.v_max = required<double>(buses[i], "v_max", where);
    c.buses.push_back(b);
  }
  const auto& branches = required_array(j, "branches");
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const std::string where = "branches[" + std::to_string(i) + "]";
    Branch br;
    br.from = required<int>(branches[i], "from", where);
    br.to = required<int>(branches[i], "to", where);
    br.r = required<double>(branches[i], "r", where);
    br.x = required<double>(branches[i], "x", where);
    br.b = required<double>(branches[i], "b", where);
    br.rating = required<double>(branches[i], "rating", where);
    br.id = optional_field<std::string>(branches[i], "id", default_branch_id(br.from, br.to), where);
    c.branches.push_back(br);
  }
  const auto& gens = required_array(j, "generators");
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const std::string where = "generators[" + std::to_string(i) + "]";
    GeneratorParams g;
    g.bus = required<int>(gens[i], "bus", where);
    g.inertia_tj = required<double>(gens[i], "tj", where);
    g.xd_prime = required<double>(gens[i], "xd_prime", where);
    g.damping = required<double>(gens[i], "damping", where);
    g.p_min = required<double>(gens[i], "p_min", where);
    g.p_max = required<double>(gens[i], "p_max", where);
    g.q_min = required<double>(gens[i], "q_min", where);
    g.q_max = required<double>(gens[i], "q_max", where);
    g.is_slack = required<bool>(gens[i], "slack", where);
    c.generators.push_back(g);
  }
  const auto& loads = required_array(j, "loads");
  for (std::size_t i = 0; i < loads.size(); ++i) {
    const std::string where = "loads[" + std::to_string(i) + "]";
    Load l;
    l.bus = required<int>(loads[i], "bus", where);
    l.p_mw = required<double>(loads[i], "p_mw", where);
    l.q_mvar = required<double>(loads[i], "q_mvar", where);
    c.loads.push_back(l);
  }
  validate_case(c);
  return c;
}

GridCase load_case_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str());
}

std::string case_to_json(const GridCase& c) {
  json j;
  if (!c.name.empty()) j["name"] = c.name;
  j["base_mva"] = c.base_mva;
  j["buses"] = json::array();
  for (const auto& b : c.buses) {
    j["buses"].push_back({{"id", b.id}, {"v_setpoint", b.v_setpoint}, {"v_min", b.v_min}, {"v_max", b.v_max}});
  }
  j["branches"] = json::array();
  for (const auto& br : c.branches) {
    j["branches"].push_back({{"id", br.id}, {"from", br.from}, {"to", br.to}, {"r", br.r},
                             {"x", br.x}, {"b", br.b}, {"rating", br.rating}});
  }
  j["generators"] = json::array();
  for (const auto& g : c.generators) {
    j["generators"].push_back({{"bus", g.bus}, {"tj", g.inertia_tj}, {"xd_prime", g.xd_prime},
                               {"damping", g.damping}, {"p_min", g.p_min}, {"p_max", g.p_max},
                               {"q_min", g.q_min}, {"q_max", g.q_max}, {"slack", g.is_slack}});
  }
  j["loads"] = json::array();
  for (const auto& l : c.loads) {
    j["loads"].push_back({{"bus", l.bus}, {"p_mw", l.p_mw}, {"q_mvar", l.q_mvar}});
  }
  return j.dump(2);
}

Admittance build_admittance(const GridCase& c, const TopologyVariant& variant) {
  const std::size_t nb = c.buses.size();
  std::optional<std::size_t> skip_branch;
  if (variant.kind == TopologyVariant::Kind::PostFault && !variant.tripped_branch.empty()) {
    skip_branch = c.branch_index(variant.tripped_branch);
  }
  std::optional<std::size_t> faulted;
  if (variant.kind == TopologyVariant::Kind::FaultOn) faulted = c.bus_index(variant.fault_bus);

  ComplexMatrix y = ComplexMatrix::Zero(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(nb));
  for (std::size_t k = 0; k < c.branches.size(); ++k) {
    if (skip_branch && *skip_branch == k) continue;
    const auto& br = c.branches[k];
    const auto f = static_cast<Eigen::Index>(c.bus_index(br.from));
    const auto t = static_cast<Eigen::Index>(c.bus_index(br.to));
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex ysh(0.0, br.b / 2.0);
    y(f, f) += ys + ysh;
    y(t, t) += ys + ysh;
    y(f, t) -= ys;
    y(t, f) -= ys;
  }

  if (skip_branch) {
    // The remaining network must stay connected.
    std::vector<std::vector<std::size_t>> adj(nb);
    for (std::size_t k = 0; k < c.branches.size(); ++k) {
      if (k == *skip_branch) continue;
      const auto f = c.bus_index(c.branches[k].from);
      const auto t = c.bus_index(c.branches[k].to);
      adj[f].push_back(t);
      adj[t].push_back(f);
    }
    std::vector<bool> seen(nb, false);
    std::queue<std::size_t> todo;
    todo.push(0);
    seen[0] = true;
    std::size_t reached = 1;
    while (!todo.empty()) {
      const auto v = todo.front();
      todo.pop();
      for (auto w : adj[v]) {
        if (!seen[w]) {
          seen[w] = true;
          ++reached;
          todo.push(w);
        }
      }
    }
    if (reached != nb) {
      throw TopologyError("tripping branch '" + variant.tripped_branch + "' islands part of the network");
    }
  }

  Admittance out;
  if (!faulted) {
    out.y = std::move(y);
    for (const auto& b : c.buses) out.bus_ids.push_back(b.id);
    return out;
  }
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < nb; ++i) {
    if (i == *faulted) continue;
    rows.push_back(static_cast<Eigen::Index>(i));
    out.bus_ids.push_back(c.buses[i].id);
  }
  out.y = y(rows, rows);
  return out;
}

namespace {

struct BusInjections {
  Eigen::VectorXd p_spec;  // pu, generation minus load
  Eigen::VectorXd q_load;  // pu
  Eigen::VectorXd p_load;
  std::vector<double> gen_p_mw;  // all generators; slack entry is a placeholder
};

BusInjections injections(const GridCase& c, const OperatingPoint& op) {
  const auto nb = static_cast<Eigen::Index>(c.buses.size());
  BusInjections inj;
  inj.p_spec = Eigen::VectorXd::Zero(nb);
  inj.q_load = Eigen::VectorXd::Zero(nb);
  inj.p_load = Eigen::VectorXd::Zero(nb);
  inj.gen_p_mw.assign(c.generators.size(), 0.0);
  const auto ctrl = c.controllable();
  for (std::size_t j = 0; j < ctrl.size(); ++j) {
    inj.gen_p_mw[ctrl[j]] = op.gen_p[j];
    inj.p_spec(static_cast<Eigen::Index>(c.bus_index(c.generators[ctrl[j]].bus))) += op.gen_p[j] / c.base_mva;
  }
  for (std::size_t l = 0; l < c.loads.size(); ++l) {
    const auto b = static_cast<Eigen::Index>(c.bus_index(c.loads[l].bus));
    inj.p_load(b) += op.load_scale[l] * c.loads[l].p_mw / c.base_mva;
    inj.q_load(b) += op.load_scale[l] * c.loads[l].q_mvar / c.base_mva;
  }
  inj.p_spec -= inj.p_load;
  return inj;
}

enum class BusType { PQ, PV, Slack };

std::vector<BusType> bus_types(const GridCase& c) {
  std::vector<BusType> types(c.buses.size(), BusType::PQ);
  for (const auto& g : c.generators) {
    auto& t = types[c.bus_index(g.bus)];
    if (g.is_slack) {
      t = BusType::Slack;
    } else if (t != BusType::Slack) {
      t = BusType::PV;
    }
  }
  return types;
}

// Splits bus reactive injection equally between the generators on each bus.
std::vector<double> split_gen_q(const GridCase& c, const ComplexVector& s_inj, const Eigen::VectorXd& q_load) {
  std::vector<int> count(c.buses.size(), 0);
  for (const auto& g : c.generators) ++count[c.bus_index(g.bus)];
  std::vector<double> q(c.generators.size(), 0.0);
  for (std::size_t i = 0; i < c.generators.size(); ++i) {
    const auto b = c.bus_index(c.generators[i].bus);
    const auto bi = static_cast<Eigen::Index>(b);
    q[i] = (s_inj(bi).imag() + q_load(bi)) * c.base_mva / count[b];
  }
  return q;
}

}  // namespace

ComplexVector power_mismatch(const GridCase& c, const OperatingPoint& op, const ComplexVector& voltages,
                             double slack_p_mw, const std::vector<double>& gen_q_mvar) {
  const auto inj = injections(c, op);
  const ComplexMatrix& y = build_admittance(c, TopologyVariant::pre_fault()).y;
  const ComplexVector s_calc = voltages.cwiseProduct((y * voltages).conjugate());
  const auto nb = static_cast<Eigen::Index>(c.buses.size());
  ComplexVector s_spec(nb);
  for (Eigen::Index i = 0; i < nb; ++i) s_spec(i) = Complex(inj.p_spec(i), -inj.q_load(i));
  const auto slack = c.slack_index();
  s_spec(static_cast<Eigen::Index>(c.bus_index(c.generators[slack].bus))) += slack_p_mw / c.base_mva;
  for (std::size_t g = 0; g < c.generators.size(); ++g) {
    s_spec(static_cast<Eigen::Index>(c.bus_index(c.generators[g].bus))) += Complex(0.0, gen_q_mvar[g] / c.base_mva);
  }
  return s_spec - s_calc;
}

PowerFlowSolution solve_power_flow(const GridCase& c, const OperatingPoint& op, const PowerFlowOptions& opts) {
  if (op.gen_p.size() != c.n_controllable() || op.load_scale.size() != c.loads.size()) {
    throw ContractError("operating point dimensions do not match the case");
  }
  const auto nb = static_cast<Eigen::Index>(c.buses.size());
  const ComplexMatrix y = build_admittance(c, TopologyVariant::pre_fault()).y;
  const auto inj = injections(c, op);
  const auto types = bus_types(c);

  std::vector<Eigen::Index> pvpq, pq;
  for (Eigen::Index i = 0; i < nb; ++i) {
    if (types[static_cast<std::size_t>(i)] != BusType::Slack) pvpq.push_back(i);
    if (types[static_cast<std::size_t>(i)] == BusType::PQ) pq.push_back(i);
  }
  const auto npvpq = static_cast<Eigen::Index>(pvpq.size());
  const auto npq = static_cast<Eigen::Index>(pq.size());

  Eigen::VectorXd vm(nb), va = Eigen::VectorXd::Zero(nb);
  for (Eigen::Index i = 0; i < nb; ++i) vm(i) = c.buses[static_cast<std::size_t>(i)].v_setpoint;

  auto voltages = [&]() {
    ComplexVector v(nb);
    for (Eigen::Index i = 0; i < nb; ++i) v(i) = std::polar(vm(i), va(i));
    return v;
  };
  auto mismatch = [&](const ComplexVector& v, Eigen::VectorXd& f) {
    const ComplexVector s = v.cwiseProduct((y * v).conjugate());
    f.resize(npvpq + npq);
    for (Eigen::Index k = 0; k < npvpq; ++k) f(k) = s(pvpq[k]).real() - inj.p_spec(pvpq[k]);
    for (Eigen::Index k = 0; k < npq; ++k) f(npvpq + k) = s(pq[k]).imag() + inj.q_load(pq[k]);
  };

  PowerFlowSolution sol;
  ComplexVector v = voltages();
  Eigen::VectorXd f;
  mismatch(v, f);
  double norm = f.size() ? f.lpNorm<Eigen::Infinity>() : 0.0;
  int it = 0;
  while (norm > opts.tolerance && it < opts.max_iterations) {
    ++it;
    // Complex power derivatives in polar form.
    const ComplexVector ibus = y * v;
    const ComplexMatrix diag_v = v.asDiagonal();
    ComplexVector v_norm(nb);
    for (Eigen::Index i = 0; i < nb; ++i) v_norm(i) = v(i) / std::abs(v(i));
    const ComplexMatrix ds_dva = Complex(0.0, 1.0) * diag_v *
                                 (ComplexMatrix(ibus.asDiagonal()) - y * diag_v).conjugate();
    const ComplexMatrix ds_dvm = diag_v * (y * ComplexMatrix(v_norm.asDiagonal())).conjugate() +
                                 ComplexMatrix(ibus.conjugate().asDiagonal()) * ComplexMatrix(v_norm.asDiagonal());
    Eigen::MatrixXd jac(npvpq + npq, npvpq + npq);
    for (Eigen::Index r = 0; r < npvpq; ++r) {
      for (Eigen::Index s = 0; s < npvpq; ++s) jac(r, s) = ds_dva(pvpq[r], pvpq[s]).real();
      for (Eigen::Index s = 0; s < npq; ++s) jac(r, npvpq + s) = ds_dvm(pvpq[r], pq[s]).real();
    }
    for (Eigen::Index r = 0; r < npq; ++r) {
      for (Eigen::Index s = 0; s < npvpq; ++s) jac(npvpq + r, s) = ds_dva(pq[r], pvpq[s]).imag();
      for (Eigen::Index s = 0; s < npq; ++s) jac(npvpq + r, npvpq + s) = ds_dvm(pq[r], pq[s]).imag();
    }
    const Eigen::VectorXd dx = jac.partialPivLu().solve(-f);
    if (!dx.allFinite()) break;
    for (Eigen::Index k = 0; k < npvpq; ++k) va(pvpq[k]) += dx(k);
    for (Eigen::Index k = 0; k < npq; ++k) vm(pq[k]) += dx(npvpq + k);
    v = voltages();
    mismatch(v, f);
    norm = f.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(norm) || norm > 1e10) break;
  }

  sol.bus_voltages = v;
  sol.iterations = it;
  sol.mismatch = norm;
  sol.converged = std::isfinite(norm) && norm <= opts.tolerance && vm.minCoeff() > 0.0;

  const ComplexVector s_inj = v.cwiseProduct((y * v).conjugate());
  sol.gen_p = inj.gen_p_mw;
  const auto slack = c.slack_index();
  const auto sb = static_cast<Eigen::Index>(c.bus_index(c.generators[slack].bus));
  double other = 0.0;
  for (std::size_t g = 0; g < c.generators.size(); ++g) {
    if (g != slack && c.generators[g].bus == c.generators[slack].bus) other += inj.gen_p_mw[g];
  }
  sol.slack_p = (s_inj(sb).real() + inj.p_load(sb)) * c.base_mva - other;
  sol.gen_p[slack] = sol.slack_p;
  sol.gen_q = split_gen_q(c, s_inj, inj.q_load);
  return sol;
}

StaticLimitsReport check_static_limits(const GridCase& c, const PowerFlowSolution& sol) {
  if (!sol.converged) throw ContractError("static limits checked on a non-converged power flow");
  StaticLimitsReport rep;
  for (std::size_t i = 0; i < c.buses.size(); ++i) {
    const double vm = std::abs(sol.bus_voltages(static_cast<Eigen::Index>(i)));
    const auto& b = c.buses[i];
    if (vm < b.v_min - kLimitSlack) rep.violations.push_back({ViolationKind::Voltage, b.id, vm, b.v_min});
    if (vm > b.v_max + kLimitSlack) rep.violations.push_back({ViolationKind::Voltage, b.id, vm, b.v_max});
  }
  for (std::size_t g = 0; g < c.generators.size(); ++g) {
    const auto& gen = c.generators[g];
    const int id = static_cast<int>(g);
    if (sol.gen_q[g] < gen.q_min - kLimitSlack) rep.violations.push_back({ViolationKind::GenQ, id, sol.gen_q[g], gen.q_min});
    if (sol.gen_q[g] > gen.q_max + kLimitSlack) rep.violations.push_back({ViolationKind::GenQ, id, sol.gen_q[g], gen.q_max});
  }
  const auto slack = c.slack_index();
  const auto& sg = c.generators[slack];
  const int sid = static_cast<int>(slack);
  if (sol.slack_p < sg.p_min - kLimitSlack) rep.violations.push_back({ViolationKind::SlackP, sid, sol.slack_p, sg.p_min});
  if (sol.slack_p > sg.p_max + kLimitSlack) rep.violations.push_back({ViolationKind::SlackP, sid, sol.slack_p, sg.p_max});
  rep.feasible = rep.violations.empty();
  return rep;
}

ComplexMatrix kron_reduce(const ComplexMatrix& y, const std::vector<std::size_t>& keep) {
  const auto n = static_cast<std::size_t>(y.rows());
  std::vector<bool> kept(n, false);
  std::vector<Eigen::Index> k_idx, e_idx;
  for (auto k : keep) {
    if (k >= n) throw ContractError("kron_reduce: node index out of range");
    kept[k] = true;
    k_idx.push_back(static_cast<Eigen::Index>(k));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!kept[i]) e_idx.push_back(static_cast<Eigen::Index>(i));
  }
  const ComplexMatrix ykk = y(k_idx, k_idx);
  if (e_idx.empty()) return ykk;
  const ComplexMatrix yee = y(e_idx, e_idx);
  const ComplexMatrix yke = y(k_idx, e_idx);
  const ComplexMatrix yek = y(e_idx, k_idx);
  Eigen::FullPivLU<ComplexMatrix> lu(yee);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw NumericalError("kron_reduce: eliminated block is singular");
  return ykk - yke * lu.solve(yek);
}

std::vector<double> electrical_power(const ComplexMatrix& y_red, const std::vector<double>& emf,
                                     const std::vector<double>& delta) {
  const auto n = static_cast<Eigen::Index>(emf.size());
  ComplexVector e(n);
  for (Eigen::Index i = 0; i < n; ++i) e(i) = std::polar(emf[static_cast<std::size_t>(i)], delta[static_cast<std::size_t>(i)]);
  const ComplexVector cur = y_red * e;
  std::vector<double> pe(emf.size());
  for (Eigen::Index i = 0; i < n; ++i) pe[static_cast<std::size_t>(i)] = (e(i) * std::conj(cur(i))).real();
  return pe;
}

namespace {

// Network + constant-impedance loads + internal machine nodes; buses first,
// then one internal node per generator.
ComplexMatrix augmented_network(const GridCase& c, const OperatingPoint& op, const PowerFlowSolution& sol,
                                const Admittance& net, std::vector<std::size_t>& internal) {
  const std::size_t nk = net.bus_ids.size();
  const std::size_t ng = c.generators.size();
  std::map<int, std::size_t> row_of;
  for (std::size_t i = 0; i < nk; ++i) row_of[net.bus_ids[i]] = i;

  const auto n = static_cast<Eigen::Index>(nk + ng);
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  y.topLeftCorner(static_cast<Eigen::Index>(nk), static_cast<Eigen::Index>(nk)) = net.y;
  for (std::size_t l = 0; l < c.loads.size(); ++l) {
    auto it = row_of.find(c.loads[l].bus);
    if (it == row_of.end()) continue;  // load on a faulted bus is shorted out
    const Complex v = sol.bus_voltages(static_cast<Eigen::Index>(c.bus_index(c.loads[l].bus)));
    const Complex s(op.load_scale[l] * c.loads[l].p_mw / c.base_mva, op.load_scale[l] * c.loads[l].q_mvar / c.base_mva);
    const double v2 = std::norm(v);
    if (v2 <= 0.0) throw NumericalError("load bus with zero voltage");
    const auto r = static_cast<Eigen::Index>(it->second);
    y(r, r) += std::conj(s) / v2;
  }
  internal.clear();
  for (std::size_t g = 0; g < ng; ++g) {
    const auto gi = static_cast<Eigen::Index>(nk + g);
    internal.push_back(nk + g);
    const Complex yg = 1.0 / Complex(0.0, c.generators[g].xd_prime);
    y(gi, gi) += yg;
    auto it = row_of.find(c.generators[g].bus);
    if (it == row_of.end()) continue;  // terminal bus faulted: internal node sees the short only
    const auto b = static_cast<Eigen::Index>(it->second);
    y(b, b) += yg;
    y(gi, b) -= yg;
    y(b, gi) -= yg;
  }
  return y;
}

ComplexMatrix reduced_for(const GridCase& c, const OperatingPoint& op, const PowerFlowSolution& sol,
                          const TopologyVariant& variant) {
  std::vector<std::size_t> internal;
  const ComplexMatrix aug = augmented_network(c, op, sol, build_admittance(c, variant), internal);
  return kron_reduce(aug, internal);
}

}  // namespace

DynamicInit init_dynamic_state(const GridCase& c, const OperatingPoint& op, const PowerFlowSolution& sol,
                               const Contingency* cont) {
  if (!sol.converged) throw ContractError("dynamic initialization needs a converged power flow");
  const std::size_t ng = c.generators.size();
  DynamicInit init;
  init.emf_mag.resize(ng);
  init.delta0.resize(ng);
  init.omega0.assign(ng, 1.0);
  for (std::size_t g = 0; g < ng; ++g) {
    const auto& gen = c.generators[g];
    const Complex v = sol.bus_voltages(static_cast<Eigen::Index>(c.bus_index(gen.bus)));
    const Complex s(sol.gen_p[g] / c.base_mva, sol.gen_q[g] / c.base_mva);
    if (std::abs(v) == 0.0) {
      if (std::abs(s) == 0.0) throw NumericalError("degenerate initialization: zero voltage and current");
      throw NumericalError("generator terminal voltage is zero");
    }
    const Complex cur = std::conj(s / v);
    const Complex e = v + Complex(0.0, gen.xd_prime) * cur;
    init.emf_mag[g] = std::abs(e);
    init.delta0[g] = std::arg(e);
    if (!(init.emf_mag[g] > 0.0) || !std::isfinite(init.delta0[g])) {
      throw NumericalError("degenerate initialization for generator " + std::to_string(g));
    }
    init.inertia.push_back(gen.inertia_tj);
    init.damping.push_back(gen.damping);
  }

  init.y_pre = reduced_for(c, op, sol, TopologyVariant::pre_fault());
  init.y_fault = init.y_pre;
  init.y_post = init.y_pre;
  if (cont) {
    if (cont->fault_bus) init.y_fault = reduced_for(c, op, sol, TopologyVariant::fault_on(*cont->fault_bus));
    if (cont->tripped_branch) init.y_post = reduced_for(c, op, sol, TopologyVariant::post_fault(*cont->tripped_branch));
  }
  init.pm = electrical_power(init.y_pre, init.emf_mag, init.delta0);
  return init;
}

}  // namespace tsb
