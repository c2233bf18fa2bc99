#include "tsb/monitor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tsb/error.hpp"
#include "tsb/io.hpp"
#include "tsb/parallel.hpp"

namespace tsb {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(what + ": " + e.what());
  }
}

// Non-finite doubles become null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num_or(const json& j, const char* key, double fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<double>();
}

template <typename T>
void read_if(const json& j, const char* key, T& dst) {
  if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<T>();
}

std::vector<double> mat_row(const Eigen::MatrixXd& m, Eigen::Index i) {
  return {m.row(i).begin(), m.row(i).end()};
}

json matrix_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(mat_row(m, i));
  return a;
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = n ? static_cast<Eigen::Index>(rows.front().size()) : 0;
  Eigen::MatrixXd out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != m) throw ParseError("ragged matrix");
    for (Eigen::Index k = 0; k < m; ++k) out(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  return out;
}

}  // namespace

// ---- configuration ----

std::string sim_config_to_json(const SimConfig& c) {
  return json{{"t_end", c.t_end}, {"dt", c.dt}, {"delta_max", c.delta_max}, {"omega_s", c.omega_s}}.dump();
}

SimConfig sim_config_from_json(const std::string& text) {
  const json j = parse_json(text, "sim config");
  SimConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      if (k != "t_end" && k != "dt" && k != "delta_max" && k != "omega_s") throw ParseError("sim config: unknown key '" + k + "'");
    }
    read_if(j, "t_end", c.t_end);
    read_if(j, "dt", c.dt);
    read_if(j, "delta_max", c.delta_max);
    read_if(j, "omega_s", c.omega_s);
  } catch (const json::exception& e) {
    throw ParseError(std::string("sim config: ") + e.what());
  }
  return c;
}

std::string monitor_config_to_json(const MonitorConfig& c) {
  json scen = json::object();
  scen["op_clusters"] = c.op_clusters ? json(*c.op_clusters) : json(nullptr);
  scen["contingency_clusters"] = c.contingency_clusters ? json(*c.contingency_clusters) : json(nullptr);
  json j{{"sim", json::parse(sim_config_to_json(c.sim))},
         {"sampler", json::parse(sampler_config_to_json(c.sampler))},
         {"thresholds", {{"margin", c.margin}, {"top_k", c.top_k}, {"search_half_width", c.search_half_width}}},
         {"scenario", scen},
         {"seed", c.seed}};
  return j.dump(2);
}

MonitorConfig monitor_config_from_json(const std::string& text) {
  const json j = parse_json(text, "config");
  if (!j.is_object()) throw ParseError("config: expected an object");
  MonitorConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k != "sim" && k != "sampler" && k != "thresholds" && k != "scenario" && k != "seed") {
      throw ParseError("config: unknown section '" + k + "'");
    }
  }
  if (j.contains("sim")) c.sim = sim_config_from_json(j.at("sim").dump());
  if (j.contains("sampler")) c.sampler = sampler_config_from_json(j.at("sampler").dump());
  try {
    if (j.contains("thresholds")) {
      const auto& t = j.at("thresholds");
      read_if(t, "margin", c.margin);
      read_if(t, "top_k", c.top_k);
      read_if(t, "search_half_width", c.search_half_width);
    }
    if (j.contains("scenario")) {
      const auto& s = j.at("scenario");
      if (s.contains("op_clusters") && !s.at("op_clusters").is_null()) c.op_clusters = s.at("op_clusters").get<int>();
      if (s.contains("contingency_clusters") && !s.at("contingency_clusters").is_null()) {
        c.contingency_clusters = s.at("contingency_clusters").get<int>();
      }
    }
    read_if(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (c.top_k == 0) throw ConfigError("config: top_k must be positive");
  if (!(c.search_half_width > 0.0)) throw ConfigError("config: search_half_width must be positive");
  return c;
}

std::vector<Contingency> contingencies_from_json(const std::string& text) {
  const json j = parse_json(text, "contingencies");
  json list;
  if (j.is_array()) {
    list = j;
  } else if (j.is_object() && j.contains("contingencies")) {
    list = j.at("contingencies");
  } else {
    list = json::array({j});
  }
  std::vector<Contingency> out;
  std::set<std::string> ids;
  try {
    for (const auto& e : list) {
      Contingency c;
      c.id = e.at("id").get<std::string>();
      if (e.contains("fault_bus") && !e.at("fault_bus").is_null()) c.fault_bus = e.at("fault_bus").get<int>();
      if (e.contains("tripped_branch") && !e.at("tripped_branch").is_null()) {
        c.tripped_branch = e.at("tripped_branch").get<std::string>();
      }
      read_if(e, "t_clear", c.t_clear);
      if (!ids.insert(c.id).second) throw ValidationError("contingencies: duplicate id '" + c.id + "'");
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("contingencies: ") + e.what());
  }
  if (out.empty()) throw ValidationError("contingencies: empty set");
  return out;
}

std::string contingencies_to_json(const std::vector<Contingency>& set) {
  json a = json::array();
  for (const auto& c : set) {
    a.push_back({{"id", c.id},
                 {"fault_bus", c.fault_bus ? json(*c.fault_bus) : json(nullptr)},
                 {"tripped_branch", c.tripped_branch ? json(*c.tripped_branch) : json(nullptr)},
                 {"t_clear", c.t_clear}});
  }
  return json{{"contingencies", a}}.dump(2);
}

std::vector<OperatingPoint> ops_from_json(const std::string& text) {
  const json j = parse_json(text, "operating points");
  std::vector<OperatingPoint> out;
  try {
    const json& list = j.is_array() ? j : j.at("ops");
    for (const auto& e : list) {
      OperatingPoint op;
      op.gen_p = e.at("gen_p").get<std::vector<double>>();
      op.load_scale = e.value("load_scale", std::vector<double>{});
      out.push_back(std::move(op));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("operating points: ") + e.what());
  }
  return out;
}

std::string ops_to_json(const std::vector<OperatingPoint>& ops) {
  json a = json::array();
  for (const auto& op : ops) a.push_back({{"gen_p", op.gen_p}, {"load_scale", op.load_scale}});
  return json{{"ops", a}}.dump();
}

// ---- offline ----

namespace {

struct Severity {
  double phi;
  int lambda;
};

Severity most_severe(const SensitivityMatrix& psi) {
  std::optional<std::size_t> worst_unstable, nearest_stable;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    if (psi.lambda[i] < 0) {
      if (!worst_unstable || psi.phi[i] > psi.phi[*worst_unstable]) worst_unstable = i;
    } else if (!nearest_stable || psi.phi[i] < psi.phi[*nearest_stable]) {
      nearest_stable = i;
    }
  }
  const std::size_t i = worst_unstable ? *worst_unstable : *nearest_stable;
  return {psi.phi[i], psi.lambda[i]};
}

}  // namespace

OfflineArtifacts run_offline(const GridCase& c, const std::vector<OperatingPoint>& pool,
                             const std::vector<Contingency>& contingencies, const MonitorConfig& cfg,
                             std::size_t workers) {
  if (contingencies.empty()) throw ContractError("offline: no contingencies");
  if (pool.size() < 2) throw InfeasibleError("offline: a Gaussian cluster model needs at least two OPs");
  OfflineArtifacts a;
  std::vector<SensitivityMatrix> full;
  for (const auto& k : contingencies) {
    a.contingency_ids.push_back(k.id);
    full.push_back(build_sensitivity_matrix(c, pool, k, cfg.sim, workers));
  }
  // keep the pool entries usable under every contingency so partitions align
  std::set<std::size_t> common(full.front().op_refs.begin(), full.front().op_refs.end());
  for (const auto& psi : full) {
    std::set<std::size_t> here(psi.op_refs.begin(), psi.op_refs.end());
    std::set<std::size_t> keep;
    std::set_intersection(common.begin(), common.end(), here.begin(), here.end(), std::inserter(keep, keep.end()));
    common = std::move(keep);
  }
  if (common.size() < 2) throw InfeasibleError("offline: fewer than two OPs feasible under every contingency");
  a.pool_refs.assign(common.begin(), common.end());

  SpectralOptions op_opts;
  op_opts.k = cfg.op_clusters;
  op_opts.seed = cfg.seed;
  for (const auto& psi : full) {
    std::vector<std::size_t> pos;
    for (std::size_t i = 0; i < psi.op_refs.size(); ++i) {
      if (common.count(psi.op_refs[i])) pos.push_back(i);
    }
    auto sub = psi.subset(pos);
    const auto sc = spearman_matrix(sub);
    const Eigen::MatrixXd aff = 0.5 * (Eigen::MatrixXd::Ones(sc.sc.rows(), sc.sc.cols()) + sc.sc);
    auto part = spectral_cluster(aff, op_opts).partition;
    std::vector<std::size_t> reps;
    for (auto r : select_representatives(part, sub.phi, sub.lambda)) reps.push_back(sub.op_refs[r]);
    a.op_representatives.push_back(std::move(reps));
    a.op_partitions.push_back(std::move(part));
    a.sensitivities.push_back(std::move(sub));
  }

  SpectralOptions k_opts;
  k_opts.k = cfg.contingency_clusters;
  k_opts.seed = cfg.seed;
  a.contingency_clustering = cluster_contingencies(a.op_partitions, k_opts);
  std::vector<double> sev_phi;
  std::vector<int> sev_lambda;
  for (const auto& psi : a.sensitivities) {
    const auto s = most_severe(psi);
    sev_phi.push_back(s.phi);
    sev_lambda.push_back(s.lambda);
  }
  a.representative_contingencies = select_representatives(a.contingency_clustering.partition, sev_phi, sev_lambda);

  std::vector<std::vector<double>> all_u;
  for (auto i : a.pool_refs) all_u.push_back(pool[i].gen_p);
  const ClusterGaussian pooled = fit_cluster_gaussian(all_u);
  for (auto r : a.representative_contingencies) {
    ScenarioModel s;
    s.contingency = r;
    s.op_partition = a.op_partitions[r];
    const auto& psi = a.sensitivities[r];
    const auto members = s.op_partition.members();
    for (std::size_t cl = 0; cl < members.size(); ++cl) {
      std::vector<std::vector<double>> pts, rows;
      for (auto m : members[cl]) {
        pts.push_back(pool[psi.op_refs[m]].gen_p);
        rows.push_back(psi.rows[m]);
      }
      if (pts.size() >= 2) {
        s.gaussians.push_back(fit_cluster_gaussian(pts));
      } else {
        // singleton cluster: centred on its member with the pooled spread
        ClusterGaussian g = pooled;
        g.mu = pts.front();
        s.gaussians.push_back(std::move(g));
      }
      s.rankings.push_back(rank_mcg(rows, static_cast<int>(cl), cfg.top_k));
    }
    a.scenarios.push_back(std::move(s));
  }
  return a;
}

std::string offline_to_json(const OfflineArtifacts& a) {
  json sens = json::array(), parts = json::array(), scen = json::array();
  for (const auto& s : a.sensitivities) sens.push_back(json::parse(sensitivity_to_json(s)));
  for (const auto& p : a.op_partitions) parts.push_back(json::parse(partition_to_json(p)));
  for (const auto& s : a.scenarios) {
    json g = json::array(), r = json::array();
    for (const auto& x : s.gaussians) g.push_back(json::parse(gaussian_to_json(x)));
    for (const auto& x : s.rankings) r.push_back(json::parse(ranking_to_json(x)));
    scen.push_back({{"contingency", s.contingency},
                    {"op_partition", json::parse(partition_to_json(s.op_partition))},
                    {"gaussians", g},
                    {"rankings", r}});
  }
  json j{{"contingency_ids", a.contingency_ids},
         {"pool_refs", a.pool_refs},
         {"sensitivities", sens},
         {"op_partitions", parts},
         {"op_representatives", a.op_representatives},
         {"contingency_partition", json::parse(partition_to_json(a.contingency_clustering.partition))},
         {"contingency_affinity", matrix_json(a.contingency_clustering.affinity)},
         {"contingency_eigenvalues", a.contingency_clustering.eigenvalues},
         {"representative_contingencies", a.representative_contingencies},
         {"scenarios", scen}};
  return j.dump(1);
}

OfflineArtifacts offline_from_json(const std::string& text) {
  const json j = parse_json(text, "offline artifacts");
  OfflineArtifacts a;
  try {
    a.contingency_ids = j.at("contingency_ids").get<std::vector<std::string>>();
    a.pool_refs = j.at("pool_refs").get<std::vector<std::size_t>>();
    for (const auto& s : j.at("sensitivities")) a.sensitivities.push_back(sensitivity_from_json(s.dump()));
    for (const auto& p : j.at("op_partitions")) a.op_partitions.push_back(partition_from_json(p.dump()));
    a.op_representatives = j.at("op_representatives").get<std::vector<std::vector<std::size_t>>>();
    a.contingency_clustering.partition = partition_from_json(j.at("contingency_partition").dump());
    a.contingency_clustering.affinity = matrix_from(j.at("contingency_affinity"));
    a.contingency_clustering.eigenvalues = j.at("contingency_eigenvalues").get<std::vector<double>>();
    a.representative_contingencies = j.at("representative_contingencies").get<std::vector<std::size_t>>();
    for (const auto& s : j.at("scenarios")) {
      ScenarioModel m;
      m.contingency = s.at("contingency").get<std::size_t>();
      m.op_partition = partition_from_json(s.at("op_partition").dump());
      for (const auto& g : s.at("gaussians")) m.gaussians.push_back(gaussian_from_json(g.dump()));
      for (const auto& r : s.at("rankings")) m.rankings.push_back(ranking_from_json(r.dump()));
      a.scenarios.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("offline artifacts: ") + e.what());
  }
  for (const auto& s : a.scenarios) {
    if (s.contingency >= a.contingency_ids.size()) throw ParseError("offline artifacts: scenario contingency index");
  }
  return a;
}

void write_offline(const OfflineArtifacts& a, const std::string& dir) {
  write_text_file((fs::path(dir) / "offline.json").string(), offline_to_json(a));
}

OfflineArtifacts read_offline(const std::string& dir) {
  const auto p = fs::path(dir) / "offline.json";
  if (!fs::exists(p)) throw ConfigError("no offline artifacts in '" + dir + "'");
  return offline_from_json(read_text_file(p.string()));
}

// ---- refresh and assessment ----

double RefreshSchedule::load_at(double t) const {
  if (load_profile.empty()) return 1.0;
  if (t <= load_profile.front().first) return load_profile.front().second;
  if (t >= load_profile.back().first) return load_profile.back().second;
  const auto it = std::upper_bound(load_profile.begin(), load_profile.end(), t,
                                   [](double x, const std::pair<double, double>& p) { return x < p.first; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double w = (t - lo.first) / (hi.first - lo.first);
  return lo.second + w * (hi.second - lo.second);
}

double RefreshSchedule::horizon() const { return load_profile.empty() ? 0.0 : load_profile.back().first; }

void RefreshSchedule::validate() const {
  if (!(period > 0.0)) throw ConfigError("schedule: period must be positive");
  if (load_profile.empty()) throw ConfigError("schedule: empty load profile");
  for (std::size_t i = 1; i < load_profile.size(); ++i) {
    if (!(load_profile[i].first > load_profile[i - 1].first)) throw ConfigError("schedule: profile times must increase");
  }
  for (const auto& p : load_profile) {
    if (!(p.second > 0.0)) throw ConfigError("schedule: load scale must be positive");
  }
  for (double h : half_widths) {
    if (!(h > 0.0)) throw ConfigError("schedule: half widths must be positive");
  }
}

RefreshSchedule schedule_from_json(const std::string& text) {
  const json j = parse_json(text, "schedule");
  RefreshSchedule s;
  try {
    read_if(j, "period", s.period);
    for (const auto& p : j.at("load_profile")) {
      if (p.is_array()) {
        s.load_profile.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      } else {
        s.load_profile.emplace_back(p.at("t").get<double>(), p.at("load").get<double>());
      }
    }
    read_if(j, "half_widths", s.half_widths);
  } catch (const json::exception& e) {
    throw ParseError(std::string("schedule: ") + e.what());
  }
  s.validate();
  return s;
}

std::string schedule_to_json(const RefreshSchedule& s) {
  json prof = json::array();
  for (const auto& [t, l] : s.load_profile) prof.push_back({{"t", t}, {"load", l}});
  return json{{"period", s.period}, {"load_profile", prof}, {"half_widths", s.half_widths}}.dump(2);
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Secure: return "secure";
    case Verdict::Marginal: return "marginal";
    case Verdict::Insecure: return "insecure";
  }
  return "secure";
}

namespace {

Verdict verdict_from_string(const std::string& s) {
  if (s == "secure") return Verdict::Secure;
  if (s == "marginal") return Verdict::Marginal;
  if (s == "insecure") return Verdict::Insecure;
  throw ParseError("unknown verdict '" + s + "'");
}

int severity(Verdict v) { return v == Verdict::Insecure ? 2 : v == Verdict::Marginal ? 1 : 0; }

}  // namespace

std::string report_to_json(const AssessmentReport& r, bool with_wall_time) {
  json j{{"timestamp", r.timestamp},
         {"matched_cluster", r.matched_cluster},
         {"mcgs", r.mcgs},
         {"boundary_model_ref", r.boundary_model_ref},
         {"decision_value", num(r.decision_value)},
         {"margin", r.margin},
         {"verdict", std::string(to_string(r.verdict))},
         {"samples_used", r.samples_used}};
  if (with_wall_time) j["wall_time"] = r.wall_time;
  return j.dump();
}

AssessmentReport report_from_json(const std::string& text) {
  const json j = parse_json(text, "report");
  AssessmentReport r;
  try {
    r.timestamp = j.at("timestamp").get<double>();
    r.matched_cluster = j.at("matched_cluster").get<int>();
    r.mcgs = j.at("mcgs").get<std::vector<std::size_t>>();
    r.boundary_model_ref = j.at("boundary_model_ref").get<std::string>();
    r.decision_value = num_or(j, "decision_value", std::numeric_limits<double>::quiet_NaN());
    r.margin = j.at("margin").get<double>();
    r.verdict = verdict_from_string(j.at("verdict").get<std::string>());
    r.samples_used = j.at("samples_used").get<std::size_t>();
    r.wall_time = j.value("wall_time", 0.0);
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  return r;
}

std::string refreshed_to_json(const RefreshedModel& m) {
  json j{{"contingency_id", m.contingency_id},
         {"matched_cluster", m.matched_cluster},
         {"dims", m.dims},
         {"model", m.model ? json::parse(model_to_json(*m.model)) : json(nullptr)},
         {"uniform_label", std::string(to_string(m.uniform_label))},
         {"margin", m.margin},
         {"samples_used", m.samples_used},
         {"match_fallback", m.match_fallback}};
  return j.dump(1);
}

RefreshedModel refreshed_from_json(const std::string& text) {
  const json j = parse_json(text, "refreshed model");
  RefreshedModel m;
  try {
    m.contingency_id = j.at("contingency_id").get<std::string>();
    m.matched_cluster = j.value("matched_cluster", 0);
    m.dims = j.at("dims").get<std::vector<std::size_t>>();
    if (!j.at("model").is_null()) m.model = model_from_json(j.at("model").dump());
    m.uniform_label = label_from_string(j.value("uniform_label", std::string("stable")));
    m.margin = j.value("margin", 0.0);
    m.samples_used = j.value("samples_used", std::size_t{0});
    m.match_fallback = j.value("match_fallback", false);
  } catch (const json::exception& e) {
    throw ParseError(std::string("refreshed model: ") + e.what());
  }
  if (m.model && m.model->dimension() != m.dims.size()) throw ParseError("refreshed model: dimension mismatch");
  return m;
}

double calibrate_margin(const BoundaryModel& model, const SampleSet& set, double phi_cri) {
  std::vector<double> v;
  for (const auto& s : set.samples) {
    if (!s.feasible()) continue;
    if (s.critical || std::abs(s.phi) < phi_cri) v.push_back(std::abs(decision(model, s.u())));
  }
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Verdict verdict_for(double d, double margin) {
  if (d > margin) return Verdict::Secure;
  if (d < -margin) return Verdict::Insecure;
  return Verdict::Marginal;
}

AssessmentReport assess(const OperatingPoint& current, const std::vector<RefreshedModel>& models,
                        std::optional<double> margin) {
  if (models.empty()) throw ContractError("assess: no boundary models");
  AssessmentReport best;
  bool have = false;
  for (const auto& m : models) {
    double d = 0.0;
    if (m.model) {
      if (m.model->dimension() != m.dims.size()) throw ContractError("assess: model dimension mismatch");
      std::vector<double> u;
      for (auto k : m.dims) {
        if (k >= current.gen_p.size()) throw ContractError("assess: operating point dimension mismatch");
        u.push_back(current.gen_p[k]);
      }
      d = decision(*m.model, u);
    } else {
      d = m.uniform_label == Label::Stable ? std::numeric_limits<double>::infinity()
                                           : -std::numeric_limits<double>::infinity();
    }
    const double thr = margin ? *margin : m.margin;
    AssessmentReport r;
    r.matched_cluster = m.matched_cluster;
    r.mcgs = m.dims;
    r.boundary_model_ref = m.contingency_id;
    r.decision_value = d;
    r.margin = thr;
    r.verdict = verdict_for(d, thr);
    const bool worse = !have || severity(r.verdict) > severity(best.verdict) ||
                       (severity(r.verdict) == severity(best.verdict) && d < best.decision_value);
    if (worse) {
      best = r;
      have = true;
    }
  }
  for (const auto& m : models) best.samples_used += m.samples_used;
  return best;
}

RefreshResult run_refresh(const GridCase& c, const OperatingPoint& current, const OfflineArtifacts& offline,
                          const std::vector<Contingency>& contingencies, const MonitorConfig& cfg,
                          const std::vector<double>& half_widths, std::size_t workers) {
  const auto t0 = std::chrono::steady_clock::now();
  if (offline.scenarios.empty()) throw ConfigError("refresh: offline artifacts hold no scenarios");
  if (current.gen_p.size() != c.n_controllable()) throw ContractError("refresh: operating point dimension mismatch");
  const auto umin = c.u_min();
  const auto umax = c.u_max();
  RefreshResult out;
  for (const auto& scen : offline.scenarios) {
    const std::string& id = offline.contingency_ids.at(scen.contingency);
    const auto it = std::find_if(contingencies.begin(), contingencies.end(),
                                 [&](const Contingency& k) { return k.id == id; });
    if (it == contingencies.end()) throw ConfigError("refresh: contingency '" + id + "' missing from the set");

    RefreshedModel rm;
    rm.contingency_id = id;
    const auto match = match_op(current.gen_p, scen.gaussians, scen.rankings);
    rm.matched_cluster = match.cluster;
    rm.match_fallback = match.fallback;
    rm.dims = match.mcgs;
    if (rm.dims.empty()) {
      for (std::size_t k = 0; k < c.n_controllable(); ++k) rm.dims.push_back(k);
    }
    std::sort(rm.dims.begin(), rm.dims.end());

    SearchSpace box;
    for (std::size_t j = 0; j < rm.dims.size(); ++j) {
      const auto d = rm.dims[j];
      const double hw = j < half_widths.size() ? half_widths[j] : cfg.search_half_width;
      box.lower.push_back(std::max(umin[d], current.gen_p[d] - hw));
      box.upper.push_back(std::min(umax[d], current.gen_p[d] + hw));
      box.u_max.push_back(std::max(box.upper.back() - box.lower.back(), 1e-6));
    }
    box.n_loads = 0;  // loads stay at the current level

    auto full = std::make_shared<GridEvaluator>(c, *it, cfg.sim);
    const SubspaceEvaluator ev(full, current, rm.dims);
    SampleSet set = generate_dataset(ev, box, cfg.sampler, workers);
    set.case_ref = c.name;
    rm.samples_used = set.trace.evaluations;
    try {
      rm.model = train(set);
      rm.margin = cfg.margin >= 0.0 ? cfg.margin : calibrate_margin(*rm.model, set, cfg.sampler.phi_cri);
    } catch (const NoBoundaryError&) {
      std::size_t stable = 0, unstable = 0;
      for (const auto& s : set.samples) {
        if (s.label == Label::Stable) ++stable;
        if (s.label == Label::Unstable) ++unstable;
      }
      rm.uniform_label = unstable > stable ? Label::Unstable : Label::Stable;
      rm.margin = std::max(cfg.margin, 0.0);
    }
    out.models.push_back(std::move(rm));
    out.samples.push_back(std::move(set));
  }
  out.report = assess(current, out.models, cfg.margin >= 0.0 ? std::optional<double>(cfg.margin) : std::nullopt);
  out.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<RefreshResult> run_refresh_series(const GridCase& c, const OperatingPoint& base,
                                              const OfflineArtifacts& offline,
                                              const std::vector<Contingency>& contingencies,
                                              const RefreshSchedule& schedule, const MonitorConfig& cfg,
                                              std::size_t workers) {
  schedule.validate();
  std::vector<RefreshResult> out;
  const double t_end = schedule.horizon();
  const double start = schedule.load_profile.front().first;
  for (std::size_t step = 0;; ++step) {
    const double t = start + static_cast<double>(step) * schedule.period;
    if (t > t_end + 1e-9) break;
    OperatingPoint op = base;
    op.load_scale.assign(c.loads.size(), schedule.load_at(t));
    auto r = run_refresh(c, op, offline, contingencies, cfg, schedule.half_widths, workers);
    r.report.timestamp = t;
    out.push_back(std::move(r));
  }
  return out;
}

void write_refresh_artifacts(const std::vector<RefreshResult>& results, const std::string& dir) {
  std::string series, timing;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    series += report_to_json(r.report, false) + '\n';
    timing += json{{"timestamp", r.report.timestamp}, {"wall_time", r.report.wall_time}}.dump() + '\n';
    json models = json::array();
    for (const auto& m : r.models) models.push_back(json::parse(refreshed_to_json(m)));
    write_text_file((fs::path(dir) / ("models_" + std::to_string(i) + ".json")).string(), models.dump(1));
  }
  write_text_file((fs::path(dir) / "refresh_series.jsonl").string(), series);
  write_text_file((fs::path(dir) / "timing.jsonl").string(), timing);
}

// ---- oracle ----

namespace {

json oracle_header(const GridCase& c, const Contingency& cont, const GridSpec& spec, const SimConfig& sim,
                   const std::vector<double>& loads) {
  return json{{"case", c.name},
              {"contingency", cont.id},
              {"sim", json::parse(sim_config_to_json(sim))},
              {"spec", json::parse(grid_spec_to_json(spec))},
              {"load_scale", loads}};
}

struct OraclePoint {
  Label label = Label::Infeasible;
  double phi = 0.0;
};

}  // namespace

LabeledGrid brute_force_oracle(const GridCase& c, const Contingency& cont, const GridSpec& spec, const SimConfig& sim,
                               std::size_t workers, const OracleOptions& opts) {
  const auto umin = c.u_min();
  const auto umax = c.u_max();
  if (spec.min.size() != c.n_controllable()) throw ConfigError("oracle: grid dimension does not match the case");
  for (std::size_t k = 0; k < spec.min.size(); ++k) {
    if (spec.min[k] < umin[k] - 1e-9 || spec.max[k] > umax[k] + 1e-9) {
      throw ConfigError("oracle: grid exceeds generator limits");
    }
  }
  if (opts.checkpoint_every == 0) throw ConfigError("oracle: checkpoint interval must be positive");
  const std::size_t n = spec.size();
  const GridEvaluator ev(c, cont, sim);
  std::vector<double> loads = opts.load_scale;
  if (loads.empty()) loads.assign(c.loads.size(), 1.0);
  const json header = oracle_header(c, cont, spec, sim, loads);

  std::vector<std::optional<OraclePoint>> done(n);
  std::size_t next = 0;
  if (!opts.checkpoint.empty() && fs::exists(opts.checkpoint)) {
    std::ifstream in(opts.checkpoint);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("oracle: empty checkpoint");
    json h;
    try {
      h = json::parse(line);
    } catch (const json::exception&) {
      throw ConfigError("oracle: unreadable checkpoint header");
    }
    if (h != header) throw ConfigError("oracle: checkpoint belongs to a different run");
    while (std::getline(in, line)) {
      json e;
      try {
        e = json::parse(line);
      } catch (const json::exception&) {
        break;  // torn last line
      }
      const auto i = e.at("i").get<std::size_t>();
      if (i >= n) throw ConfigError("oracle: checkpoint index out of range");
      done[i] = OraclePoint{label_from_string(e.at("label").get<std::string>()), e.at("phi").get<double>()};
    }
    while (next < n && done[next]) ++next;
  } else if (!opts.checkpoint.empty()) {
    const fs::path p(opts.checkpoint);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(opts.checkpoint, std::ios::trunc);
    if (!out) throw ConfigError("oracle: cannot write checkpoint '" + opts.checkpoint + "'");
    out << header.dump() << '\n';
  }

  std::size_t budget = opts.stop_after ? *opts.stop_after : n;
  while (next < n && budget > 0) {
    std::vector<std::size_t> chunk;
    for (std::size_t i = next; i < n && chunk.size() < std::min(opts.checkpoint_every, budget); ++i) {
      if (!done[i]) chunk.push_back(i);
    }
    const auto res = parallel_map(chunk.size(), workers, [&](std::size_t j) {
      const OperatingPoint op{spec.point(chunk[j]), loads};
      const Evaluation e = ev.evaluate(op, false);
      return OraclePoint{e.label, e.label == Label::Infeasible ? 0.0 : e.phi};
    });
    std::ostringstream lines;
    lines.precision(17);
    for (std::size_t j = 0; j < chunk.size(); ++j) {
      done[chunk[j]] = res[j];
      lines << json{{"i", chunk[j]}, {"label", std::string(to_string(res[j].label))}, {"phi", res[j].phi}}.dump()
            << '\n';
    }
    if (!opts.checkpoint.empty()) {
      std::ofstream out(opts.checkpoint, std::ios::app);
      out << lines.str();
      out.flush();
      if (!out) throw ConfigError("oracle: checkpoint write failed");
    }
    budget -= chunk.size();
    while (next < n && done[next]) ++next;
  }

  LabeledGrid g;
  g.spec = spec;
  for (std::size_t i = 0; i < n; ++i) {
    if (!done[i]) continue;
    if (done[i]->label == Label::Infeasible) {
      g.infeasible_points.push_back(spec.point(i));
    } else {
      g.points.push_back(spec.point(i));
      g.labels.push_back(done[i]->label);
      g.phi.push_back(done[i]->phi);
    }
  }
  return g;
}

// ---- plot data ----

PlotKind plot_kind_from_string(const std::string& s) {
  if (s == "search_paths") return PlotKind::SearchPaths;
  if (s == "boundary_curve") return PlotKind::BoundaryCurve;
  if (s == "gradient_field") return PlotKind::GradientField;
  if (s == "cluster_heatmap") return PlotKind::ClusterHeatmap;
  if (s == "refresh_series") return PlotKind::RefreshSeries;
  throw ConfigError("unknown plot kind '" + s + "'");
}

namespace {

std::string csv_num(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

fs::path need(const ExportInputs& in, const std::string& name) {
  const auto p = fs::path(in.artifact_dir) / name;
  if (!fs::exists(p)) throw ConfigError("export: '" + p.string() + "' not found");
  return p;
}

std::string emit(const ExportInputs& in, const std::string& name, const std::string& content) {
  const auto p = (fs::path(in.out_dir) / name).string();
  write_text_file(p, content);
  return p;
}

std::vector<std::string> export_search_paths(const ExportInputs& in) {
  const auto set = read_sample_set(need(in, "samples.jsonl").string(), need(in, "samples.json").string());
  std::ostringstream os;
  const std::size_t d = set.lower.size();
  os << "path,step,provenance,label,critical,phi";
  for (std::size_t k = 1; k <= d; ++k) os << ",u_" << k;
  os << '\n';
  for (const auto& s : set.samples) {
    os << s.path << ',' << s.step << ',' << to_string(s.provenance) << ',' << to_string(s.label) << ','
       << (s.critical ? 1 : 0) << ',' << (s.feasible() ? csv_num(s.phi) : "");
    for (double v : s.u()) os << ',' << csv_num(v);
    os << '\n';
  }
  return {emit(in, "search_paths.csv", os.str())};
}

std::vector<std::string> export_boundary_curve(const ExportInputs& in) {
  const auto model = model_from_json(read_text_file(need(in, "model.json").string()));
  const auto set = read_sample_set(need(in, "samples.jsonl").string(), need(in, "samples.json").string());
  const std::size_t d = model.dimension();
  if (set.lower.size() != d) throw ConfigError("export: model and sample box dimensions differ");
  std::ostringstream os;
  for (std::size_t k = 1; k <= d; ++k) os << (k > 1 ? "," : "") << "u_" << k;
  os << '\n';
  std::vector<double> mid(d);
  for (std::size_t k = 0; k < d; ++k) mid[k] = 0.5 * (set.lower[k] + set.upper[k]);
  const std::size_t nx = 200, ny = 400;
  const std::size_t ax = 0, ay = d > 1 ? 1 : 0;
  for (std::size_t ix = 0; ix <= (d > 1 ? nx : 0); ++ix) {
    std::vector<double> u = mid;
    if (d > 1) u[ax] = set.lower[ax] + (set.upper[ax] - set.lower[ax]) * static_cast<double>(ix) / nx;
    std::vector<double> prev = u;
    prev[ay] = set.lower[ay];
    double fprev = decision(model, prev);
    for (std::size_t iy = 1; iy <= ny; ++iy) {
      std::vector<double> cur = u;
      cur[ay] = set.lower[ay] + (set.upper[ay] - set.lower[ay]) * static_cast<double>(iy) / ny;
      const double fcur = decision(model, cur);
      if ((fprev > 0.0) != (fcur > 0.0)) {
        const auto p = project_to_boundary(model, prev, cur);
        for (std::size_t k = 0; k < d; ++k) os << (k ? "," : "") << csv_num(p.point[k]);
        os << '\n';
      }
      prev = cur;
      fprev = fcur;
    }
  }
  return {emit(in, "boundary_curve.csv", os.str())};
}

std::vector<std::string> export_gradient_field(const ExportInputs& in) {
  if (!in.grid_case || !in.contingency) throw ConfigError("export: gradient_field needs a case and a contingency");
  const GridCase& c = *in.grid_case;
  GridSpec spec;
  spec.min = c.u_min();
  spec.max = c.u_max();
  spec.interval.assign(spec.min.size(), in.interval);
  const std::vector<double> loads(c.loads.size(), 1.0);
  struct Row {
    bool keep = false;
    double phi = 0.0;
    std::vector<double> grad;
  };
  const auto rows = parallel_map(spec.size(), in.workers, [&](std::size_t i) {
    Row r;
    const OperatingPoint op{spec.point(i), loads};
    try {
      const OpAnalysis a = analyze_op(c, op, *in.contingency, in.sim);
      if (!a.feasible || !a.verdict.stable) return r;
      r.grad = adjoint_gradient(c, op, *in.contingency, in.sim, a).grad;
      r.phi = a.index.phi;
      r.keep = true;
    } catch (const InfeasibleError&) {
    } catch (const NumericalError&) {
    }
    return r;
  });
  std::ostringstream os;
  const std::size_t d = spec.min.size();
  for (std::size_t k = 1; k <= d; ++k) os << "u_" << k << ',';
  os << "phi";
  for (std::size_t k = 1; k <= d; ++k) os << ",grad_" << k;
  os << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].keep) continue;
    for (double v : spec.point(i)) os << csv_num(v) << ',';
    os << csv_num(rows[i].phi);
    for (double g : rows[i].grad) os << ',' << csv_num(g);
    os << '\n';
  }
  return {emit(in, "gradient_field.csv", os.str())};
}

std::vector<std::string> export_cluster_heatmap(const ExportInputs& in) {
  const auto a = offline_from_json(read_text_file(need(in, "offline.json").string()));
  std::vector<std::string> files;
  for (std::size_t k = 0; k < a.sensitivities.size(); ++k) {
    // rows and columns ordered by cluster so blocks show on the diagonal
    const auto& part = a.op_partitions[k];
    std::vector<std::size_t> order;
    for (const auto& m : part.members()) order.insert(order.end(), m.begin(), m.end());
    const auto sc = spearman_matrix(a.sensitivities[k]).sc;
    std::ostringstream os;
    os << "row,col,cluster_row,cluster_col,sc\n";
    for (auto i : order)
      for (auto j : order)
        os << i << ',' << j << ',' << part.assignments[i] << ',' << part.assignments[j] << ','
           << csv_num(sc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) << '\n';
    files.push_back(emit(in, "cluster_heatmap_" + a.contingency_ids[k] + ".csv", os.str()));
  }
  std::ostringstream os;
  os << "contingency_row,contingency_col,cluster_row,cluster_col,affinity\n";
  const auto& cp = a.contingency_clustering.partition;
  for (std::size_t i = 0; i < a.contingency_ids.size(); ++i)
    for (std::size_t j = 0; j < a.contingency_ids.size(); ++j)
      os << a.contingency_ids[i] << ',' << a.contingency_ids[j] << ',' << cp.assignments[i] << ','
         << cp.assignments[j] << ','
         << csv_num(a.contingency_clustering.affinity(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))
         << '\n';
  files.push_back(emit(in, "cluster_heatmap_contingencies.csv", os.str()));
  std::ostringstream ev;
  ev << "index,eigenvalue\n";
  for (std::size_t i = 0; i < a.contingency_clustering.eigenvalues.size(); ++i) {
    ev << i + 1 << ',' << csv_num(a.contingency_clustering.eigenvalues[i]) << '\n';
  }
  files.push_back(emit(in, "cluster_eigenvalues.csv", ev.str()));
  return files;
}

std::vector<std::string> export_refresh_series(const ExportInputs& in) {
  std::ifstream rs(need(in, "refresh_series.jsonl"));
  std::map<double, double> wall;
  const auto tp = fs::path(in.artifact_dir) / "timing.jsonl";
  if (fs::exists(tp)) {
    std::ifstream ts(tp);
    std::string line;
    while (std::getline(ts, line)) {
      if (line.empty()) continue;
      const json j = parse_json(line, "timing");
      wall[j.at("timestamp").get<double>()] = j.at("wall_time").get<double>();
    }
  }
  std::ostringstream os;
  os << "t,verdict,decision_value,margin,matched_cluster,mcgs,boundary_model_ref,samples_used,wall_time\n";
  std::string line;
  while (std::getline(rs, line)) {
    if (line.empty()) continue;
    const auto r = report_from_json(line);
    std::string mcgs;
    for (std::size_t k = 0; k < r.mcgs.size(); ++k) mcgs += (k ? " " : "") + std::to_string(r.mcgs[k]);
    os << csv_num(r.timestamp) << ',' << to_string(r.verdict) << ','
       << (std::isfinite(r.decision_value) ? csv_num(r.decision_value) : "") << ',' << csv_num(r.margin) << ','
       << r.matched_cluster << ',' << mcgs << ',' << r.boundary_model_ref << ',' << r.samples_used << ',';
    if (wall.count(r.timestamp)) os << csv_num(wall[r.timestamp]);
    os << '\n';
  }
  return {emit(in, "refresh_series.csv", os.str())};
}

}  // namespace

std::vector<std::string> export_plot_data(PlotKind kind, const ExportInputs& in) {
  if (in.artifact_dir.empty() || !fs::is_directory(in.artifact_dir) || fs::is_empty(in.artifact_dir)) {
    throw ConfigError("export: artifact directory '" + in.artifact_dir + "' is missing or empty");
  }
  switch (kind) {
    case PlotKind::SearchPaths: return export_search_paths(in);
    case PlotKind::BoundaryCurve: return export_boundary_curve(in);
    case PlotKind::GradientField: return export_gradient_field(in);
    case PlotKind::ClusterHeatmap: return export_cluster_heatmap(in);
    case PlotKind::RefreshSeries: return export_refresh_series(in);
  }
  throw ConfigError("export: unknown kind");
}

}  // namespace tsb
