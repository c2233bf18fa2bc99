#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tsb/boundary_model.hpp"
#include "tsb/error.hpp"
#include "tsb/grid.hpp"
#include "tsb/io.hpp"
#include "tsb/monitor.hpp"
#include "tsb/sample.hpp"
#include "tsb/sampler.hpp"
#include "tsb/scenario.hpp"
#include "tsb/tds.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kUsage = 2;
constexpr int kInfeasible = 3;
constexpr int kNumerical = 4;

struct Globals {
  std::string case_file;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::size_t workers = 1;
  std::string config_file;
};

struct Context {
  const Globals& g;
  tsb::MonitorConfig cfg;

  tsb::GridCase grid() const {
    if (g.case_file.empty()) throw tsb::ConfigError("--case is required for this command");
    return tsb::load_case_file(g.case_file);
  }
  std::string out(const std::string& name) const { return (fs::path(g.out) / name).string(); }
};

Context make_context(const Globals& g) {
  Context ctx{g, {}};
  if (!g.config_file.empty()) ctx.cfg = tsb::monitor_config_from_json(tsb::read_text_file(g.config_file));
  if (g.seed) {
    ctx.cfg.seed = *g.seed;
    ctx.cfg.sampler.rng_seed = *g.seed;
  }
  if (g.workers == 0) throw tsb::ConfigError("--workers must be at least 1");
  fs::create_directories(g.out);
  return ctx;
}

tsb::Contingency one_contingency(const std::string& file, const std::string& id) {
  const auto set = tsb::contingencies_from_json(tsb::read_text_file(file));
  if (set.empty()) throw tsb::ConfigError("contingency file '" + file + "' is empty");
  if (id.empty()) {
    if (set.size() > 1) throw tsb::ConfigError("contingency file holds several entries, pick one with --id");
    return set.front();
  }
  for (const auto& c : set) {
    if (c.id == id) return c;
  }
  throw tsb::ConfigError("contingency '" + id + "' not in '" + file + "'");
}

/// --op file ({"ops": [...]}, first entry used) or --gen-p list with reference loads.
tsb::OperatingPoint current_op(const tsb::GridCase& c, const std::string& file, const std::vector<double>& gen_p) {
  if (!file.empty() && !gen_p.empty()) throw tsb::ConfigError("give either --op or --gen-p");
  if (!gen_p.empty()) return tsb::reference_op(c, gen_p);
  if (file.empty()) throw tsb::ConfigError("an operating point is required (--op or --gen-p)");
  auto ops = tsb::ops_from_json(tsb::read_text_file(file));
  if (ops.empty()) throw tsb::ConfigError("'" + file + "' holds no operating point");
  auto op = ops.front();
  if (op.load_scale.empty()) op.load_scale.assign(c.loads.size(), 1.0);
  return op;
}

tsb::GridSpec lattice(const tsb::GridCase& c, double interval) {
  tsb::GridSpec spec;
  spec.min = c.u_min();
  spec.max = c.u_max();
  spec.interval.assign(spec.min.size(), interval);
  return spec;
}

void say(const std::string& s) { std::cout << s << '\n'; }

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

// ---- subcommands ----

struct OracleArgs {
  std::string contingency, id, spec_file, checkpoint;
  double interval = 5.0;
  std::vector<double> load_scale;
};

void cmd_oracle(const Context& ctx, const OracleArgs& a) {
  const auto c = ctx.grid();
  const auto cont = one_contingency(a.contingency, a.id);
  const auto spec = a.spec_file.empty() ? lattice(c, a.interval) : tsb::grid_spec_from_json(tsb::read_text_file(a.spec_file));
  tsb::OracleOptions opts;
  opts.checkpoint = a.checkpoint.empty() ? ctx.out("oracle.ckpt.jsonl") : a.checkpoint;
  opts.load_scale = a.load_scale;
  const auto grid = tsb::brute_force_oracle(c, cont, spec, ctx.cfg.sim, ctx.g.workers, opts);
  tsb::write_text_file(ctx.out("oracle.json"), tsb::grid_to_json(grid));
  std::size_t stable = 0;
  for (auto l : grid.labels) stable += l == tsb::Label::Stable;
  say("oracle: " + std::to_string(grid.size()) + " feasible points (" + std::to_string(stable) + " stable), " +
      std::to_string(grid.infeasible_points.size()) + " infeasible");
}

struct SampleArgs {
  std::string contingency, id, baseline;
  std::size_t n = 300;
};

void cmd_sample(const Context& ctx, const SampleArgs& a) {
  const auto c = ctx.grid();
  const auto cont = one_contingency(a.contingency, a.id);
  tsb::SampleSet set;
  if (a.baseline.empty()) {
    set = tsb::generate_dataset(c, cont, ctx.cfg.sampler, ctx.cfg.sim, ctx.g.workers);
  } else {
    if (a.baseline != "random" && a.baseline != "lhs") throw tsb::ConfigError("--baseline must be random or lhs");
    const tsb::GridEvaluator ev(c, cont, ctx.cfg.sim);
    set = tsb::baseline_dataset(ev, tsb::SearchSpace::from_case(c), a.n, ctx.cfg.sampler.rng_seed,
                                a.baseline == "lhs", ctx.cfg.sampler.load_band_min, ctx.cfg.sampler.load_band_max,
                                ctx.g.workers);
    set.case_ref = c.name;
  }
  tsb::write_sample_set(set, ctx.out("samples.jsonl"), ctx.out("samples.json"));
  say("sample: " + std::to_string(set.samples.size()) + " samples, " + std::to_string(set.trace.evaluations) +
      " evaluations" + (set.trace.terminated ? ", terminated by the gap criterion" : ""));
}

struct TrainArgs {
  std::string samples, grid;
  std::optional<double> c, gamma;
};

std::string samples_dir(const Context& ctx, const std::string& dir) { return dir.empty() ? ctx.g.out : dir; }

tsb::SampleSet load_samples(const std::string& dir) {
  return tsb::read_sample_set((fs::path(dir) / "samples.jsonl").string(), (fs::path(dir) / "samples.json").string());
}

void cmd_train(const Context& ctx, const TrainArgs& a) {
  const auto set = load_samples(samples_dir(ctx, a.samples));
  tsb::TrainOptions opts;
  opts.c = a.c;
  opts.kernel_gamma = a.gamma;
  const auto model = tsb::train(set, opts);
  tsb::write_text_file(ctx.out("model.json"), tsb::model_to_json(model));
  say("train: " + std::to_string(model.support_points.size()) + " support vectors, training accuracy " +
      fmt(model.training_accuracy));
  if (!a.grid.empty()) {
    const auto grid = tsb::grid_from_json(tsb::read_text_file(a.grid));
    const auto r = tsb::evaluate_accuracy_report(model, grid, ctx.cfg.sampler.phi_cri, ctx.g.workers);
    say("accuracy: " + fmt(r.accuracy) + " over " + std::to_string(r.evaluated) + " lattice points (" +
        std::to_string(r.conceded) + " in the critical area)");
  }
}

struct ResampleArgs {
  std::string samples, model;
  std::size_t n = 4;
};

void cmd_resample(const Context& ctx, const ResampleArgs& a) {
  const auto set = load_samples(samples_dir(ctx, a.samples));
  const auto model = tsb::model_from_json(tsb::read_text_file(a.model.empty() ? ctx.out("model.json") : a.model));
  tsb::SearchSpace box;
  box.lower = set.lower;
  box.upper = set.upper;
  if (!ctx.g.case_file.empty()) {
    box.u_max = ctx.grid().u_max();
  } else {
    box.u_max = set.upper;
  }
  box.n_loads = 0;
  const auto cands = tsb::resample_gaps(set, model, box, a.n, ctx.cfg.sampler.rng_seed,
                                        ctx.cfg.sampler.resample_pool);
  std::vector<double> gammas;
  json pts = json::array();
  for (const auto& g : cands) {
    gammas.push_back(g.gamma);
    pts.push_back({{"u", g.u}, {"gamma", g.gamma}});
  }
  const double gamma_cri = ctx.cfg.sampler.effective_gamma_cri(box.u_max);
  const bool stop = tsb::check_termination(gammas, gamma_cri);
  json j{{"candidates", pts}, {"gamma_cri", gamma_cri}, {"terminated", stop}};
  tsb::write_text_file(ctx.out("resample.json"), j.dump(2));
  say("resample: " + std::to_string(cands.size()) + " candidates" + (stop ? ", termination criterion met" : ""));
}

struct ClusterOpsArgs {
  std::string ops, contingency, id;
  std::optional<int> k;
};

void cmd_cluster_ops(const Context& ctx, const ClusterOpsArgs& a) {
  const auto c = ctx.grid();
  const auto cont = one_contingency(a.contingency, a.id);
  const auto pool = tsb::ops_from_json(tsb::read_text_file(a.ops));
  const auto psi = tsb::build_sensitivity_matrix(c, pool, cont, ctx.cfg.sim, ctx.g.workers);
  const auto sc = tsb::spearman_matrix(psi);
  const Eigen::MatrixXd aff = 0.5 * (Eigen::MatrixXd::Ones(sc.sc.rows(), sc.sc.cols()) + sc.sc);
  tsb::SpectralOptions opts;
  opts.k = a.k ? a.k : ctx.cfg.op_clusters;
  opts.seed = ctx.cfg.seed;
  const auto res = tsb::spectral_cluster(aff, opts);
  std::vector<std::size_t> reps;
  for (auto r : tsb::select_representatives(res.partition, psi.phi, psi.lambda)) reps.push_back(psi.op_refs[r]);
  tsb::write_text_file(ctx.out("sensitivity.json"), tsb::sensitivity_to_json(psi));
  tsb::write_text_file(ctx.out("partition.json"), tsb::partition_to_json(res.partition));
  json j{{"representatives", reps}, {"eigenvalues", res.eigenvalues}, {"components", res.components}};
  tsb::write_text_file(ctx.out("representatives.json"), j.dump());
  say("cluster-ops: " + std::to_string(psi.size()) + " OPs in " + std::to_string(res.partition.k) + " clusters" +
      (psi.excluded.empty() ? "" : ", " + std::to_string(psi.excluded.size()) + " infeasible left out"));
}

struct ClusterContArgs {
  std::vector<std::string> partitions;
  std::optional<int> k;
};

void cmd_cluster_contingencies(const Context& ctx, const ClusterContArgs& a) {
  std::vector<tsb::Partition> parts;
  for (const auto& f : a.partitions) parts.push_back(tsb::partition_from_json(tsb::read_text_file(f)));
  tsb::SpectralOptions opts;
  opts.k = a.k ? a.k : ctx.cfg.contingency_clusters;
  opts.seed = ctx.cfg.seed;
  const auto cc = tsb::cluster_contingencies(parts, opts);
  json aff = json::array();
  for (Eigen::Index i = 0; i < cc.affinity.rows(); ++i) {
    std::vector<double> row(cc.affinity.cols());
    for (Eigen::Index k = 0; k < cc.affinity.cols(); ++k) row[k] = cc.affinity(i, k);
    aff.push_back(row);
  }
  json j{{"partition", json::parse(tsb::partition_to_json(cc.partition))},
         {"affinity", aff},
         {"eigenvalues", cc.eigenvalues}};
  tsb::write_text_file(ctx.out("contingency_partition.json"), j.dump());
  say("cluster-contingencies: " + std::to_string(parts.size()) + " contingencies in " +
      std::to_string(cc.partition.k) + " clusters");
}

struct FitArgs {
  std::string ops, sensitivity, partition;
};

void cmd_fit_gaussians(const Context& ctx, const FitArgs& a) {
  const auto pool = tsb::ops_from_json(tsb::read_text_file(a.ops));
  const auto psi = tsb::sensitivity_from_json(
      tsb::read_text_file(a.sensitivity.empty() ? ctx.out("sensitivity.json") : a.sensitivity));
  const auto part = tsb::partition_from_json(
      tsb::read_text_file(a.partition.empty() ? ctx.out("partition.json") : a.partition));
  tsb::validate_partition(part);
  if (part.size() != psi.size()) throw tsb::ContractError("partition and sensitivity matrix sizes differ");
  json gs = json::array(), rs = json::array();
  const auto members = part.members();
  for (std::size_t cl = 0; cl < members.size(); ++cl) {
    std::vector<std::vector<double>> pts, rows;
    for (auto m : members[cl]) {
      if (psi.op_refs[m] >= pool.size()) throw tsb::ContractError("sensitivity refers past the OP pool");
      pts.push_back(pool[psi.op_refs[m]].gen_p);
      rows.push_back(psi.rows[m]);
    }
    gs.push_back(json::parse(tsb::gaussian_to_json(tsb::fit_cluster_gaussian(pts))));
    rs.push_back(json::parse(tsb::ranking_to_json(tsb::rank_mcg(rows, static_cast<int>(cl), ctx.cfg.top_k))));
  }
  tsb::write_text_file(ctx.out("gaussians.json"), json{{"gaussians", gs}, {"rankings", rs}}.dump());
  say("fit-gaussians: " + std::to_string(members.size()) + " cluster models");
}

struct MatchArgs {
  std::string models, op;
  std::vector<double> gen_p;
};

void cmd_match(const Context& ctx, const MatchArgs& a) {
  const auto c = ctx.grid();
  const auto op = current_op(c, a.op, a.gen_p);
  const json j = json::parse(tsb::read_text_file(a.models.empty() ? ctx.out("gaussians.json") : a.models));
  std::vector<tsb::ClusterGaussian> gs;
  std::vector<tsb::McgRanking> rs;
  for (const auto& g : j.at("gaussians")) gs.push_back(tsb::gaussian_from_json(g.dump()));
  for (const auto& r : j.at("rankings")) rs.push_back(tsb::ranking_from_json(r.dump()));
  const auto m = tsb::match_op(op.gen_p, gs, rs);
  if (m.fallback) std::cerr << "warning: densities unusable, matched the nearest cluster mean\n";
  json out{{"cluster", m.cluster}, {"mcgs", m.mcgs}, {"fallback", m.fallback}};
  json ld = json::array();
  for (double v : m.log_densities) ld.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  out["log_densities"] = ld;
  tsb::write_text_file(ctx.out("match.json"), out.dump());
  std::string mcgs;
  for (auto g : m.mcgs) mcgs += " " + std::to_string(g);
  say("match: cluster " + std::to_string(m.cluster) + ", MCGs" + mcgs);
}

struct OfflineArgs {
  std::string ops, contingencies;
};

void cmd_offline(const Context& ctx, const OfflineArgs& a) {
  const auto c = ctx.grid();
  const auto pool = tsb::ops_from_json(tsb::read_text_file(a.ops));
  const auto set = tsb::contingencies_from_json(tsb::read_text_file(a.contingencies));
  const auto art = tsb::run_offline(c, pool, set, ctx.cfg, ctx.g.workers);
  tsb::write_offline(art, ctx.g.out);
  say("offline: " + std::to_string(set.size()) + " contingencies in " +
      std::to_string(art.contingency_clustering.partition.k) + " clusters, " + std::to_string(art.pool_refs.size()) +
      " OPs kept");
}

struct RefreshArgs {
  std::string offline, contingencies, op, schedule;
  std::vector<double> gen_p;
};

void cmd_refresh(const Context& ctx, const RefreshArgs& a) {
  const auto c = ctx.grid();
  const auto op = current_op(c, a.op, a.gen_p);
  const auto off = tsb::read_offline(a.offline.empty() ? ctx.g.out : a.offline);
  const auto set = tsb::contingencies_from_json(tsb::read_text_file(a.contingencies));
  std::vector<tsb::RefreshResult> results;
  if (a.schedule.empty()) {
    results.push_back(tsb::run_refresh(c, op, off, set, ctx.cfg, {}, ctx.g.workers));
  } else {
    const auto sched = tsb::schedule_from_json(tsb::read_text_file(a.schedule));
    results = tsb::run_refresh_series(c, op, off, set, sched, ctx.cfg, ctx.g.workers);
  }
  tsb::write_refresh_artifacts(results, ctx.g.out);
  for (const auto& r : results) {
    if (std::any_of(r.models.begin(), r.models.end(), [](const auto& m) { return m.match_fallback; })) {
      std::cerr << "warning: t=" << r.report.timestamp << " matched by nearest cluster mean\n";
    }
    say("refresh t=" + fmt(r.report.timestamp) + ": " + std::string(tsb::to_string(r.report.verdict)) +
        " (decision " + fmt(r.report.decision_value) + ", margin " + fmt(r.report.margin) + ", " +
        std::to_string(r.report.samples_used) + " samples, " + fmt(r.report.wall_time, 3) + " s)");
  }
}

struct AssessArgs {
  std::string models, op;
  std::vector<double> gen_p;
  std::optional<double> margin;
};

void cmd_assess(const Context& ctx, const AssessArgs& a) {
  const auto c = ctx.grid();
  const auto op = current_op(c, a.op, a.gen_p);
  const json j = json::parse(tsb::read_text_file(a.models.empty() ? ctx.out("models_0.json") : a.models));
  std::vector<tsb::RefreshedModel> models;
  for (const auto& m : j) models.push_back(tsb::refreshed_from_json(m.dump()));
  if (models.empty()) throw tsb::ConfigError("assess: no boundary models");
  const auto margin = a.margin ? a.margin : (ctx.cfg.margin >= 0.0 ? std::optional<double>(ctx.cfg.margin) : std::nullopt);
  const auto r = tsb::assess(op, models, margin);
  tsb::write_text_file(ctx.out("report.json"), tsb::report_to_json(r, false));
  say("assess: " + std::string(tsb::to_string(r.verdict)) + " (decision " + fmt(r.decision_value) + ", margin " +
      fmt(r.margin) + ", model " + r.boundary_model_ref + ")");
}

struct ExportArgs {
  std::string kind, artifacts, contingency, id;
  double interval = 5.0;
};

void cmd_export(const Context& ctx, const ExportArgs& a) {
  const auto kind = tsb::plot_kind_from_string(a.kind);
  tsb::ExportInputs in;
  in.artifact_dir = a.artifacts;
  in.out_dir = ctx.g.out;
  in.sim = ctx.cfg.sim;
  in.interval = a.interval;
  in.workers = ctx.g.workers;
  std::optional<tsb::GridCase> c;
  std::optional<tsb::Contingency> cont;
  if (kind == tsb::PlotKind::GradientField) {
    c = ctx.grid();
    if (a.contingency.empty()) throw tsb::ConfigError("export gradient_field needs --contingency");
    cont = one_contingency(a.contingency, a.id);
    in.grid_case = &*c;
    in.contingency = &*cont;
  }
  for (const auto& f : tsb::export_plot_data(kind, in)) say("export: " + f);
}

int exit_code(tsb::ErrorKind k) {
  switch (k) {
    case tsb::ErrorKind::Usage: return kUsage;
    case tsb::ErrorKind::Infeasible: return kInfeasible;
    case tsb::ErrorKind::Numerical: return kNumerical;
  }
  return kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transient stability boundary sampling and security monitoring"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--case", g.case_file, "Grid case JSON");
  app.add_option("--seed", g.seed, "Global random seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads")->capture_default_str();
  app.add_option("--config", g.config_file, "Config JSON (sim, sampler, thresholds, scenario, seed)");

  std::function<void(const Context&)> run;
  auto bind = [&](CLI::App* sub, auto fn, auto& args) {
    sub->callback([&run, fn, &args]() { run = [fn, &args](const Context& ctx) { fn(ctx, args); }; });
  };

  OracleArgs oa;
  auto* oracle = app.add_subcommand("oracle", "Label a generator-output lattice by brute-force simulation");
  oracle->add_option("--contingency", oa.contingency, "Contingency JSON")->required();
  oracle->add_option("--id", oa.id, "Contingency id when the file holds several");
  oracle->add_option("--interval", oa.interval, "Lattice interval (MW)")->capture_default_str();
  oracle->add_option("--spec", oa.spec_file, "Grid spec JSON {min, max, interval}");
  oracle->add_option("--checkpoint", oa.checkpoint, "Resumable checkpoint (default <out>/oracle.ckpt.jsonl)");
  oracle->add_option("--load-scale", oa.load_scale, "Per-load multipliers")->delimiter(',');
  bind(oracle, cmd_oracle, oa);

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Boundary-focused sampling (or a random/LHS baseline)");
  sample->add_option("--contingency", sa.contingency, "Contingency JSON")->required();
  sample->add_option("--id", sa.id, "Contingency id");
  sample->add_option("--baseline", sa.baseline, "random | lhs");
  sample->add_option("--n", sa.n, "Baseline sample count")->capture_default_str();
  bind(sample, cmd_sample, sa);

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Fit the boundary classifier to a sample set");
  trainc->add_option("--samples", ta.samples, "Directory with samples.jsonl/samples.json (default --out)");
  trainc->add_option("--grid", ta.grid, "Oracle grid JSON to score against");
  trainc->add_option("--c", ta.c, "Box constraint (skips cross-validation)");
  trainc->add_option("--gamma", ta.gamma, "Kernel width in standardized units");
  bind(trainc, cmd_train, ta);

  ResampleArgs ra;
  auto* resample = app.add_subcommand("resample", "Select maximin gap points on the model boundary");
  resample->add_option("--samples", ra.samples, "Sample directory (default --out)");
  resample->add_option("--model", ra.model, "Model JSON (default <out>/model.json)");
  resample->add_option("--n", ra.n, "Points to select")->capture_default_str();
  bind(resample, cmd_resample, ra);

  ClusterOpsArgs coa;
  auto* cops = app.add_subcommand("cluster-ops", "Cluster operating points by gradient rank patterns");
  cops->add_option("--ops", coa.ops, "OP pool JSON")->required();
  cops->add_option("--contingency", coa.contingency, "Contingency JSON")->required();
  cops->add_option("--id", coa.id, "Contingency id");
  cops->add_option("--k", coa.k, "Fixed cluster count");
  bind(cops, cmd_cluster_ops, coa);

  ClusterContArgs cca;
  auto* ccont = app.add_subcommand("cluster-contingencies", "Cluster contingencies by OP-partition agreement");
  ccont->add_option("--partitions", cca.partitions, "Partition JSON per contingency")->required();
  ccont->add_option("--k", cca.k, "Fixed cluster count");
  bind(ccont, cmd_cluster_contingencies, cca);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit-gaussians", "Gaussian model and MCG ranking per OP cluster");
  fit->add_option("--ops", fa.ops, "OP pool JSON")->required();
  fit->add_option("--sensitivity", fa.sensitivity, "Sensitivity JSON (default <out>/sensitivity.json)");
  fit->add_option("--partition", fa.partition, "Partition JSON (default <out>/partition.json)");
  bind(fit, cmd_fit_gaussians, fa);

  MatchArgs ma;
  auto* match = app.add_subcommand("match", "Match an operating point to an OP cluster");
  match->add_option("--models", ma.models, "gaussians.json (default <out>/gaussians.json)");
  match->add_option("--op", ma.op, "OP JSON");
  match->add_option("--gen-p", ma.gen_p, "Controllable outputs (MW)")->delimiter(',');
  bind(match, cmd_match, ma);

  OfflineArgs ofa;
  auto* offline = app.add_subcommand("offline", "Offline stage: sensitivities, clusters, Gaussians, MCGs");
  offline->add_option("--ops", ofa.ops, "OP pool JSON")->required();
  offline->add_option("--contingencies", ofa.contingencies, "Contingency set JSON")->required();
  bind(offline, cmd_offline, ofa);

  RefreshArgs rfa;
  auto* refresh = app.add_subcommand("refresh", "Refresh boundary models around the current OP");
  refresh->add_option("--offline", rfa.offline, "Offline artifact directory (default --out)");
  refresh->add_option("--contingencies", rfa.contingencies, "Contingency set JSON")->required();
  refresh->add_option("--op", rfa.op, "Current OP JSON");
  refresh->add_option("--gen-p", rfa.gen_p, "Current controllable outputs (MW)")->delimiter(',');
  refresh->add_option("--schedule", rfa.schedule, "Schedule JSON {period, load_profile, half_widths}");
  bind(refresh, cmd_refresh, rfa);

  AssessArgs asa;
  auto* assessc = app.add_subcommand("assess", "Assess an OP against refreshed boundary models");
  assessc->add_option("--models", asa.models, "models_<i>.json (default <out>/models_0.json)");
  assessc->add_option("--op", asa.op, "OP JSON");
  assessc->add_option("--gen-p", asa.gen_p, "Controllable outputs (MW)")->delimiter(',');
  assessc->add_option("--margin", asa.margin, "Decision-value margin");
  bind(assessc, cmd_assess, asa);

  ExportArgs ea;
  auto* exportc = app.add_subcommand("export", "Write plot data from artifacts");
  exportc->add_option("--kind", ea.kind, "search_paths | boundary_curve | gradient_field | cluster_heatmap | refresh_series")
      ->required();
  exportc->add_option("--artifacts", ea.artifacts, "Artifact directory")->required();
  exportc->add_option("--contingency", ea.contingency, "Contingency JSON (gradient_field)");
  exportc->add_option("--id", ea.id, "Contingency id");
  exportc->add_option("--interval", ea.interval, "Lattice interval (MW)")->capture_default_str();
  bind(exportc, cmd_export, ea);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    const Context ctx = make_context(g);
    run(ctx);
  } catch (const tsb::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
  return 0;
}
