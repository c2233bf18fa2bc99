#pragma once

// Three-stage monitoring pipeline: offline scenario reduction, periodic
// boundary refresh around the current operating point and online
// assessment. Also the brute-force lattice oracle and plot-data export.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsb/boundary_model.hpp"
#include "tsb/grid.hpp"
#include "tsb/sample.hpp"
#include "tsb/sampler.hpp"
#include "tsb/scenario.hpp"
#include "tsb/tds.hpp"

namespace tsb {

struct MonitorConfig {
  SimConfig sim;
  SamplerConfig sampler;
  double margin = -1.0;          // decision units; < 0 calibrates per model
  std::size_t top_k = 2;         // MCGs per cluster
  double search_half_width = 30.0;  // MW around the current dispatch
  std::optional<int> op_clusters;   // fixed OP cluster count, else eigengap
  std::optional<int> contingency_clusters;
  std::uint64_t seed = 1;
};

std::string monitor_config_to_json(const MonitorConfig& cfg);
/// Keys: sim, sampler, thresholds{margin, top_k, search_half_width},
/// scenario{op_clusters, contingency_clusters}, seed. Unknown sections are rejected.
MonitorConfig monitor_config_from_json(const std::string& text);
std::string sim_config_to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const std::string& text);

/// One object, an array, or {"contingencies": [...]}, entries
/// {id, fault_bus, tripped_branch, t_clear}.
std::vector<Contingency> contingencies_from_json(const std::string& text);
std::string contingencies_to_json(const std::vector<Contingency>& set);

/// {"ops": [{"gen_p": [...], "load_scale": [...]}]}
std::vector<OperatingPoint> ops_from_json(const std::string& text);
std::string ops_to_json(const std::vector<OperatingPoint>& ops);

// ---- offline ----

struct ScenarioModel {
  std::size_t contingency = 0;  // index into OfflineArtifacts::contingency_ids
  Partition op_partition;
  std::vector<ClusterGaussian> gaussians;  // per OP cluster, over gen_p
  std::vector<McgRanking> rankings;
};

struct OfflineArtifacts {
  std::vector<std::string> contingency_ids;
  std::vector<std::size_t> pool_refs;  // pool OPs feasible under every contingency
  std::vector<SensitivityMatrix> sensitivities;
  std::vector<Partition> op_partitions;
  std::vector<std::vector<std::size_t>> op_representatives;  // pool indices, per contingency
  ContingencyClustering contingency_clustering;
  std::vector<std::size_t> representative_contingencies;
  std::vector<ScenarioModel> scenarios;  // one per representative contingency
};

OfflineArtifacts run_offline(const GridCase& c, const std::vector<OperatingPoint>& pool,
                             const std::vector<Contingency>& contingencies, const MonitorConfig& cfg,
                             std::size_t workers = 1);

/// Writes offline.json into `dir`; a failed write leaves no partial file.
void write_offline(const OfflineArtifacts& a, const std::string& dir);
OfflineArtifacts read_offline(const std::string& dir);
std::string offline_to_json(const OfflineArtifacts& a);
OfflineArtifacts offline_from_json(const std::string& text);

// ---- refresh and assessment ----

struct RefreshSchedule {
  double period = 60.0;  // s of simulated operation time
  std::vector<std::pair<double, double>> load_profile;  // (t, load scale)
  std::vector<double> half_widths;  // MW per MCG position, empty = config default

  /// Piecewise-linear load scale, clamped at the profile ends.
  double load_at(double t) const;
  double horizon() const;
  void validate() const;
};

RefreshSchedule schedule_from_json(const std::string& text);
std::string schedule_to_json(const RefreshSchedule& s);

enum class Verdict { Secure, Marginal, Insecure };
std::string_view to_string(Verdict v);

struct RefreshedModel {
  std::string contingency_id;
  int matched_cluster = 0;
  std::vector<std::size_t> dims;  // controllable coordinates searched
  std::optional<BoundaryModel> model;
  Label uniform_label = Label::Stable;  // when no boundary was found
  double margin = 0.0;
  std::size_t samples_used = 0;
  bool match_fallback = false;
};

struct AssessmentReport {
  double timestamp = 0.0;
  int matched_cluster = 0;
  std::vector<std::size_t> mcgs;
  std::string boundary_model_ref;  // contingency id of the deciding model
  double decision_value = 0.0;
  double margin = 0.0;
  Verdict verdict = Verdict::Secure;
  std::size_t samples_used = 0;
  double wall_time = 0.0;  // s
};

std::string report_to_json(const AssessmentReport& r, bool with_wall_time = true);
AssessmentReport report_from_json(const std::string& text);
std::string refreshed_to_json(const RefreshedModel& m);
RefreshedModel refreshed_from_json(const std::string& text);

/// Median |decision| over the critical training samples of `set`, 0 without any.
double calibrate_margin(const BoundaryModel& model, const SampleSet& set, double phi_cri);

struct RefreshResult {
  std::vector<RefreshedModel> models;
  std::vector<SampleSet> samples;  // aligned with models
  AssessmentReport report;
};

RefreshResult run_refresh(const GridCase& c, const OperatingPoint& current, const OfflineArtifacts& offline,
                          const std::vector<Contingency>& contingencies, const MonitorConfig& cfg,
                          const std::vector<double>& half_widths = {}, std::size_t workers = 1);

/// Refresh at every period of the schedule with loads following the profile.
std::vector<RefreshResult> run_refresh_series(const GridCase& c, const OperatingPoint& base,
                                              const OfflineArtifacts& offline,
                                              const std::vector<Contingency>& contingencies,
                                              const RefreshSchedule& schedule, const MonitorConfig& cfg,
                                              std::size_t workers = 1);

/// refresh_series.jsonl (reports without wall time), timing.jsonl and one
/// models_<step>.json per refresh, so that everything except timing.jsonl
/// is reproducible byte for byte.
void write_refresh_artifacts(const std::vector<RefreshResult>& results, const std::string& dir);

/// Worst verdict over the models, ties broken by the smallest decision value.
/// `margin` overrides the per-model thresholds.
AssessmentReport assess(const OperatingPoint& current, const std::vector<RefreshedModel>& models,
                        std::optional<double> margin = std::nullopt);
Verdict verdict_for(double decision_value, double margin);

// ---- oracle ----

struct OracleOptions {
  std::string checkpoint;             // JSONL file, empty disables resuming
  std::size_t checkpoint_every = 500;
  std::optional<std::size_t> stop_after;  // simulate an interruption
  std::vector<double> load_scale;     // empty = reference loads
};

LabeledGrid brute_force_oracle(const GridCase& c, const Contingency& cont, const GridSpec& spec,
                               const SimConfig& sim, std::size_t workers = 1, const OracleOptions& opts = {});

// ---- plot data ----

enum class PlotKind { SearchPaths, BoundaryCurve, GradientField, ClusterHeatmap, RefreshSeries };
PlotKind plot_kind_from_string(const std::string& s);

struct ExportInputs {
  std::string artifact_dir;
  std::string out_dir;
  const GridCase* grid_case = nullptr;      // gradient_field
  const Contingency* contingency = nullptr;
  SimConfig sim;
  double interval = 5.0;                    // MW, gradient_field lattice
  std::size_t workers = 1;
};

/// Returns the written file paths. Throws ConfigError when the artifacts the
/// kind needs are missing.
std::vector<std::string> export_plot_data(PlotKind kind, const ExportInputs& in);

}  // namespace tsb
