#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "tsb/error.hpp"
#include "tsb/io.hpp"
#include "tsb/monitor.hpp"

using namespace tsb;
namespace fs = std::filesystem;

namespace {

BoundaryModel line_model() {
  // stable for u0 + u1 < 100
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i <= 10; ++i) {
    for (int k = 0; k <= 10; ++k) {
      const double a = i * 10.0, b = k * 10.0;
      if (a + b == 100.0) continue;
      x.push_back({a, b});
      y.push_back(a + b < 100.0 ? 1 : -1);
    }
  }
  TrainOptions o;
  o.cross_validate = false;
  return train(x, y, o);
}

RefreshedModel refreshed(const std::string& id, std::optional<BoundaryModel> m, double margin) {
  RefreshedModel r;
  r.contingency_id = id;
  r.dims = {0, 1};
  r.model = std::move(m);
  r.margin = margin;
  r.samples_used = 10;
  return r;
}

std::vector<OperatingPoint> pool_subset(const std::vector<std::size_t>& idx) {
  const auto all = ops_from_json(read_text_file(tsbtest::data_path("ops_pool6.json")));
  std::vector<OperatingPoint> out;
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

Contingency contingency6(const std::string& id) {
  for (const auto& c : contingencies_from_json(read_text_file(tsbtest::data_path("contingencies6.json")))) {
    if (c.id == id) return c;
  }
  throw std::runtime_error("missing " + id);
}

}  // namespace

TEST(Verdict, Thresholds) {
  EXPECT_EQ(verdict_for(2.0, 1.0), Verdict::Secure);
  EXPECT_EQ(verdict_for(1.0, 1.0), Verdict::Marginal);
  EXPECT_EQ(verdict_for(-1.0, 1.0), Verdict::Marginal);
  EXPECT_EQ(verdict_for(-1.5, 1.0), Verdict::Insecure);
  EXPECT_EQ(verdict_for(0.0, 0.0), Verdict::Marginal);
}

TEST(Assess, WorstModelDecides) {
  const auto m = line_model();
  const std::vector<RefreshedModel> models{refreshed("a", m, 0.1), refreshed("b", std::nullopt, 0.1)};
  const OperatingPoint far_inside{{10.0, 10.0}, {}};
  const auto r = assess(far_inside, models);
  EXPECT_EQ(r.verdict, Verdict::Secure);
  EXPECT_EQ(r.boundary_model_ref, "a");
  EXPECT_EQ(r.samples_used, 20u);
  const auto u = assess({{90.0, 90.0}, {}}, models);
  EXPECT_EQ(u.verdict, Verdict::Insecure);
  EXPECT_LT(u.decision_value, 0.0);
  // a huge override margin turns everything marginal or insecure
  EXPECT_NE(assess(far_inside, models, 1e9).verdict, Verdict::Secure);
}

TEST(Assess, UniformModelsAndContracts) {
  auto unstable = refreshed("u", std::nullopt, 0.0);
  unstable.uniform_label = Label::Unstable;
  const auto r = assess({{1.0, 1.0}, {}}, {refreshed("s", std::nullopt, 0.0), unstable});
  EXPECT_EQ(r.verdict, Verdict::Insecure);
  EXPECT_EQ(r.boundary_model_ref, "u");
  EXPECT_EQ(r.decision_value, -std::numeric_limits<double>::infinity());
  EXPECT_THROW(assess({{1.0, 1.0}, {}}, {}), ContractError);
  auto bad = refreshed("a", line_model(), 0.0);
  bad.dims = {0, 5};
  EXPECT_THROW(assess({{1.0, 1.0}, {}}, {bad}), ContractError);
  bad.dims = {0};
  EXPECT_THROW(assess({{1.0, 1.0}, {}}, {bad}), ContractError);
}

TEST(Reports, JsonRoundTrip) {
  AssessmentReport r;
  r.timestamp = 60.0;
  r.matched_cluster = 1;
  r.mcgs = {0, 2};
  r.boundary_model_ref = "k";
  r.decision_value = -0.25;
  r.margin = 0.5;
  r.verdict = Verdict::Marginal;
  r.samples_used = 42;
  r.wall_time = 3.5;
  EXPECT_EQ(report_to_json(report_from_json(report_to_json(r))), report_to_json(r));
  EXPECT_EQ(report_to_json(r, false).find("wall_time"), std::string::npos);
  const auto m = refreshed("a", line_model(), 0.3);
  EXPECT_EQ(refreshed_to_json(refreshed_from_json(refreshed_to_json(m))), refreshed_to_json(m));
}

TEST(Config, RoundTripAndRejection) {
  MonitorConfig c;
  c.sim.t_end = 3.0;
  c.sampler.max_evaluations = 99;
  c.margin = 0.2;
  c.op_clusters = 3;
  c.seed = 9;
  const auto text = monitor_config_to_json(c);
  EXPECT_EQ(monitor_config_to_json(monitor_config_from_json(text)), text);
  EXPECT_THROW(monitor_config_from_json(R"({"simulation": {}})"), ParseError);
  EXPECT_THROW(monitor_config_from_json(R"({"sim": {"tend": 3}})"), ParseError);
  EXPECT_THROW(monitor_config_from_json(R"({"thresholds": {"top_k": 0}})"), ConfigError);
  const auto file = monitor_config_from_json(read_text_file(tsbtest::data_path("config9.json")));
  EXPECT_EQ(file.sampler.load_band_min, 1.0);
  EXPECT_EQ(file.sim.t_end, 5.0);
}

TEST(ContingencyIo, Formats) {
  const std::string one = R"({"id":"a","fault_bus":5,"tripped_branch":"5-7","t_clear":0.2})";
  EXPECT_EQ(contingencies_from_json(one).size(), 1u);
  EXPECT_EQ(contingencies_from_json("[" + one + "]").size(), 1u);
  const auto set = contingencies_from_json(read_text_file(tsbtest::data_path("contingencies6.json")));
  EXPECT_EQ(set.size(), 6u);
  EXPECT_EQ(contingencies_to_json(contingencies_from_json(contingencies_to_json(set))), contingencies_to_json(set));
  EXPECT_THROW(contingencies_from_json("[" + one + "," + one + "]"), ValidationError);
  EXPECT_THROW(contingencies_from_json("[]"), ValidationError);
}

TEST(Schedule, LoadInterpolationAndValidation) {
  const auto s = schedule_from_json(read_text_file(tsbtest::data_path("schedule6.json")));
  EXPECT_NO_THROW(s.validate());
  EXPECT_DOUBLE_EQ(s.load_at(-5.0), 0.8);
  EXPECT_DOUBLE_EQ(s.load_at(90.0), 0.875);
  EXPECT_DOUBLE_EQ(s.load_at(1e4), 1.0);
  EXPECT_DOUBLE_EQ(s.horizon(), 600.0);
  RefreshSchedule bad = s;
  bad.period = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = s;
  bad.load_profile = {{0.0, 1.0}, {0.0, 1.1}};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Oracle, TinyGridAndResume) {
  const auto& c = tsbtest::case9();
  const GridSpec spec{{60.0, 40.0}, {160.0, 140.0}, {25.0, 25.0}};
  SimConfig sim;
  sim.t_end = 2.0;
  const auto full = brute_force_oracle(c, tsbtest::bus5_fault(), spec, sim);
  EXPECT_EQ(full.size() + full.infeasible_points.size(), 25u);

  const auto dir = tsbtest::scratch_dir("oracle_resume");
  OracleOptions o;
  o.checkpoint = (dir / "ck.jsonl").string();
  o.checkpoint_every = 4;
  o.stop_after = 9;
  const auto part = brute_force_oracle(c, tsbtest::bus5_fault(), spec, sim, 1, o);
  EXPECT_LT(part.size() + part.infeasible_points.size(), 25u);
  o.stop_after.reset();
  const auto resumed = brute_force_oracle(c, tsbtest::bus5_fault(), spec, sim, 2, o);
  EXPECT_EQ(grid_to_json(resumed), grid_to_json(full));

  SimConfig other = sim;
  other.t_end = 3.0;
  EXPECT_THROW(brute_force_oracle(c, tsbtest::bus5_fault(), spec, other, 1, o), ConfigError);
  const GridSpec outside{{0.0, 0.0}, {400.0, 100.0}, {50.0, 50.0}};
  EXPECT_THROW(brute_force_oracle(c, tsbtest::bus5_fault(), outside, sim), ConfigError);
  const GridSpec single{{163.0, 85.0}, {163.0, 85.0}, {1.0, 1.0}};
  const auto one = brute_force_oracle(c, tsbtest::bus5_fault(), single, sim);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one.labels[0], Label::Stable);
}

TEST(Export, MissingArtifacts) {
  const auto empty = tsbtest::scratch_dir("export_empty");
  ExportInputs in;
  in.artifact_dir = empty.string();
  in.out_dir = (empty / "out").string();
  EXPECT_THROW(export_plot_data(PlotKind::SearchPaths, in), ConfigError);
  EXPECT_THROW(plot_kind_from_string("histogram"), ConfigError);
  write_text_file((empty / "x.txt").string(), "x");
  EXPECT_THROW(export_plot_data(PlotKind::SearchPaths, in), ConfigError);
  EXPECT_THROW(export_plot_data(PlotKind::GradientField, in), ConfigError);
}

TEST(Export, SearchPathsCsv) {
  const auto dir = tsbtest::scratch_dir("export_paths");
  SampleSet set;
  set.lower = {0.0, 0.0};
  set.upper = {1.0, 1.0};
  Sample s;
  s.op.gen_p = {0.5, 0.25};
  s.label = Label::Stable;
  s.lambda = 1;
  s.phi = 2.0;
  s.path = 0;
  set.samples = {s, s};
  set.samples[1].step = 1;
  write_sample_set(set, (dir / "samples.jsonl").string(), (dir / "samples.json").string());
  ExportInputs in;
  in.artifact_dir = dir.string();
  in.out_dir = (dir / "plots").string();
  const auto files = export_plot_data(PlotKind::SearchPaths, in);
  ASSERT_EQ(files.size(), 1u);
  std::ifstream f(files[0]);
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "path,step,provenance,label,critical,phi,u_1,u_2");
  int rows = 0;
  for (std::string line; std::getline(f, line);) rows += !line.empty();
  EXPECT_EQ(rows, 2);
}

TEST(Offline, NeedsTwoOperatingPoints) {
  MonitorConfig cfg;
  EXPECT_THROW(run_offline(tsbtest::case6(), pool_subset({0}), {contingency6("a9_trip9-7")}, cfg), InfeasibleError);
  EXPECT_THROW(run_offline(tsbtest::case6(), pool_subset({0, 1}), {}, cfg), ContractError);
}

TEST(Offline, PlantedGroupsAreRecovered) {
  MonitorConfig cfg;
  const auto pool = pool_subset({0, 1, 2, 3, 4, 20, 21, 22, 23, 24});
  const auto a = run_offline(tsbtest::case6(), pool, {contingency6("a9_trip9-7")}, cfg);
  ASSERT_EQ(a.op_partitions.size(), 1u);
  const auto& p = a.op_partitions[0];
  EXPECT_EQ(p.k, 2);
  Partition planted;
  planted.assignments = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  planted.k = 2;
  EXPECT_DOUBLE_EQ(ari(p, planted), 1.0);
  ASSERT_EQ(a.scenarios.size(), 1u);
  EXPECT_EQ(a.scenarios[0].gaussians.size(), 2u);
  EXPECT_EQ(a.scenarios[0].rankings.size(), 2u);

  const auto b = run_offline(tsbtest::case6(), pool, {contingency6("a9_trip9-7")}, cfg, 3);
  EXPECT_EQ(offline_to_json(b), offline_to_json(a));
  const auto dir = tsbtest::scratch_dir("offline_io");
  write_offline(a, dir.string());
  EXPECT_EQ(offline_to_json(read_offline(dir.string())), offline_to_json(a));
}

TEST(Refresh, LowLoadIsSecureAndDeterministic) {
  const auto& c = tsbtest::case6();
  MonitorConfig cfg;
  cfg.sampler.max_evaluations = 40;
  cfg.sampler.resample_rounds = 1;
  cfg.sampler.n_seeds = 8;
  const auto pool = pool_subset({0, 1, 2, 20, 21, 22});
  const std::vector<Contingency> conts{contingency6("a9_trip9-7")};
  const auto off = run_offline(c, pool, conts, cfg);
  const auto cur = ops_from_json(read_text_file(tsbtest::data_path("current_op6.json"))).front();
  OperatingPoint low = cur;
  low.load_scale.assign(c.loads.size(), 0.8);
  const auto r1 = run_refresh(c, low, off, conts, cfg);
  ASSERT_EQ(r1.models.size(), 1u);
  EXPECT_EQ(r1.models[0].dims.size(), cfg.top_k);
  EXPECT_NE(r1.report.verdict, Verdict::Insecure);
  const auto r2 = run_refresh(c, low, off, conts, cfg, {}, 2);
  EXPECT_EQ(report_to_json(r1.report, false), report_to_json(r2.report, false));
  EXPECT_EQ(refreshed_to_json(r1.models[0]), refreshed_to_json(r2.models[0]));
}
