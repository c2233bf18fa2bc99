#include <random>

#include <benchmark/benchmark.h>

#include "tsb/boundary_model.hpp"
#include "tsb/scenario.hpp"
#include "tsb/stability_index.hpp"
#include "tsb/tds.hpp"

namespace {

const tsb::GridCase& case9() {
  static const tsb::GridCase c = tsb::load_case_file(std::string(TSB_DATA_DIR) + "/case9.json");
  return c;
}

const tsb::Contingency kFault{"f5", 5, std::string("5-7"), 0.2};

void BM_PowerFlow(benchmark::State& st) {
  const auto op = tsb::reference_op(case9(), {163.0, 85.0});
  for (auto _ : st) benchmark::DoNotOptimize(tsb::solve_power_flow(case9(), op));
}
BENCHMARK(BM_PowerFlow);

void BM_Simulate(benchmark::State& st) {
  const auto op = tsb::reference_op(case9(), {163.0, 85.0});
  const auto init = tsb::init_dynamic_state(case9(), op, tsb::solve_power_flow(case9(), op), &kFault);
  for (auto _ : st) benchmark::DoNotOptimize(tsb::simulate(init, kFault, tsb::SimConfig{}));
}
BENCHMARK(BM_Simulate);

void BM_AdjointGradient(benchmark::State& st) {
  const auto op = tsb::reference_op(case9(), {163.0, 85.0});
  for (auto _ : st) benchmark::DoNotOptimize(tsb::adjoint_gradient(case9(), op, kFault, tsb::SimConfig{}));
}
BENCHMARK(BM_AdjointGradient);

void BM_FdGradient(benchmark::State& st) {
  const auto op = tsb::reference_op(case9(), {163.0, 85.0});
  for (auto _ : st) benchmark::DoNotOptimize(tsb::fd_gradient(case9(), op, kFault, tsb::SimConfig{}, 0.5));
}
BENCHMARK(BM_FdGradient);

void BM_SmoTrain(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  while (x.size() < n) {
    const double a = u(rng), b = u(rng);
    x.push_back({a, b});
    y.push_back(std::hypot(a - 50.0, b - 50.0) < 30.0 ? 1 : -1);
  }
  tsb::TrainOptions opts;
  opts.cross_validate = false;
  for (auto _ : st) benchmark::DoNotOptimize(tsb::train(x, y, opts));
}
BENCHMARK(BM_SmoTrain)->Arg(100)->Arg(300)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Spectral(benchmark::State& st) {
  const auto n = static_cast<Eigen::Index>(st.range(0));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> in(0.7, 1.0), out(0.0, 0.2);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    for (Eigen::Index k = i + 1; k < n; ++k) a(i, k) = a(k, i) = (i % 4 == k % 4) ? in(rng) : out(rng);
  }
  for (auto _ : st) benchmark::DoNotOptimize(tsb::spectral_cluster(a));
}
BENCHMARK(BM_Spectral)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_Spearman(benchmark::State& st) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(st.range(0)), std::vector<double>(10));
  for (auto& r : rows)
    for (auto& v : r) v = z(rng);
  for (auto _ : st) benchmark::DoNotOptimize(tsb::spearman_matrix(rows));
}
BENCHMARK(BM_Spearman)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
