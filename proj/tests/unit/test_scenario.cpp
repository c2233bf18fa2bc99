#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "tsb/error.hpp"
#include "tsb/scenario.hpp"

using namespace tsb;

namespace {

// Closed form, valid without ties.
double naive_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

Eigen::MatrixXd block_affinity(const std::vector<int>& blocks, double in, double out) {
  const auto n = static_cast<Eigen::Index>(blocks.size());
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < n; ++k) a(i, k) = blocks[i] == blocks[k] ? in : out;
  return a;
}

Partition part(std::vector<int> a) {
  Partition p;
  p.assignments = std::move(a);
  int k = 0;
  for (int v : p.assignments) k = std::max(k, v + 1);
  p.k = k;
  return p;
}

}  // namespace

TEST(Ranks, TiesAveraged) {
  EXPECT_EQ(average_ranks({10.0, 20.0, 20.0, 5.0}), (std::vector<double>{2.0, 3.5, 3.5, 1.0}));
  EXPECT_EQ(average_ranks({1.0, 1.0, 1.0}), (std::vector<double>{2.0, 2.0, 2.0}));
}

TEST(Spearman, MatchesClosedFormWithoutTies) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> rows(6, std::vector<double>(9));
  for (auto& r : rows)
    for (auto& v : r) v = n(rng);
  const auto s = spearman_matrix(rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_NEAR(s.sc(i, i), 1.0, 1e-12);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      EXPECT_NEAR(s.sc(i, k), naive_spearman(rows[i], rows[k]), 1e-12);
      EXPECT_EQ(s.sc(i, k), s.sc(k, i));
    }
  }
}

TEST(Spearman, KnownValues) {
  const auto s = spearman_matrix({{1.0, 2.0, 3.0}, {3.0, 2.0, 1.0}, {1.0, 3.0, 2.0}, {2.0, 4.0, 6.0}});
  EXPECT_NEAR(s.sc(0, 1), -1.0, 1e-12);
  EXPECT_NEAR(s.sc(0, 2), 0.5, 1e-12);
  EXPECT_NEAR(s.sc(0, 3), 1.0, 1e-12);
}

TEST(Spearman, ConstantRowsFlagged) {
  const auto s = spearman_matrix({{1.0, 2.0, 3.0}, {4.0, 4.0, 4.0}});
  EXPECT_FALSE(s.constant_rows[0]);
  EXPECT_TRUE(s.constant_rows[1]);
  EXPECT_EQ(s.sc(0, 1), 0.0);
  EXPECT_TRUE(std::isfinite(s.sc(1, 1)));
}

TEST(Ari, ReferenceValues) {
  EXPECT_DOUBLE_EQ(ari(part({0, 0, 1, 1}), part({1, 1, 0, 0})), 1.0);
  EXPECT_NEAR(ari(part({0, 0, 1, 1}), part({0, 0, 1, 2})), 0.5714285714, 1e-9);
  EXPECT_NEAR(ari(part({0, 0, 0, 1, 1, 1}), part({0, 0, 1, 1, 2, 2})), 0.2424242424, 1e-9);
  EXPECT_THROW(ari(part({0, 1}), part({0, 1, 1})), ContractError);
}

TEST(Ari, NullMeanNearZero) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> lab(0, 3);
  double sum = 0.0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    std::vector<int> a(60), b(60);
    for (auto& v : a) v = lab(rng);
    for (auto& v : b) v = lab(rng);
    sum += ari(part(a), part(b));
  }
  EXPECT_LT(std::abs(sum / trials), 0.02);
}

TEST(Spectral, RecoversThreeBlocks) {
  const std::vector<int> blocks{0, 0, 0, 1, 1, 1, 1, 2, 2, 2};
  const auto r = spectral_cluster(block_affinity(blocks, 1.0, 0.05));
  EXPECT_EQ(r.partition.k, 3);
  EXPECT_DOUBLE_EQ(ari(r.partition, part(blocks)), 1.0);
  ASSERT_FALSE(r.eigenvalues.empty());
  EXPECT_NEAR(r.eigenvalues.front(), 0.0, 1e-9);
  for (std::size_t i = 1; i < r.eigenvalues.size(); ++i) EXPECT_GE(r.eigenvalues[i], r.eigenvalues[i - 1] - 1e-12);
  validate_partition(r.partition);
}

TEST(Spectral, ComponentCountOverridesK) {
  const std::vector<int> blocks{0, 0, 1, 1, 2, 2};
  SpectralOptions opts;
  opts.k = 2;
  const auto r = spectral_cluster(block_affinity(blocks, 1.0, 0.0), opts);
  EXPECT_EQ(r.components, 3u);
  EXPECT_TRUE(r.k_overridden);
  EXPECT_EQ(r.partition.k, 3);
}

TEST(Spectral, FixedKAndDeterminism) {
  const std::vector<int> blocks{0, 0, 0, 1, 1, 1, 2, 2, 2};
  SpectralOptions opts;
  opts.k = 2;
  const auto a = spectral_cluster(block_affinity(blocks, 1.0, 0.1), opts);
  EXPECT_EQ(a.partition.k, 2);
  EXPECT_FALSE(a.k_overridden);
  const auto b = spectral_cluster(block_affinity(blocks, 1.0, 0.1), opts);
  EXPECT_EQ(a.partition.assignments, b.partition.assignments);
}

TEST(Spectral, ContingencyClustering) {
  // two groups of contingencies, each a noisy copy of its own base partition
  std::mt19937_64 rng(6);
  std::vector<int> base_a(30), base_b(30);
  for (std::size_t i = 0; i < 30; ++i) {
    base_a[i] = static_cast<int>(i / 10);
    base_b[i] = static_cast<int>(i % 3);
  }
  std::vector<Partition> parts;
  for (int g = 0; g < 6; ++g) {
    auto v = g < 3 ? base_a : base_b;
    std::swap(v[rng() % 30], v[rng() % 30]);
    parts.push_back(part(v));
  }
  const auto r = cluster_contingencies(parts);
  EXPECT_EQ(r.partition.k, 2);
  Partition planted = part({0, 0, 0, 1, 1, 1});
  EXPECT_DOUBLE_EQ(ari(r.partition, planted), 1.0);
  EXPECT_DOUBLE_EQ(r.affinity(0, 0), 1.0);
  EXPECT_NEAR(r.affinity(0, 1), 0.5 * (1.0 + ari(parts[0], parts[1])), 1e-12);
}

TEST(Partitions, Validation) {
  EXPECT_NO_THROW(validate_partition(part({0, 1, 1, 0})));
  Partition gap;
  gap.assignments = {0, 2, 2};
  gap.k = 3;
  EXPECT_THROW(validate_partition(gap), ValidationError);
  Partition neg;
  neg.assignments = {0, -1};
  neg.k = 1;
  EXPECT_THROW(validate_partition(neg), ValidationError);
  const auto p = part({1, 0, 1});
  EXPECT_EQ(partition_to_json(partition_from_json(partition_to_json(p))), partition_to_json(p));
  const auto m = p.members();
  EXPECT_EQ(m[0], (std::vector<std::size_t>{1}));
  EXPECT_EQ(m[1], (std::vector<std::size_t>{0, 2}));
}

TEST(Representatives, UnstableFirstThenLeastStable) {
  const auto p = part({0, 0, 0, 1, 1});
  const std::vector<double> phi{5.0, 90.0, 90.0, 40.0, 30.0};
  const std::vector<int> lambda{1, -1, -1, 1, 1};
  const auto r = select_representatives(p, phi, lambda);
  EXPECT_EQ(r, (std::vector<std::size_t>{1, 4}));
}

TEST(Gaussian, FitAndLogDensity) {
  const std::vector<std::vector<double>> pts{{0.0, 0.0}, {2.0, 0.0}, {0.0, 4.0}, {2.0, 4.0}};
  const auto g = fit_cluster_gaussian(pts);
  EXPECT_EQ(g.mu, (std::vector<double>{1.0, 2.0}));
  const double eps = 1e-6 * (1.0 + 4.0) / 2.0;
  EXPECT_NEAR(g.sigma(0, 0), 1.0 + eps, 1e-12);
  EXPECT_NEAR(g.sigma(1, 1), 4.0 + eps, 1e-12);
  EXPECT_NEAR(g.sigma(0, 1), 0.0, 1e-12);
  const std::vector<double> u{1.5, 1.0};
  const double s0 = g.sigma(0, 0), s1 = g.sigma(1, 1);
  const double expected = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(s0 * s1) -
                          0.5 * (0.25 / s0 + 1.0 / s1);
  EXPECT_NEAR(g.log_density(u), expected, 1e-10);
  EXPECT_THROW(fit_cluster_gaussian({{1.0, 2.0}}), InfeasibleError);
  const auto back = gaussian_from_json(gaussian_to_json(g));
  EXPECT_EQ(back.log_density(u), g.log_density(u));
}

TEST(Gaussian, CoincidentPointsStayDefinite) {
  const auto g = fit_cluster_gaussian({{3.0, 3.0}, {3.0, 3.0}});
  EXPECT_TRUE(std::isfinite(g.log_density({3.0, 3.0})));
}

TEST(Matching, NearestClusterAndFallback) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 5.0);
  const std::vector<std::vector<double>> centers{{50.0, 50.0}, {150.0, 50.0}, {100.0, 150.0}};
  std::vector<ClusterGaussian> gs;
  std::vector<McgRanking> rk;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 40; ++i) pts.push_back({centers[c][0] + n(rng), centers[c][1] + n(rng)});
    gs.push_back(fit_cluster_gaussian(pts));
    McgRanking r;
    r.cluster_id = static_cast<int>(c);
    r.ranked_generators = {c, (c + 1) % 3};
    rk.push_back(r);
  }
  for (std::size_t c = 0; c < 3; ++c) {
    const auto m = match_op({centers[c][0] + 3.0, centers[c][1] - 2.0}, gs, rk);
    EXPECT_EQ(m.cluster, static_cast<int>(c));
    EXPECT_FALSE(m.fallback);
    EXPECT_EQ(m.mcgs, rk[c].top());
  }
  const auto far = match_op({1e4, 1e4}, gs, rk);
  EXPECT_FALSE(far.fallback);
  for (double ld : far.log_densities) EXPECT_TRUE(std::isfinite(ld));
  // a broken covariance leaves no usable density
  auto broken = gs;
  for (auto& g : broken) g.sigma.setZero();
  const auto fb = match_op({152.0, 49.0}, broken, rk);
  EXPECT_TRUE(fb.fallback);
  EXPECT_EQ(fb.cluster, 1);
  EXPECT_THROW(match_op({NAN, 1.0}, gs, rk), ContractError);
  EXPECT_THROW(match_op({1.0}, gs, rk), ContractError);
}

TEST(Mcg, RankedByMeanAbsoluteGradient) {
  const auto r = rank_mcg({{1.0, -5.0, 2.0}, {-1.0, 3.0, -2.5}}, 4, 2);
  EXPECT_EQ(r.ranked_generators, (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_NEAR(r.mean_abs[0], 4.0, 1e-12);
  EXPECT_EQ(r.top(), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(r.cluster_id, 4);
  EXPECT_EQ(ranking_to_json(ranking_from_json(ranking_to_json(r))), ranking_to_json(r));
}

TEST(Sensitivity, JsonRoundTripAndSubset) {
  SensitivityMatrix s;
  s.contingency_id = "k";
  s.rows = {{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}};
  s.op_refs = {0, 2, 3};
  s.phi = {1.0, 2.0, 3.0};
  s.lambda = {1, -1, 1};
  s.excluded = {1};
  EXPECT_EQ(sensitivity_to_json(sensitivity_from_json(sensitivity_to_json(s))), sensitivity_to_json(s));
  const auto t = s.subset({2, 0});
  EXPECT_EQ(t.rows.front(), (std::vector<double>{5.0, 6.0}));
  EXPECT_EQ(t.op_refs, (std::vector<std::size_t>{3, 0}));
}
