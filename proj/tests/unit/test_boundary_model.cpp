#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "tsb/boundary_model.hpp"
#include "tsb/error.hpp"

using namespace tsb;

namespace {

struct Data {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
};

// Stable inside a disc of radius 30 around (50, 50).
Data disc(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  Data d;
  while (d.x.size() < n) {
    const double a = u(rng), b = u(rng);
    const double r = std::hypot(a - 50.0, b - 50.0);
    if (std::abs(r - 30.0) < 1.0) continue;
    d.x.push_back({a, b});
    d.y.push_back(r < 30.0 ? 1 : -1);
  }
  return d;
}

}  // namespace

TEST(Svm, SeparatesLinearData) {
  Data d;
  for (int i = 0; i < 10; ++i) {
    for (int k = 0; k < 10; ++k) {
      const double a = i * 10.0, b = k * 10.0;
      if (std::abs(a + b - 95.0) < 5.0) continue;
      d.x.push_back({a, b});
      d.y.push_back(a + b < 95.0 ? 1 : -1);
    }
  }
  TrainOptions opts;
  opts.cross_validate = false;
  opts.c = 100.0;
  const auto m = train(d.x, d.y, opts);
  EXPECT_DOUBLE_EQ(m.training_accuracy, 1.0);
  EXPECT_GT(decision(m, {0.0, 0.0}), 0.0);
  EXPECT_LT(decision(m, {90.0, 90.0}), 0.0);
}

TEST(Svm, DualFeasibility) {
  const auto d = disc(150, 4);
  TrainOptions opts;
  opts.cross_validate = false;
  opts.c = 10.0;
  const auto m = train(d.x, d.y, opts);
  double sum = 0.0;
  for (double a : m.support_coeffs) {
    sum += a;
    EXPECT_LE(std::abs(a), m.c + 1e-9);
    EXPECT_GT(std::abs(a), 0.0);
  }
  EXPECT_NEAR(sum, 0.0, 1e-8);
}

TEST(Svm, LearnsNonlinearBoundary) {
  const auto train_set = disc(300, 1), test_set = disc(500, 2);
  const auto m = train(train_set.x, train_set.y);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < test_set.x.size(); ++i) ok += (decision(m, test_set.x[i]) > 0.0) == (test_set.y[i] > 0);
  EXPECT_GE(static_cast<double>(ok) / static_cast<double>(test_set.x.size()), 0.97);
}

using Points = std::vector<std::vector<double>>;
using Labels = std::vector<int>;

TEST(Svm, SingleClassHasNoBoundary) {
  EXPECT_THROW(train(Points{{0.0}, {1.0}, {2.0}}, Labels{1, 1, 1}), NoBoundaryError);
  EXPECT_THROW(train(Points{{0.0}, {1.0}, {2.0}}, Labels{1, 1, -1}), NoBoundaryError);
  SampleSet set;
  EXPECT_THROW(train(set), NoBoundaryError);
}

TEST(Svm, RejectsRaggedInput) {
  EXPECT_THROW(train(Points{{0.0, 1.0}, {1.0}, {2.0}, {3.0}}, Labels{1, 1, -1, -1}), ContractError);
  EXPECT_THROW(train(Points{{0.0}, {1.0}}, Labels{1}), ContractError);
}

TEST(Svm, JsonRoundTripIsExact) {
  const auto d = disc(120, 9);
  const auto m = train(d.x, d.y);
  const auto back = model_from_json(model_to_json(m));
  EXPECT_EQ(model_to_json(back), model_to_json(m));
  for (const auto& p : disc(50, 10).x) EXPECT_EQ(decision(back, p), decision(m, p));
  EXPECT_THROW(model_from_json("{}"), ParseError);
}

TEST(Svm, TrainsFromSampleSetIgnoringInfeasible) {
  const auto d = disc(100, 3);
  SampleSet set;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    Sample s;
    s.op.gen_p = d.x[i];
    s.label = d.y[i] > 0 ? Label::Stable : Label::Unstable;
    s.lambda = d.y[i];
    set.samples.push_back(s);
  }
  Sample bad;
  bad.op.gen_p = {50.0, 50.0};
  bad.label = Label::Infeasible;
  set.samples.push_back(bad);
  TrainOptions opts;
  opts.cross_validate = false;
  const auto m = train(set, opts);
  EXPECT_EQ(m.dimension(), 2u);
  EXPECT_GT(decision(m, {50.0, 50.0}), 0.0);
}

TEST(Projection, LandsOnZeroSet) {
  const auto d = disc(200, 5);
  const auto m = train(d.x, d.y);
  const auto p = project_to_boundary(m, {50.0, 50.0}, {100.0, 50.0});
  EXPECT_TRUE(p.converged);
  EXPECT_LT(std::abs(decision(m, p.point)), 1e-6);
  EXPECT_NEAR(p.point[0], 80.0, 3.0);
  EXPECT_THROW(project_to_boundary(m, {50.0, 50.0}, {55.0, 50.0}), ContractError);
}

TEST(GridSpec, LatticeCounts) {
  GridSpec one{{0.0, 0.0}, {300.0, 300.0}, {1.0, 1.0}};
  EXPECT_EQ(one.size(), 90601u);
  GridSpec five{{0.0, 0.0}, {300.0, 300.0}, {5.0, 5.0}};
  EXPECT_EQ(five.size(), 3721u);
  GridSpec single{{10.0, 20.0}, {10.0, 20.0}, {5.0, 5.0}};
  EXPECT_EQ(single.size(), 1u);
  EXPECT_EQ(single.point(0), (std::vector<double>{10.0, 20.0}));
  // last coordinate varies fastest
  EXPECT_EQ(five.point(1), (std::vector<double>{0.0, 5.0}));
  EXPECT_EQ(five.point(61), (std::vector<double>{5.0, 0.0}));
  const auto back = grid_spec_from_json(grid_spec_to_json(five));
  EXPECT_EQ(back.counts(), five.counts());
}

TEST(Accuracy, CriticalAreaConcession) {
  Data d;
  for (int i = 0; i <= 20; ++i) {
    if (i == 10) continue;
    d.x.push_back({i * 1.0});
    d.y.push_back(i < 10 ? 1 : -1);
  }
  TrainOptions opts;
  opts.cross_validate = false;
  const auto m = train(d.x, d.y, opts);
  LabeledGrid g;
  g.spec = {{0.0}, {20.0}, {1.0}};
  for (int i = 0; i <= 20; ++i) {
    g.points.push_back({i * 1.0});
    g.labels.push_back(i < 10 ? Label::Stable : Label::Unstable);
    g.phi.push_back(i < 10 ? 40.0 : 1e5);
  }
  // mislabel a far point on purpose and mark one point critical
  g.labels[0] = Label::Unstable;
  g.phi[10] = 0.1;
  const double pred10 = decision(m, {10.0});
  g.labels[10] = pred10 > 0.0 ? Label::Unstable : Label::Stable;
  const auto r = evaluate_accuracy_report(m, g, 0.5);
  EXPECT_EQ(r.evaluated, 21u);
  EXPECT_EQ(r.correct, 20u);
  EXPECT_EQ(r.conceded, 1u);
  EXPECT_NEAR(r.accuracy, 20.0 / 21.0, 1e-12);
  EXPECT_DOUBLE_EQ(evaluate_accuracy(m, g, 0.5, 3), r.accuracy);
}

TEST(FeatureScale, Standardizes) {
  FeatureScale s{{10.0, -1.0}, {2.0, 4.0}};
  const auto v = s.apply({14.0, 7.0});
  EXPECT_DOUBLE_EQ(v[0], 2.0);
  EXPECT_DOUBLE_EQ(v[1], 2.0);
}
