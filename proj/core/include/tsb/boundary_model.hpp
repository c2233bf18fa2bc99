#pragma once

// Continuous boundary classifier: soft-margin RBF support vector machine
// trained by sequential minimal optimization on standardized inputs.
// Sign convention: decision > 0 on the stable side.

#include <optional>
#include <string>
#include <vector>

#include "tsb/sample.hpp"

namespace tsb {

struct FeatureScale {
  std::vector<double> mean;
  std::vector<double> spread;

  std::vector<double> apply(const std::vector<double>& u) const;
};

struct BoundaryModel {
  std::string contingency_id;
  double kernel_gamma = 0.0;  // in standardized coordinates
  double c = 10.0;
  double bias = 0.0;
  FeatureScale feature_scale;
  std::vector<std::vector<double>> support_points;  // raw coordinates (MW)
  std::vector<double> support_coeffs;               // alpha_i * y_i
  double training_accuracy = 0.0;

  std::size_t dimension() const { return feature_scale.mean.size(); }
};

struct TrainOptions {
  std::optional<double> c;             // default 10, or cross-validated
  std::optional<double> kernel_gamma;  // default 1/d, or cross-validated
  bool cross_validate = true;
  std::size_t cv_threshold = 50;       // cross-validate above this many samples
  std::size_t cv_folds = 5;
  std::vector<double> c_grid{100.0, 1e3, 1e4};
  std::vector<double> gamma_grid{0.5, 1.0};  // multiples of 1/d
  double tolerance = 1e-5;
  std::size_t max_iterations = 2'000'000;
};

/// Throws NoBoundaryError unless both classes have at least two feasible samples.
BoundaryModel train(const SampleSet& set, const TrainOptions& opts = {});

/// Raw-data entry point: labels +1 stable, -1 unstable.
BoundaryModel train(const std::vector<std::vector<double>>& points, const std::vector<int>& labels,
                    const TrainOptions& opts = {}, const std::string& contingency_id = "");

double decision(const BoundaryModel& model, const std::vector<double>& u);
inline bool predicts_stable(const BoundaryModel& model, const std::vector<double>& u) {
  return decision(model, u) > 0.0;
}

struct Projection {
  std::vector<double> point;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Chord bisection between points on opposite sides of the zero set, until
/// |decision| < tol or the iteration cap. Throws ContractError for same-sign endpoints.
Projection project_to_boundary(const BoundaryModel& model, const std::vector<double>& from,
                               const std::vector<double>& to, double tol = 1e-6, std::size_t max_iter = 60);

struct GridSpec {
  std::vector<double> min, max, interval;

  std::vector<std::size_t> counts() const;
  std::size_t size() const;
  /// Lattice point by flat index; the last coordinate varies fastest.
  std::vector<double> point(std::size_t flat) const;
};

/// Labeled lattice. Statically infeasible lattice points are kept apart.
struct LabeledGrid {
  GridSpec spec;
  std::vector<std::vector<double>> points;
  std::vector<Label> labels;
  std::vector<double> phi;
  std::vector<std::vector<double>> infeasible_points;

  std::size_t size() const { return points.size(); }
};

struct AccuracyReport {
  double accuracy = 0.0;
  std::size_t evaluated = 0;
  std::size_t correct = 0;
  std::size_t conceded = 0;  // counted correct inside the critical area
  std::size_t infeasible = 0;
};

/// Grid points with true |phi| < phi_cri count as correct either way.
AccuracyReport evaluate_accuracy_report(const BoundaryModel& model, const LabeledGrid& grid, double phi_cri,
                                        std::size_t workers = 1);
double evaluate_accuracy(const BoundaryModel& model, const LabeledGrid& grid, double phi_cri,
                         std::size_t workers = 1);

std::string model_to_json(const BoundaryModel& model);
BoundaryModel model_from_json(const std::string& text);

std::string grid_to_json(const LabeledGrid& grid);
LabeledGrid grid_from_json(const std::string& text);
std::string grid_spec_to_json(const GridSpec& spec);
GridSpec grid_spec_from_json(const std::string& text);

}  // namespace tsb
