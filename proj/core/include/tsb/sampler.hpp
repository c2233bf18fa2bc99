#pragma once

// Boundary-focused sampling: gradient descent toward the boundary from
// Latin-hypercube seeds, bisection across label changes, traversal along the
// boundary, and maximin gap re-sampling against a trained boundary model.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsb/boundary_model.hpp"
#include "tsb/random.hpp"
#include "tsb/sample.hpp"
#include "tsb/stability_index.hpp"
#include "tsb/tds.hpp"

namespace tsb {

struct Evaluation {
  Label label = Label::Infeasible;
  double phi = 0.0;
  int lambda = 0;
  std::optional<std::vector<double>> grad;
};

/// Maps an operating point to a label, index and gradient. Implementations are
/// pure and safe to call concurrently.
class OpEvaluator {
 public:
  virtual ~OpEvaluator() = default;
  virtual std::string contingency_id() const = 0;
  virtual std::size_t dimension() const = 0;
  /// Cheap static screen (no simulation).
  virtual bool feasible(const OperatingPoint& op) const = 0;
  virtual Evaluation evaluate(const OperatingPoint& op, bool with_gradient) const = 0;
};

class GridEvaluator final : public OpEvaluator {
 public:
  GridEvaluator(GridCase c, Contingency cont, SimConfig sim, AdjointOptions adj = {});

  std::string contingency_id() const override { return cont_.id; }
  std::size_t dimension() const override { return case_.n_controllable(); }
  bool feasible(const OperatingPoint& op) const override;
  Evaluation evaluate(const OperatingPoint& op, bool with_gradient) const override;

  const GridCase& grid_case() const { return case_; }
  const Contingency& contingency() const { return cont_; }
  const SimConfig& sim_config() const { return sim_; }

 private:
  GridCase case_;
  Contingency cont_;
  SimConfig sim_;
  AdjointOptions adj_;
};

/// Search over a subset of the controllable coordinates; the others stay at
/// the values of `base`.
class SubspaceEvaluator final : public OpEvaluator {
 public:
  SubspaceEvaluator(std::shared_ptr<const OpEvaluator> full, OperatingPoint base, std::vector<std::size_t> dims);

  std::string contingency_id() const override { return full_->contingency_id(); }
  std::size_t dimension() const override { return dims_.size(); }
  bool feasible(const OperatingPoint& op) const override;
  Evaluation evaluate(const OperatingPoint& op, bool with_gradient) const override;

  OperatingPoint expand(const OperatingPoint& reduced) const;
  OperatingPoint reduce(const OperatingPoint& full) const;
  const std::vector<std::size_t>& dims() const { return dims_; }

 private:
  std::shared_ptr<const OpEvaluator> full_;
  OperatingPoint base_;
  std::vector<std::size_t> dims_;
};

/// Synthetic evaluator over plain coordinate vectors.
class FunctionEvaluator final : public OpEvaluator {
 public:
  using Fn = std::function<Evaluation(const std::vector<double>&)>;
  using Screen = std::function<bool(const std::vector<double>&)>;
  FunctionEvaluator(std::string id, std::size_t dim, Fn fn, Screen screen = {});

  std::string contingency_id() const override { return id_; }
  std::size_t dimension() const override { return dim_; }
  bool feasible(const OperatingPoint& op) const override;
  Evaluation evaluate(const OperatingPoint& op, bool with_gradient) const override;

 private:
  std::string id_;
  std::size_t dim_;
  Fn fn_;
  Screen screen_;
};

struct SearchSpace {
  std::vector<double> lower, upper;
  std::vector<double> u_max;  // step scale per coordinate
  std::size_t n_loads = 0;

  std::size_t dimension() const { return lower.size(); }
  static SearchSpace from_case(const GridCase& c);
  /// Throws ConfigError for empty or ragged boxes.
  void validate() const;
  std::vector<double> clip(const std::vector<double>& u) const;
};

/// Centered Latin hypercube over the box; load scales uniform in the band.
std::vector<OperatingPoint> seed_initial_ops(const SearchSpace& box, std::size_t n, std::uint64_t rng_seed,
                                             double load_min = 1.0, double load_max = 1.0);

/// nu = clamp(nu_max tanh(|phi| / phi_ref), nu_min, nu_max); step along the
/// infinity-normalized negative gradient with scale nu * u_max, clipped to the
/// box. `shrink` scales the step (halved after infeasible landings).
/// Throws StationaryPointError for a zero gradient.
OperatingPoint step_toward_boundary(const Sample& s, const SamplerConfig& cfg, const SearchSpace& box,
                                    double phi_ref, double shrink = 1.0);

double step_coefficient(double phi, const SamplerConfig& cfg, double phi_ref);

Sample make_sample(const OperatingPoint& op, const std::string& contingency_id, const Evaluation& e,
                   Provenance p);

/// Midpoint search between opposite labels until |phi| < phi_cri or the
/// bracket is narrower than `width` in every coordinate. Every evaluated
/// midpoint is appended to `trail`; the last one is returned flagged
/// critical. Throws ContractError for same labels, InfeasibleError for an
/// infeasible endpoint or midpoint.
Sample bisect_crossing(const Sample& a, const Sample& b, const OpEvaluator& ev, double phi_cri,
                       double width = 0.1, std::vector<Sample>* trail = nullptr);

/// Unit vector orthogonal to `grad`; the perpendicular in two dimensions,
/// a random Gram-Schmidt completion otherwise.
std::vector<double> tangent_direction(const std::vector<double>& grad, Rng& rng);

struct TraverseResult {
  std::vector<Sample> trail;            // every evaluation, in order
  std::vector<OperatingPoint> points;   // corrected boundary points
  std::vector<OperatingPoint> probes;   // uncorrected tangent steps
};

/// Walks along the boundary in both tangent directions, each tangent step
/// followed by a corrective bisection. Stops at the box, at infeasible
/// points, near `known` boundary points, after max_route_steps points or
/// when `max_evaluations` feasible evaluations have been spent.
TraverseResult traverse_boundary(const Sample& critical, const OpEvaluator& ev, const SamplerConfig& cfg,
                                 const SearchSpace& box, Rng& rng,
                                 const std::vector<std::vector<double>>& known = {},
                                 std::size_t max_evaluations = static_cast<std::size_t>(-1));

/// From a freshly evaluated sample, probe along the negative gradient until
/// the label flips (doubling the probe distance) and bisect back. Returns
/// nullopt when no flip is found; every evaluation goes to `trail`.
std::optional<Sample> correct_to_boundary(const Sample& s, const OpEvaluator& ev, const SamplerConfig& cfg,
                                          const SearchSpace& box, double probe, std::vector<Sample>& trail);

struct GapCandidate {
  std::vector<double> u;
  double gamma = 0.0;  // min squared distance to earlier boundary points (MW^2)
};

/// Greedy maximin selection over boundary candidates of the model. Returned
/// gammas are non-increasing. Throws NoBoundaryError when the model predicts
/// a single class everywhere it was probed.
std::vector<GapCandidate> resample_gaps(const SampleSet& set, const BoundaryModel& model, const SearchSpace& box,
                                        std::size_t n_new, std::uint64_t rng_seed, std::size_t pool = 400,
                                        const std::function<bool(const std::vector<double>&)>& screen = {},
                                        double perturb = 0.04);

/// True iff min gamma <= gamma_cri.
bool check_termination(const std::vector<double>& gammas, double gamma_cri);

SampleSet generate_dataset(const OpEvaluator& ev, const SearchSpace& box, const SamplerConfig& cfg,
                           std::size_t workers = 1, const TrainOptions& train_opts = {});

SampleSet generate_dataset(const GridCase& c, const Contingency& cont, const SamplerConfig& cfg,
                           const SimConfig& sim = {}, std::size_t workers = 1);

/// Uniform random or Latin hypercube design of `n` drawn points; infeasible
/// draws count toward `n`.
SampleSet baseline_dataset(const OpEvaluator& ev, const SearchSpace& box, std::size_t n, std::uint64_t rng_seed,
                           bool latin, double load_min = 1.0, double load_max = 1.0, std::size_t workers = 1);

}  // namespace tsb
