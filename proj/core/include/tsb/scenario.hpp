#pragma once

// Scenario-space reduction: rank correlation of gradient patterns, spectral
// clustering of operating points and contingencies, Gaussian cluster models
// for matching new operating points, and most-critical-generator rankings.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tsb/grid.hpp"
#include "tsb/stability_index.hpp"
#include "tsb/tds.hpp"

namespace tsb {

struct SensitivityMatrix {
  std::string contingency_id;
  std::vector<std::vector<double>> rows;  // one gradient per operating point
  std::vector<std::size_t> op_refs;       // index into the OP pool
  std::vector<double> phi;                // index value per row
  std::vector<int> lambda;
  std::vector<std::size_t> excluded;      // infeasible pool entries

  std::size_t size() const { return rows.size(); }
  std::size_t dimension() const { return rows.empty() ? 0 : rows.front().size(); }
  /// Rows at the given positions, in that order.
  SensitivityMatrix subset(const std::vector<std::size_t>& positions) const;
};

/// Adjoint gradient per operating point. Infeasible points are left out and
/// listed in `excluded`; fewer than two usable rows raise InfeasibleError.
SensitivityMatrix build_sensitivity_matrix(const GridCase& c, const std::vector<OperatingPoint>& ops,
                                           const Contingency& cont, const SimConfig& cfg,
                                           std::size_t workers = 1);

/// Average ranks, 1-based: the r-th lowest value gets rank r.
std::vector<double> average_ranks(const std::vector<double>& v);

struct SpearmanResult {
  Eigen::MatrixXd sc;
  std::vector<bool> constant_rows;  // zero rank variance, correlated as 0
};

SpearmanResult spearman_matrix(const std::vector<std::vector<double>>& rows);
inline SpearmanResult spearman_matrix(const SensitivityMatrix& psi) { return spearman_matrix(psi.rows); }

struct Partition {
  std::vector<int> assignments;
  int k = 0;

  std::size_t size() const { return assignments.size(); }
  std::vector<std::vector<std::size_t>> members() const;
};

/// Throws ValidationError unless ids are contiguous from 0 and every cluster is used.
void validate_partition(const Partition& p);

struct SpectralOptions {
  std::optional<int> k;       // fixed cluster count, else eigengap
  int k_min = 2, k_max = 8;   // eigengap search range
  std::size_t eigen_scan = 10;
  std::uint64_t seed = 1;
  std::size_t restarts = 10;  // k-means++ restarts, lowest inertia kept
};

struct SpectralResult {
  Partition partition;
  std::vector<double> eigenvalues;  // smallest, ascending
  std::size_t components = 1;
  bool k_overridden = false;        // raised to the component count
};

/// Symmetric normalized Laplacian, row-normalized spectral embedding and k-means.
SpectralResult spectral_cluster(const Eigen::MatrixXd& affinity, const SpectralOptions& opts = {});

/// Adjusted Rand index. Throws ContractError on element-count mismatch.
double ari(const Partition& p, const Partition& q);

struct ContingencyClustering {
  Partition partition;
  Eigen::MatrixXd affinity;  // (1 + ARI) / 2
  std::vector<double> eigenvalues;
};

ContingencyClustering cluster_contingencies(const std::vector<Partition>& partitions,
                                            const SpectralOptions& opts = {});

/// Per cluster: the unstable member with the largest phi if any, otherwise the
/// stable member with the smallest phi. Ties go to the lower index.
std::vector<std::size_t> select_representatives(const Partition& partition, const std::vector<double>& phi,
                                                const std::vector<int>& lambda);

struct ClusterGaussian {
  std::vector<double> mu;
  Eigen::MatrixXd sigma;
  double log_norm = 0.0;

  std::size_t dimension() const { return mu.size(); }
  double log_density(const std::vector<double>& u) const;
};

/// Population covariance plus eps * I, eps = 1e-6 * trace / d (floored).
ClusterGaussian fit_cluster_gaussian(const std::vector<std::vector<double>>& ops);

struct McgRanking {
  int cluster_id = 0;
  std::vector<std::size_t> ranked_generators;  // controllable-generator indices
  std::vector<double> mean_abs;                // aligned with ranked_generators
  std::size_t top_k = 2;

  std::vector<std::size_t> top() const;
};

McgRanking rank_mcg(const std::vector<std::vector<double>>& rows, int cluster_id = 0, std::size_t top_k = 2);

struct MatchResult {
  int cluster = 0;
  std::vector<std::size_t> mcgs;
  std::vector<double> log_densities;
  bool fallback = false;  // densities unusable, nearest mean taken
};

MatchResult match_op(const std::vector<double>& u, const std::vector<ClusterGaussian>& gaussians,
                     const std::vector<McgRanking>& rankings);

std::string partition_to_json(const Partition& p);
Partition partition_from_json(const std::string& text);
std::string gaussian_to_json(const ClusterGaussian& g);
ClusterGaussian gaussian_from_json(const std::string& text);
std::string ranking_to_json(const McgRanking& r);
McgRanking ranking_from_json(const std::string& text);
std::string sensitivity_to_json(const SensitivityMatrix& psi);
SensitivityMatrix sensitivity_from_json(const std::string& text);

}  // namespace tsb
