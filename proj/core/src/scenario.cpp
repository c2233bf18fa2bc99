#include "tsb/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "tsb/error.hpp"
#include "tsb/parallel.hpp"
#include "tsb/random.hpp"

namespace tsb {

using nlohmann::json;

SensitivityMatrix build_sensitivity_matrix(const GridCase& c, const std::vector<OperatingPoint>& ops,
                                           const Contingency& cont, const SimConfig& cfg, std::size_t workers) {
  validate_contingency(c, cont);
  validate_sim_config(cfg, cont.t_clear);
  struct Row {
    std::vector<double> grad;
    double phi;
    int lambda;
  };
  const auto grads = parallel_map(ops.size(), workers, [&](std::size_t i) -> std::optional<Row> {
    try {
      const OpAnalysis a = analyze_op(c, ops[i], cont, cfg);
      if (!a.feasible) return std::nullopt;
      auto g = adjoint_gradient(c, ops[i], cont, cfg, a).grad;
      for (double v : g)
        if (!std::isfinite(v)) return std::nullopt;
      return Row{std::move(g), a.index.phi, a.index.lambda};
    } catch (const InfeasibleError&) {
      return std::nullopt;
    } catch (const NumericalError&) {
      return std::nullopt;
    }
  });
  SensitivityMatrix psi;
  psi.contingency_id = cont.id;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i]) {
      psi.rows.push_back(grads[i]->grad);
      psi.phi.push_back(grads[i]->phi);
      psi.lambda.push_back(grads[i]->lambda);
      psi.op_refs.push_back(i);
    } else {
      psi.excluded.push_back(i);
    }
  }
  if (psi.rows.size() < 2) throw InfeasibleError("sensitivity matrix for '" + cont.id + "': fewer than two feasible OPs");
  return psi;
}

SensitivityMatrix SensitivityMatrix::subset(const std::vector<std::size_t>& positions) const {
  SensitivityMatrix out;
  out.contingency_id = contingency_id;
  out.excluded = excluded;
  for (auto p : positions) {
    out.rows.push_back(rows.at(p));
    out.op_refs.push_back(op_refs.at(p));
    if (p < phi.size()) out.phi.push_back(phi[p]);
    if (p < lambda.size()) out.lambda.push_back(lambda[p]);
  }
  return out;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

SpearmanResult spearman_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ContractError("spearman_matrix: no rows");
  const std::size_t m = rows.front().size();
  if (m < 2) throw ContractError("spearman_matrix: need at least two components per row");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd centered(n, static_cast<Eigen::Index>(m));
  SpearmanResult out;
  out.constant_rows.assign(rows.size(), false);
  std::vector<double> norm(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (row.size() != m) throw ContractError("spearman_matrix: ragged rows");
    for (double v : row)
      if (!std::isfinite(v)) throw ContractError("spearman_matrix: non-finite entry");
    const auto r = average_ranks(row);
    const double mean = 0.5 * static_cast<double>(m + 1);
    double ss = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      centered(i, static_cast<Eigen::Index>(k)) = r[k] - mean;
      ss += (r[k] - mean) * (r[k] - mean);
    }
    norm[static_cast<std::size_t>(i)] = std::sqrt(ss);
    out.constant_rows[static_cast<std::size_t>(i)] = ss == 0.0;
  }
  out.sc = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double v = 0.0;
      const double den = norm[static_cast<std::size_t>(i)] * norm[static_cast<std::size_t>(j)];
      if (den > 0.0) v = std::clamp(centered.row(i).dot(centered.row(j)) / den, -1.0, 1.0);
      out.sc(i, j) = out.sc(j, i) = v;
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> Partition::members() const {
  std::vector<std::vector<std::size_t>> m(static_cast<std::size_t>(std::max(k, 0)));
  for (std::size_t i = 0; i < assignments.size(); ++i) m.at(static_cast<std::size_t>(assignments[i])).push_back(i);
  return m;
}

void validate_partition(const Partition& p) {
  std::vector<bool> used(static_cast<std::size_t>(std::max(p.k, 0)), false);
  for (int a : p.assignments) {
    if (a < 0 || a >= p.k) throw ValidationError("partition: cluster id out of range");
    used[static_cast<std::size_t>(a)] = true;
  }
  if (std::find(used.begin(), used.end(), false) != used.end()) throw ValidationError("partition: empty cluster");
}

namespace {

// Cluster ids in order of first appearance.
Partition canonical(const std::vector<int>& raw) {
  std::vector<int> map;
  Partition p;
  for (int a : raw) {
    if (a >= static_cast<int>(map.size())) map.resize(static_cast<std::size_t>(a) + 1, -1);
    if (map[static_cast<std::size_t>(a)] < 0) map[static_cast<std::size_t>(a)] = p.k++;
    p.assignments.push_back(map[static_cast<std::size_t>(a)]);
  }
  return p;
}

std::size_t count_components(const Eigen::MatrixXd& a) {
  const auto n = a.rows();
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  std::size_t count = 0;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (comp[static_cast<std::size_t>(s)] >= 0) continue;
    std::vector<Eigen::Index> stack{s};
    comp[static_cast<std::size_t>(s)] = static_cast<int>(count);
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (Eigen::Index w = 0; w < n; ++w) {
        if (w != v && a(v, w) > 0.0 && comp[static_cast<std::size_t>(w)] < 0) {
          comp[static_cast<std::size_t>(w)] = static_cast<int>(count);
          stack.push_back(w);
        }
      }
    }
    ++count;
  }
  return count;
}

struct KMeansFit {
  std::vector<int> labels;
  double inertia = std::numeric_limits<double>::infinity();
};

KMeansFit kmeans(const Eigen::MatrixXd& x, int k, Rng& rng) {
  const auto n = x.rows();
  Eigen::MatrixXd centers(k, x.cols());
  // k-means++ seeding
  centers.row(0) = x.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n))));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i) - centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = uniform01(rng) * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2(i);
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
    }
    centers.row(c) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (x.row(i) - centers.row(c)).squaredNorm());
  }

  KMeansFit fit;
  fit.labels.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double v = (x.row(i) - centers.row(c)).squaredNorm();
        if (v < bd) {
          bd = v;
          best = c;
        }
      }
      if (fit.labels[static_cast<std::size_t>(i)] != best) {
        fit.labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> cnt(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(fit.labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++cnt[static_cast<std::size_t>(fit.labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (cnt[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sum.row(c) / cnt[static_cast<std::size_t>(c)];
        continue;
      }
      // empty cluster: move it to the point farthest from its center
      Eigen::Index far = 0;
      double fd = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double v = (x.row(i) - centers.row(fit.labels[static_cast<std::size_t>(i)])).squaredNorm();
        if (v > fd) {
          fd = v;
          far = i;
        }
      }
      centers.row(c) = x.row(far);
      fit.labels[static_cast<std::size_t>(far)] = c;
      changed = true;
    }
    if (!changed) break;
  }
  fit.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) fit.inertia += (x.row(i) - centers.row(fit.labels[static_cast<std::size_t>(i)])).squaredNorm();
  return fit;
}

}  // namespace

SpectralResult spectral_cluster(const Eigen::MatrixXd& affinity, const SpectralOptions& opts) {
  const auto n = affinity.rows();
  if (n == 0 || affinity.cols() != n) throw ContractError("spectral_cluster: affinity must be square and nonempty");
  if (!affinity.allFinite()) throw ContractError("spectral_cluster: non-finite affinity");
  if ((affinity.array() < 0.0).any()) throw ContractError("spectral_cluster: negative affinity");
  if (opts.k && *opts.k < 1) throw ContractError("spectral_cluster: k must be positive");
  const Eigen::MatrixXd a = 0.5 * (affinity + affinity.transpose());

  SpectralResult res;
  res.components = count_components(a);
  const Eigen::VectorXd deg = a.rowwise().sum();
  Eigen::VectorXd dinv(n);
  for (Eigen::Index i = 0; i < n; ++i) dinv(i) = deg(i) > 0.0 ? 1.0 / std::sqrt(deg(i)) : 0.0;
  const Eigen::MatrixXd lap =
      Eigen::MatrixXd::Identity(n, n) - dinv.asDiagonal() * a * dinv.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap);
  if (es.info() != Eigen::Success) throw NumericalError("spectral_cluster: eigen decomposition failed");
  const Eigen::VectorXd ev = es.eigenvalues();
  const auto scan = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(opts.eigen_scan));
  for (Eigen::Index i = 0; i < scan; ++i) res.eigenvalues.push_back(std::max(0.0, ev(i)));

  int k = 1;
  if (opts.k) {
    k = *opts.k;
  } else {
    // a constant affinity has no structure to split
    const double off = n > 1 ? a(0, 1) : 0.0;
    bool flat = true;
    for (Eigen::Index i = 0; i < n && flat; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j && std::abs(a(i, j) - off) > 1e-12) {
          flat = false;
          break;
        }
    if (!flat && n > 2) {
      double best_gap = -1.0;
      const int hi = std::min<int>(opts.k_max, static_cast<int>(res.eigenvalues.size()) - 1);
      for (int kk = opts.k_min; kk <= hi; ++kk) {
        const double gap = res.eigenvalues[static_cast<std::size_t>(kk)] - res.eigenvalues[static_cast<std::size_t>(kk - 1)];
        if (gap > best_gap + 1e-12) {
          best_gap = gap;
          k = kk;
        }
      }
      if (best_gap < 0.0) k = static_cast<int>(std::min<Eigen::Index>(n, opts.k_min));
    } else if (!flat) {
      k = static_cast<int>(n);
    }
  }
  if (static_cast<std::size_t>(k) < res.components) {
    k = static_cast<int>(res.components);
    res.k_overridden = true;
  }
  k = std::min<int>(k, static_cast<int>(n));
  if (k == 1) {
    res.partition.assignments.assign(static_cast<std::size_t>(n), 0);
    res.partition.k = 1;
    return res;
  }

  Eigen::MatrixXd emb = es.eigenvectors().leftCols(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double nrm = emb.row(i).norm();
    if (nrm > 0.0) emb.row(i) /= nrm;
  }
  Rng rng = derive_rng(opts.seed, 0x5bec);
  KMeansFit best;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, opts.restarts); ++r) {
    auto fit = kmeans(emb, k, rng);
    if (fit.inertia < best.inertia - 1e-12) best = std::move(fit);
  }
  res.partition = canonical(best.labels);
  return res;
}

double ari(const Partition& p, const Partition& q) {
  if (p.size() != q.size()) throw ContractError("ari: partitions differ in element count");
  const std::size_t n = p.size();
  const int kp = p.k, kq = q.k;
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(kp, kq);
  for (std::size_t i = 0; i < n; ++i) {
    if (p.assignments[i] < 0 || p.assignments[i] >= kp || q.assignments[i] < 0 || q.assignments[i] >= kq) {
      throw ContractError("ari: cluster id out of range");
    }
    table(p.assignments[i], q.assignments[i]) += 1.0;
  }
  auto c2 = [](double x) { return 0.5 * x * (x - 1.0); };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (int i = 0; i < kp; ++i)
    for (int j = 0; j < kq; ++j) index += c2(table(i, j));
  for (int i = 0; i < kp; ++i) sa += c2(table.row(i).sum());
  for (int j = 0; j < kq; ++j) sb += c2(table.col(j).sum());
  const double total = c2(static_cast<double>(n));
  const double expected = total > 0.0 ? sa * sb / total : 0.0;
  const double max_index = 0.5 * (sa + sb);
  if (max_index - expected == 0.0) return 1.0;
  return (index - expected) / (max_index - expected);
}

ContingencyClustering cluster_contingencies(const std::vector<Partition>& partitions, const SpectralOptions& opts) {
  if (partitions.empty()) throw ContractError("cluster_contingencies: no partitions");
  const auto m = static_cast<Eigen::Index>(partitions.size());
  ContingencyClustering out;
  out.affinity = Eigen::MatrixXd::Ones(m, m);
  for (Eigen::Index f = 0; f < m; ++f) {
    for (Eigen::Index g = f + 1; g < m; ++g) {
      const double v = 0.5 * (1.0 + ari(partitions[static_cast<std::size_t>(f)], partitions[static_cast<std::size_t>(g)]));
      out.affinity(f, g) = out.affinity(g, f) = v;
    }
  }
  if (m == 1) {
    out.partition.assignments = {0};
    out.partition.k = 1;
    out.eigenvalues = {0.0};
    return out;
  }
  auto res = spectral_cluster(out.affinity, opts);
  out.partition = std::move(res.partition);
  out.eigenvalues = std::move(res.eigenvalues);
  return out;
}

std::vector<std::size_t> select_representatives(const Partition& partition, const std::vector<double>& phi,
                                                const std::vector<int>& lambda) {
  if (phi.size() != partition.size() || lambda.size() != partition.size()) {
    throw ContractError("select_representatives: severity size mismatch");
  }
  std::vector<std::size_t> reps;
  for (const auto& members : partition.members()) {
    std::optional<std::size_t> worst_unstable, nearest_stable;
    for (std::size_t i : members) {
      if (lambda[i] < 0) {
        if (!worst_unstable || phi[i] > phi[*worst_unstable]) worst_unstable = i;
      } else if (!nearest_stable || phi[i] < phi[*nearest_stable]) {
        nearest_stable = i;
      }
    }
    reps.push_back(worst_unstable ? *worst_unstable : *nearest_stable);
  }
  return reps;
}

double ClusterGaussian::log_density(const std::vector<double>& u) const {
  if (u.size() != mu.size()) throw ContractError("log_density: dimension mismatch");
  Eigen::VectorXd diff(static_cast<Eigen::Index>(u.size()));
  for (std::size_t k = 0; k < u.size(); ++k) diff(static_cast<Eigen::Index>(k)) = u[k] - mu[k];
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("log_density: covariance not positive definite");
  const double q = diff.dot(llt.solve(diff));
  return log_norm - 0.5 * q;
}

ClusterGaussian fit_cluster_gaussian(const std::vector<std::vector<double>>& ops) {
  if (ops.size() < 2) throw InfeasibleError("fit_cluster_gaussian: need at least two OPs");
  const std::size_t d = ops.front().size();
  if (d == 0) throw ContractError("fit_cluster_gaussian: zero dimension");
  ClusterGaussian g;
  g.mu.assign(d, 0.0);
  for (const auto& u : ops) {
    if (u.size() != d) throw ContractError("fit_cluster_gaussian: ragged OPs");
    for (std::size_t k = 0; k < d; ++k) g.mu[k] += u[k];
  }
  for (auto& m : g.mu) m /= static_cast<double>(ops.size());
  const auto di = static_cast<Eigen::Index>(d);
  g.sigma = Eigen::MatrixXd::Zero(di, di);
  Eigen::VectorXd diff(di);
  for (const auto& u : ops) {
    for (std::size_t k = 0; k < d; ++k) diff(static_cast<Eigen::Index>(k)) = u[k] - g.mu[k];
    g.sigma += diff * diff.transpose();
  }
  g.sigma /= static_cast<double>(ops.size());
  const double eps = std::max(1e-6 * g.sigma.trace() / static_cast<double>(d), 1e-9);
  g.sigma.diagonal().array() += eps;
  const Eigen::LLT<Eigen::MatrixXd> llt(g.sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("fit_cluster_gaussian: covariance not positive definite");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  g.log_norm = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + logdet);
  return g;
}

std::vector<std::size_t> McgRanking::top() const {
  const auto n = std::min(top_k, ranked_generators.size());
  return {ranked_generators.begin(), ranked_generators.begin() + static_cast<std::ptrdiff_t>(n)};
}

McgRanking rank_mcg(const std::vector<std::vector<double>>& rows, int cluster_id, std::size_t top_k) {
  if (rows.empty()) throw ContractError("rank_mcg: no rows");
  const std::size_t d = rows.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows) {
    if (r.size() != d) throw ContractError("rank_mcg: ragged rows");
    for (std::size_t k = 0; k < d; ++k) mean[k] += std::abs(r[k]);
  }
  for (auto& m : mean) m /= static_cast<double>(rows.size());
  McgRanking out;
  out.cluster_id = cluster_id;
  out.top_k = top_k;
  out.ranked_generators.resize(d);
  std::iota(out.ranked_generators.begin(), out.ranked_generators.end(), 0);
  std::stable_sort(out.ranked_generators.begin(), out.ranked_generators.end(),
                   [&](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });
  for (std::size_t g : out.ranked_generators) out.mean_abs.push_back(mean[g]);
  return out;
}

MatchResult match_op(const std::vector<double>& u, const std::vector<ClusterGaussian>& gaussians,
                     const std::vector<McgRanking>& rankings) {
  if (gaussians.empty()) throw ContractError("match_op: no clusters");
  for (double v : u)
    if (!std::isfinite(v)) throw ContractError("match_op: non-finite operating point");
  MatchResult m;
  bool any = false;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < gaussians.size(); ++c) {
    if (gaussians[c].dimension() != u.size()) throw ContractError("match_op: dimension mismatch");
    double ld = -std::numeric_limits<double>::infinity();
    try {
      ld = gaussians[c].log_density(u);
    } catch (const NumericalError&) {
    }
    m.log_densities.push_back(ld);
    if (std::isfinite(ld) && (!any || ld > best)) {
      best = ld;
      m.cluster = static_cast<int>(c);
      any = true;
    }
  }
  if (!any) {
    m.fallback = true;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < gaussians.size(); ++c) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) d2 += (u[k] - gaussians[c].mu[k]) * (u[k] - gaussians[c].mu[k]);
      if (d2 < bd) {
        bd = d2;
        m.cluster = static_cast<int>(c);
      }
    }
  }
  for (const auto& r : rankings) {
    if (r.cluster_id == m.cluster) {
      m.mcgs = r.top();
      break;
    }
  }
  return m;
}

std::string partition_to_json(const Partition& p) { return json{{"k", p.k}, {"assignments", p.assignments}}.dump(); }

Partition partition_from_json(const std::string& text) {
  Partition p;
  try {
    const json j = json::parse(text);
    p.k = j.at("k").get<int>();
    p.assignments = j.at("assignments").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("partition: ") + e.what());
  }
  validate_partition(p);
  return p;
}

std::string gaussian_to_json(const ClusterGaussian& g) {
  std::vector<std::vector<double>> sig;
  for (Eigen::Index i = 0; i < g.sigma.rows(); ++i) {
    sig.emplace_back(g.sigma.row(i).begin(), g.sigma.row(i).end());
  }
  return json{{"mu", g.mu}, {"sigma", sig}, {"log_norm", g.log_norm}}.dump();
}

ClusterGaussian gaussian_from_json(const std::string& text) {
  ClusterGaussian g;
  try {
    const json j = json::parse(text);
    g.mu = j.at("mu").get<std::vector<double>>();
    const auto sig = j.at("sigma").get<std::vector<std::vector<double>>>();
    const auto d = static_cast<Eigen::Index>(g.mu.size());
    if (static_cast<Eigen::Index>(sig.size()) != d) throw ParseError("gaussian: sigma shape");
    g.sigma.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (static_cast<Eigen::Index>(sig[static_cast<std::size_t>(i)].size()) != d) throw ParseError("gaussian: sigma shape");
      for (Eigen::Index k = 0; k < d; ++k) g.sigma(i, k) = sig[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    g.log_norm = j.at("log_norm").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("gaussian: ") + e.what());
  }
  return g;
}

std::string ranking_to_json(const McgRanking& r) {
  return json{{"cluster_id", r.cluster_id},
              {"ranked_generators", r.ranked_generators},
              {"mean_abs", r.mean_abs},
              {"top_k", r.top_k}}
      .dump();
}

McgRanking ranking_from_json(const std::string& text) {
  McgRanking r;
  try {
    const json j = json::parse(text);
    r.cluster_id = j.at("cluster_id").get<int>();
    r.ranked_generators = j.at("ranked_generators").get<std::vector<std::size_t>>();
    r.mean_abs = j.value("mean_abs", std::vector<double>{});
    r.top_k = j.value("top_k", std::size_t{2});
  } catch (const json::exception& e) {
    throw ParseError(std::string("mcg ranking: ") + e.what());
  }
  return r;
}

std::string sensitivity_to_json(const SensitivityMatrix& psi) {
  return json{{"contingency_id", psi.contingency_id},
              {"rows", psi.rows},
              {"op_refs", psi.op_refs},
              {"phi", psi.phi},
              {"lambda", psi.lambda},
              {"excluded", psi.excluded}}
      .dump();
}

SensitivityMatrix sensitivity_from_json(const std::string& text) {
  SensitivityMatrix psi;
  try {
    const json j = json::parse(text);
    psi.contingency_id = j.at("contingency_id").get<std::string>();
    psi.rows = j.at("rows").get<std::vector<std::vector<double>>>();
    psi.op_refs = j.value("op_refs", std::vector<std::size_t>{});
    psi.excluded = j.value("excluded", std::vector<std::size_t>{});
    psi.phi = j.value("phi", std::vector<double>{});
    psi.lambda = j.value("lambda", std::vector<int>{});
  } catch (const json::exception& e) {
    throw ParseError(std::string("sensitivity matrix: ") + e.what());
  }
  if (psi.op_refs.empty()) {
    psi.op_refs.resize(psi.rows.size());
    std::iota(psi.op_refs.begin(), psi.op_refs.end(), 0);
  }
  return psi;
}

}  // namespace tsb
