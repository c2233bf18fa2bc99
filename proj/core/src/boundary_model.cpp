#include "tsb/boundary_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tsb/error.hpp"
#include "tsb/parallel.hpp"

namespace tsb {

using nlohmann::json;

std::vector<double> FeatureScale::apply(const std::vector<double>& u) const {
  std::vector<double> z(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) z[k] = (u[k] - mean[k]) / spread[k];
  return z;
}

namespace {

FeatureScale fit_scale(const std::vector<std::vector<double>>& pts) {
  const std::size_t d = pts.front().size();
  FeatureScale s;
  s.mean.assign(d, 0.0);
  s.spread.assign(d, 0.0);
  for (const auto& p : pts)
    for (std::size_t k = 0; k < d; ++k) s.mean[k] += p[k];
  for (auto& m : s.mean) m /= static_cast<double>(pts.size());
  for (const auto& p : pts)
    for (std::size_t k = 0; k < d; ++k) s.spread[k] += (p[k] - s.mean[k]) * (p[k] - s.mean[k]);
  for (auto& v : s.spread) {
    v = std::sqrt(v / static_cast<double>(pts.size()));
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

struct SmoSolution {
  std::vector<double> alpha;
  double rho = 0.0;
};

// Dual soft-margin SVM, second-order working-set selection.
SmoSolution smo(const Eigen::MatrixXd& kmat, const std::vector<int>& y, double cbox, double eps,
                 std::size_t max_iter) {
  const std::size_t n = y.size();
  constexpr double tau = 1e-12;
  std::vector<double> a(n, 0.0), g(n, -1.0);
  auto kk = [&](std::size_t i, std::size_t j) { return kmat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); };
  auto in_up = [&](std::size_t t) { return (y[t] == 1 && a[t] < cbox) || (y[t] == -1 && a[t] > 0.0); };
  auto in_low = [&](std::size_t t) { return (y[t] == 1 && a[t] > 0.0) || (y[t] == -1 && a[t] < cbox); };

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (in_up(t) && -y[t] * g[t] > gmax) {
        gmax = -y[t] * g[t];
        i = t;
      }
    }
    if (i == n) break;
    double gmax2 = -std::numeric_limits<double>::infinity();
    double obj_min = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double ytg = y[t] * g[t];
      gmax2 = std::max(gmax2, ytg);
      const double b = gmax + ytg;
      if (b > 0.0) {
        double quad = kk(i, i) + kk(t, t) - 2.0 * kk(i, t);
        if (quad <= 0.0) quad = tau;
        const double obj = -(b * b) / quad;
        if (obj < obj_min) {
          obj_min = obj;
          j = t;
        }
      }
    }
    if (gmax + gmax2 < eps || j == n) break;

    const double ai_old = a[i], aj_old = a[j];
    double quad = kk(i, i) + kk(j, j) - 2.0 * kk(i, j);
    if (quad <= 0.0) quad = tau;
    if (y[i] != y[j]) {
      const double delta = (-g[i] - g[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0.0) {
        if (a[j] < 0.0) { a[j] = 0.0; a[i] = diff; }
      } else {
        if (a[i] < 0.0) { a[i] = 0.0; a[j] = -diff; }
      }
      if (diff > 0.0) {
        if (a[i] > cbox) { a[i] = cbox; a[j] = cbox - diff; }
      } else {
        if (a[j] > cbox) { a[j] = cbox; a[i] = cbox + diff; }
      }
    } else {
      const double delta = (g[i] - g[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > cbox) {
        if (a[i] > cbox) { a[i] = cbox; a[j] = sum - cbox; }
      } else {
        if (a[j] < 0.0) { a[j] = 0.0; a[i] = sum; }
      }
      if (sum > cbox) {
        if (a[j] > cbox) { a[j] = cbox; a[i] = sum - cbox; }
      } else {
        if (a[i] < 0.0) { a[i] = 0.0; a[j] = sum; }
      }
    }
    const double dai = a[i] - ai_old, daj = a[j] - aj_old;
    for (std::size_t t = 0; t < n; ++t) {
      g[t] += y[t] * (y[i] * kk(t, i) * dai + y[j] * kk(t, j) * daj);
    }
  }

  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * g[t];
    if (a[t] >= cbox) {
      if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (a[t] <= 0.0) {
      if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  SmoSolution s;
  s.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  s.alpha = std::move(a);
  return s;
}

Eigen::MatrixXd kernel_matrix(const std::vector<std::vector<double>>& z, const std::vector<std::size_t>& idx,
                              double gamma) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = std::exp(-gamma * sqdist(z[idx[static_cast<std::size_t>(i)]], z[idx[static_cast<std::size_t>(j)]]));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

struct Fitted {
  std::vector<std::size_t> support;  // indices into the training subset
  std::vector<double> coeff;
  double rho = 0.0;
};

Fitted fit(const std::vector<std::vector<double>>& z, const std::vector<int>& labels,
           const std::vector<std::size_t>& idx, double cbox, double gamma, const TrainOptions& opts) {
  std::vector<int> y;
  y.reserve(idx.size());
  for (auto i : idx) y.push_back(labels[i]);
  const auto sol = smo(kernel_matrix(z, idx, gamma), y, cbox, opts.tolerance, opts.max_iterations);
  Fitted f;
  f.rho = sol.rho;
  for (std::size_t t = 0; t < idx.size(); ++t) {
    if (sol.alpha[t] > 0.0) {
      f.support.push_back(idx[t]);
      f.coeff.push_back(sol.alpha[t] * y[t]);
    }
  }
  return f;
}

double fitted_decision(const Fitted& f, const std::vector<std::vector<double>>& z, const std::vector<double>& q,
                       double gamma) {
  double s = -f.rho;
  for (std::size_t k = 0; k < f.support.size(); ++k) s += f.coeff[k] * std::exp(-gamma * sqdist(z[f.support[k]], q));
  return s;
}

}  // namespace

BoundaryModel train(const std::vector<std::vector<double>>& points, const std::vector<int>& labels,
                    const TrainOptions& opts, const std::string& contingency_id) {
  if (points.size() != labels.size()) throw ContractError("train: points and labels differ in length");
  std::size_t pos = 0, neg = 0;
  for (int l : labels) {
    if (l == 1) ++pos;
    else if (l == -1) ++neg;
    else throw ContractError("train: labels must be +1 or -1");
  }
  if (pos < 2 || neg < 2) throw NoBoundaryError("train: need at least two samples of each class");
  const std::size_t d = points.front().size();
  for (const auto& p : points) {
    if (p.size() != d) throw ContractError("train: inconsistent point dimension");
    for (double v : p)
      if (!std::isfinite(v)) throw ContractError("train: non-finite coordinate");
  }

  BoundaryModel m;
  m.contingency_id = contingency_id;
  m.feature_scale = fit_scale(points);
  std::vector<std::vector<double>> z;
  z.reserve(points.size());
  for (const auto& p : points) z.push_back(m.feature_scale.apply(p));

  const double gamma0 = 1.0 / static_cast<double>(d);
  double cbox = opts.c.value_or(10.0);
  double gamma = opts.kernel_gamma.value_or(gamma0);
  const bool tune = opts.cross_validate && points.size() > opts.cv_threshold && opts.cv_folds >= 2 &&
                    !(opts.c && opts.kernel_gamma);
  if (tune) {
    const std::vector<double> cs = opts.c ? std::vector<double>{*opts.c} : opts.c_grid;
    std::vector<double> gs;
    if (opts.kernel_gamma) gs = {*opts.kernel_gamma};
    else for (double mlt : opts.gamma_grid) gs.push_back(mlt * gamma0);
    std::size_t best_correct = 0;
    bool have = false;
    for (double cc : cs) {
      for (double gg : gs) {
        std::size_t correct = 0;
        for (std::size_t fold = 0; fold < opts.cv_folds; ++fold) {
          std::vector<std::size_t> tr, te;
          for (std::size_t i = 0; i < points.size(); ++i) (i % opts.cv_folds == fold ? te : tr).push_back(i);
          bool pos_tr = false, neg_tr = false;
          for (auto i : tr) (labels[i] == 1 ? pos_tr : neg_tr) = true;
          if (!pos_tr || !neg_tr) {
            for (auto i : te) correct += labels[i] == (pos_tr ? 1 : -1);
            continue;
          }
          const Fitted f = fit(z, labels, tr, cc, gg, opts);
          for (auto i : te) correct += (fitted_decision(f, z, z[i], gg) > 0.0) == (labels[i] == 1);
        }
        if (!have || correct > best_correct) {
          have = true;
          best_correct = correct;
          cbox = cc;
          gamma = gg;
        }
      }
    }
  }

  std::vector<std::size_t> all(points.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Fitted f = fit(z, labels, all, cbox, gamma, opts);
  m.c = cbox;
  m.kernel_gamma = gamma;
  m.bias = -f.rho;
  for (std::size_t k = 0; k < f.support.size(); ++k) {
    m.support_points.push_back(points[f.support[k]]);
    m.support_coeffs.push_back(f.coeff[k]);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < points.size(); ++i) correct += (decision(m, points[i]) > 0.0) == (labels[i] == 1);
  m.training_accuracy = static_cast<double>(correct) / static_cast<double>(points.size());
  return m;
}

BoundaryModel train(const SampleSet& set, const TrainOptions& opts) {
  std::vector<std::vector<double>> pts;
  std::vector<int> labels;
  std::string id;
  for (const auto& s : set.samples) {
    if (!s.feasible()) continue;
    pts.push_back(s.u());
    labels.push_back(s.label == Label::Stable ? 1 : -1);
    if (id.empty()) id = s.contingency_id;
  }
  if (pts.empty()) throw NoBoundaryError("train: sample set has no feasible samples");
  return train(pts, labels, opts, id);
}

double decision(const BoundaryModel& model, const std::vector<double>& u) {
  if (u.size() != model.dimension()) throw ContractError("decision: dimension mismatch");
  const auto z = model.feature_scale.apply(u);
  double s = model.bias;
  for (std::size_t k = 0; k < model.support_points.size(); ++k) {
    const auto zs = model.feature_scale.apply(model.support_points[k]);
    s += model.support_coeffs[k] * std::exp(-model.kernel_gamma * sqdist(zs, z));
  }
  return s;
}

Projection project_to_boundary(const BoundaryModel& model, const std::vector<double>& from,
                               const std::vector<double>& to, double tol, std::size_t max_iter) {
  Projection p;
  const double fa = decision(model, from);
  if (std::abs(fa) < tol) {
    p.point = from;
    p.converged = true;
    return p;
  }
  const double fb = decision(model, to);
  if (std::abs(fb) < tol) {
    p.point = to;
    p.converged = true;
    return p;
  }
  if ((fa > 0.0) == (fb > 0.0)) throw ContractError("project_to_boundary: endpoints on the same side");
  double lo = 0.0, hi = 1.0;
  auto at = [&](double s) {
    std::vector<double> u(from.size());
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = from[k] + s * (to[k] - from[k]);
    return u;
  };
  const bool from_pos = fa > 0.0;
  for (p.iterations = 1; p.iterations <= max_iter; ++p.iterations) {
    const double mid = 0.5 * (lo + hi);
    p.point = at(mid);
    const double fm = decision(model, p.point);
    if (std::abs(fm) < tol) {
      p.converged = true;
      return p;
    }
    if ((fm > 0.0) == from_pos) lo = mid; else hi = mid;
  }
  p.iterations = max_iter;
  return p;
}

std::vector<std::size_t> GridSpec::counts() const {
  if (min.size() != max.size() || min.size() != interval.size()) throw ConfigError("grid spec: ragged bounds");
  std::vector<std::size_t> n;
  for (std::size_t k = 0; k < min.size(); ++k) {
    if (!(interval[k] > 0.0)) throw ConfigError("grid spec: interval must be positive");
    if (max[k] < min[k]) throw ConfigError("grid spec: max below min");
    n.push_back(static_cast<std::size_t>(std::floor((max[k] - min[k]) / interval[k] + 1e-9)) + 1);
  }
  return n;
}

std::size_t GridSpec::size() const {
  std::size_t total = 1;
  for (auto n : counts()) total *= n;
  return min.empty() ? 0 : total;
}

std::vector<double> GridSpec::point(std::size_t flat) const {
  const auto n = counts();
  std::vector<double> u(n.size());
  for (std::size_t k = n.size(); k-- > 0;) {
    u[k] = min[k] + static_cast<double>(flat % n[k]) * interval[k];
    flat /= n[k];
  }
  return u;
}

AccuracyReport evaluate_accuracy_report(const BoundaryModel& model, const LabeledGrid& grid, double phi_cri,
                                        std::size_t workers) {
  AccuracyReport r;
  r.infeasible = grid.infeasible_points.size();
  const auto pred = parallel_map(grid.size(), workers, [&](std::size_t i) { return predicts_stable(model, grid.points[i]); });
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ++r.evaluated;
    const bool truth = grid.labels[i] == Label::Stable;
    if (pred[i] == truth) {
      ++r.correct;
    } else if (i < grid.phi.size() && std::abs(grid.phi[i]) < phi_cri) {
      ++r.correct;
      ++r.conceded;
    }
  }
  r.accuracy = r.evaluated ? static_cast<double>(r.correct) / static_cast<double>(r.evaluated) : 0.0;
  return r;
}

double evaluate_accuracy(const BoundaryModel& model, const LabeledGrid& grid, double phi_cri, std::size_t workers) {
  if (grid.size() == 0) throw ContractError("evaluate_accuracy: empty grid");
  return evaluate_accuracy_report(model, grid, phi_cri, workers).accuracy;
}

std::string model_to_json(const BoundaryModel& m) {
  json sup = json::array();
  for (std::size_t k = 0; k < m.support_points.size(); ++k) {
    sup.push_back({{"point", m.support_points[k]}, {"coeff", m.support_coeffs[k]}});
  }
  json j{{"contingency_id", m.contingency_id},
         {"kernel_gamma", m.kernel_gamma},
         {"C", m.c},
         {"bias", m.bias},
         {"feature_scale", {{"mean", m.feature_scale.mean}, {"spread", m.feature_scale.spread}}},
         {"supports", sup},
         {"training_accuracy", m.training_accuracy}};
  return j.dump(2);
}

BoundaryModel model_from_json(const std::string& text) {
  BoundaryModel m;
  try {
    const json j = json::parse(text);
    m.contingency_id = j.at("contingency_id").get<std::string>();
    m.kernel_gamma = j.at("kernel_gamma").get<double>();
    m.c = j.at("C").get<double>();
    m.bias = j.at("bias").get<double>();
    m.feature_scale.mean = j.at("feature_scale").at("mean").get<std::vector<double>>();
    m.feature_scale.spread = j.at("feature_scale").at("spread").get<std::vector<double>>();
    for (const auto& s : j.at("supports")) {
      m.support_points.push_back(s.at("point").get<std::vector<double>>());
      m.support_coeffs.push_back(s.at("coeff").get<double>());
    }
    m.training_accuracy = j.value("training_accuracy", 0.0);
  } catch (const json::exception& e) {
    throw ParseError(std::string("boundary model: ") + e.what());
  }
  if (m.feature_scale.mean.size() != m.feature_scale.spread.size()) throw ParseError("boundary model: feature_scale");
  for (const auto& p : m.support_points)
    if (p.size() != m.dimension()) throw ParseError("boundary model: support dimension");
  return m;
}

std::string grid_spec_to_json(const GridSpec& s) {
  return json{{"min", s.min}, {"max", s.max}, {"interval", s.interval}}.dump();
}

GridSpec grid_spec_from_json(const std::string& text) {
  GridSpec s;
  try {
    const json j = json::parse(text);
    s.min = j.at("min").get<std::vector<double>>();
    s.max = j.at("max").get<std::vector<double>>();
    s.interval = j.at("interval").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("grid spec: ") + e.what());
  }
  s.counts();
  return s;
}

std::string grid_to_json(const LabeledGrid& g) {
  json pts = json::array();
  for (std::size_t i = 0; i < g.size(); ++i) {
    pts.push_back({{"u", g.points[i]}, {"label", std::string(to_string(g.labels[i]))}, {"phi", g.phi[i]}});
  }
  json j{{"spec", json::parse(grid_spec_to_json(g.spec))}, {"points", pts}, {"infeasible", g.infeasible_points}};
  return j.dump();
}

LabeledGrid grid_from_json(const std::string& text) {
  LabeledGrid g;
  try {
    const json j = json::parse(text);
    g.spec = grid_spec_from_json(j.at("spec").dump());
    for (const auto& p : j.at("points")) {
      g.points.push_back(p.at("u").get<std::vector<double>>());
      g.labels.push_back(label_from_string(p.at("label").get<std::string>()));
      g.phi.push_back(p.at("phi").get<double>());
    }
    g.infeasible_points = j.at("infeasible").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("labeled grid: ") + e.what());
  }
  return g;
}

}  // namespace tsb
