// Independent oracles and fixtures shared by the unit and acceptance tests.
// Nothing here calls into the library routine it is used to check.
#ifndef ACD_TESTS_SUPPORT_HPP_
#define ACD_TESTS_SUPPORT_HPP_

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <vector>

#include "acd/dataset.hpp"
#include "acd/estimators.hpp"
#include "acd/graph.hpp"
#include "acd/random.hpp"
#include "acd/scm.hpp"

namespace acd::testing {

/// Adjacency as a dense boolean matrix, acyclic iff no power of it has a
/// nonzero trace. Deliberately unlike the topological-sort implementation.
inline bool acyclic_by_powers(const std::vector<std::vector<int>>& adj) {
  const std::size_t d = adj.size();
  std::vector<std::vector<int>> reach = adj;
  for (std::size_t step = 0; step < d; ++step) {
    for (std::size_t i = 0; i < d; ++i) {
      if (reach[i][i]) return false;
    }
    std::vector<std::vector<int>> next(d, std::vector<int>(d, 0));
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        if (!reach[i][k]) continue;
        for (std::size_t j = 0; j < d; ++j) next[i][j] |= adj[k][j];
      }
    }
    reach = next;
  }
  return true;
}

inline std::vector<std::vector<int>> dense(const DirectedGraph& g) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(g.size()), std::vector<int>(g.size(), 0));
  for (int i = 0; i < g.size(); ++i) {
    for (int j = 0; j < g.size(); ++j) adj[i][j] = g.has_edge(i, j) ? 1 : 0;
  }
  return adj;
}

/// Number of acyclic digraphs among all 2^(d(d-1)) off-diagonal patterns.
inline std::int64_t brute_force_dag_count(int d) {
  std::vector<std::pair<int, int>> slots;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (i != j) slots.emplace_back(i, j);
    }
  }
  std::int64_t count = 0;
  const std::uint64_t total = std::uint64_t{1} << slots.size();
  for (std::uint64_t bits = 0; bits < total; ++bits) {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(d), std::vector<int>(d, 0));
    bool two_cycle = false;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      if ((bits >> s) & 1U) {
        const auto [i, j] = slots[s];
        adj[i][j] = 1;
        if (adj[j][i]) two_cycle = true;
      }
    }
    if (!two_cycle && acyclic_by_powers(adj)) ++count;
  }
  return count;
}

/// Verma-Pearl: same skeleton and same unshielded colliders.
inline bool markov_equivalent(const DirectedGraph& a, const DirectedGraph& b) {
  const int d = a.size();
  if (b.size() != d) return false;
  auto adjacent = [](const DirectedGraph& g, int i, int j) { return g.has_edge(i, j) || g.has_edge(j, i); };
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      if (adjacent(a, i, j) != adjacent(b, i, j)) return false;
    }
  }
  auto collider = [&](const DirectedGraph& g, int i, int k, int j) {
    return g.has_edge(i, k) && g.has_edge(j, k) && !adjacent(g, i, j);
  };
  for (int k = 0; k < d; ++k) {
    for (int i = 0; i < d; ++i) {
      for (int j = i + 1; j < d; ++j) {
        if (i == k || j == k) continue;
        if (collider(a, i, k, j) != collider(b, i, k, j)) return false;
      }
    }
  }
  return true;
}

/// log of the NIG marginal likelihood of y given design X (intercept column
/// included by the caller), integrating the Gaussian marginal over the noise
/// variance numerically:  Z = int N(y; X m0, s2 (I + X X' / c)) IG(s2; a, b) ds2.
inline double nig_log_marginal_quadrature(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const NigPrior& prior) {
  const auto n = static_cast<double>(y.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(y.size(), y.size()) + x * x.transpose() / prior.precision;
  const Eigen::VectorXd r = y - x * Eigen::VectorXd::Constant(x.cols(), prior.mean);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  const double logdet = ldlt.vectorD().array().log().sum();
  const double quad = r.dot(ldlt.solve(r));
  const double a = prior.shape;
  const double b = prior.rate;

  // Integrand in t = log s2, including the ds2 = s2 dt Jacobian.
  auto log_f = [&](double t) {
    return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * n * t - 0.5 * logdet - 0.5 * quad * std::exp(-t) +
           a * std::log(b) - std::lgamma(a) - a * t - b * std::exp(-t);
  };
  const double t_peak = std::log((0.5 * quad + b) / (0.5 * n + a));
  const double peak = log_f(t_peak);
  auto f = [&](double t) { return std::exp(log_f(t) - peak); };
  double err = 0.0;
  const double left = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, t_peak - 30.0, t_peak, 20,
                                                                                      1e-14, &err);
  const double right = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, t_peak, t_peak + 200.0, 20,
                                                                                       1e-14, &err);
  return peak + std::log(left + right);
}

/// Sample standardization + NIG posterior predictive via marginal ratios.
/// Returns the per-row log density on the original scale.
inline std::vector<double> conjugate_oracle_rows(const DataSplit& split, const ParentSet& target, const NigPrior& prior) {
  const auto parents = target.parent_list();
  const auto& tr = split.train.values;
  const auto& es = split.est.values;
  const Eigen::Index n = tr.rows();
  auto moments = [&](int col) {
    double mean = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) mean += tr(r, col);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) ss += (tr(r, col) - mean) * (tr(r, col) - mean);
    double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 1.0;
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) sd = 1.0;
    return std::pair{mean, sd};
  };
  const auto [my, sy] = moments(target.child);
  std::vector<std::pair<double, double>> px;
  for (int p : parents) px.push_back(moments(p));

  const auto k = static_cast<Eigen::Index>(parents.size()) + 1;
  Eigen::MatrixXd x(n + 1, k);
  Eigen::VectorXd y(n + 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    x(r, 0) = 1.0;
    for (Eigen::Index c = 1; c < k; ++c) {
      const auto& [m, s] = px[static_cast<std::size_t>(c - 1)];
      x(r, c) = (tr(r, parents[static_cast<std::size_t>(c - 1)]) - m) / s;
    }
    y(r) = (tr(r, target.child) - my) / sy;
  }
  const double base = nig_log_marginal_quadrature(x.topRows(n), y.head(n), prior);
  std::vector<double> out;
  for (Eigen::Index r = 0; r < es.rows(); ++r) {
    x(n, 0) = 1.0;
    for (Eigen::Index c = 1; c < k; ++c) {
      const auto& [m, s] = px[static_cast<std::size_t>(c - 1)];
      x(n, c) = (es(r, parents[static_cast<std::size_t>(c - 1)]) - m) / s;
    }
    y(n) = (es(r, target.child) - my) / sy;
    out.push_back(nig_log_marginal_quadrature(x, y, prior) - base - std::log(sy));
  }
  return out;
}

/// Linear-Gaussian data over a fixed DAG, with weights drawn from +-U[0.5, 2].
inline Dataset linear_gaussian_data(const DirectedGraph& g, int n, std::uint64_t seed, double noise = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> mag(0.5, 2.0);
  std::bernoulli_distribution sign(0.5);
  std::normal_distribution<double> eps(0.0, noise);
  const int d = g.size();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
  for (const auto& [i, j] : g.edges()) w(i, j) = (sign(rng) ? 1.0 : -1.0) * mag(rng);
  const auto order = topological_order(g);
  Eigen::MatrixXd v(n, d);
  for (int r = 0; r < n; ++r) {
    for (int j : order) {
      double value = eps(rng);
      for (int i = 0; i < d; ++i) value += w(i, j) * (w(i, j) != 0.0 ? v(r, i) : 0.0);
      v(r, j) = value;
    }
  }
  return Dataset(v);
}

inline std::shared_ptr<DataSplit> split_of(const Dataset& data, double fraction, std::uint64_t seed) {
  Rng rng(seed);
  return std::make_shared<DataSplit>(split_dataset(data, fraction, rng));
}

inline DirectedGraph graph_from(int d, std::initializer_list<std::pair<int, int>> edges) {
  return DirectedGraph::from_edges(d, std::vector<std::pair<int, int>>(edges));
}

/// Small 5-column split of standard normals for protocol tests.
inline DataSplit random_split_for_bridge() {
  Rng rng(77);
  std::normal_distribution<double> z;
  Eigen::MatrixXd tr(12, 5);
  Eigen::MatrixXd es(6, 5);
  for (int r = 0; r < 12; ++r) {
    for (int c = 0; c < 5; ++c) tr(r, c) = z(rng);
  }
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 5; ++c) es(r, c) = z(rng);
  }
  return DataSplit{Dataset(tr), Dataset(es), 2.0 / 3.0};
}

}  // namespace acd::testing

#endif  // ACD_TESTS_SUPPORT_HPP_
