#include <cmath>
#include <numbers>

#include "acd/estimators.hpp"

namespace acd {

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

}  // namespace

Eigen::VectorXd nig_log_predictive(const Eigen::MatrixXd& train_x, const Eigen::VectorXd& train_y,
                                   const Eigen::MatrixXd& test_x, const Eigen::VectorXd& test_y,
                                   const NigPrior& prior) {
  prior.validate();
  if (train_x.rows() != train_y.size() || test_x.rows() != test_y.size() ||
      train_x.cols() != test_x.cols()) {
    throw EstimatorError("design matrix shapes disagree");
  }
  const Eigen::MatrixXd x = with_intercept(train_x);
  const Eigen::Index k = x.cols();
  const double n = static_cast<double>(x.rows());

  const Eigen::VectorXd m0 = Eigen::VectorXd::Constant(k, prior.mean);
  Eigen::MatrixXd precision_n = x.transpose() * x;
  precision_n.diagonal().array() += prior.precision;
  const Eigen::LLT<Eigen::MatrixXd> chol(precision_n);
  if (chol.info() != Eigen::Success) throw EstimatorError("posterior precision not positive definite");

  const Eigen::VectorXd mean_n = chol.solve(prior.precision * m0 + x.transpose() * train_y);
  const Eigen::VectorXd resid = train_y - x * mean_n;
  const double shape_n = prior.shape + 0.5 * n;
  const double rate_n =
      prior.rate + 0.5 * (resid.squaredNorm() + prior.precision * (mean_n - m0).squaredNorm());

  const double dof = 2.0 * shape_n;
  const double log_norm = std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
                          0.5 * std::log(dof * std::numbers::pi);
  const Eigen::MatrixXd xt = with_intercept(test_x);
  const Eigen::MatrixXd solved = chol.solve(xt.transpose());

  Eigen::VectorXd out(test_y.size());
  for (Eigen::Index r = 0; r < xt.rows(); ++r) {
    const double loc = xt.row(r).dot(mean_n);
    const double scale2 = rate_n / shape_n * (1.0 + xt.row(r).dot(solved.col(r)));
    const double z = test_y(r) - loc;
    out(r) = log_norm - 0.5 * std::log(scale2) -
             0.5 * (dof + 1.0) * std::log1p(z * z / (dof * scale2));
  }
  return out;
}

LikelihoodResult estimate_conjugate_gaussian(const LikelihoodQuery& q, const NigPrior& prior,
                                             bool per_row) {
  q.validate();
  const auto parents = q.target.parent_list();
  const auto& train = q.split->train.values;
  const auto& est = q.split->est.values;
  const int child = q.target.child;

  const auto p = static_cast<Eigen::Index>(parents.size());
  Eigen::MatrixXd train_x(train.rows(), p);
  Eigen::MatrixXd est_x(est.rows(), p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const int col = parents[static_cast<std::size_t>(k)];
    const auto s = Standardizer::fit(train.col(col));
    train_x.col(k) = (train.col(col).array() - s.center) / s.scale;
    est_x.col(k) = (est.col(col).array() - s.center) / s.scale;
  }
  const auto sy = Standardizer::fit(train.col(child));
  const Eigen::VectorXd train_y = (train.col(child).array() - sy.center) / sy.scale;
  const Eigen::VectorXd est_y = (est.col(child).array() - sy.center) / sy.scale;
  if (!train_x.allFinite() || !est_x.allFinite() || !train_y.allFinite() || !est_y.allFinite()) {
    throw EstimatorError("non-finite input for child " + std::to_string(child));
  }

  Eigen::VectorXd rows = nig_log_predictive(train_x, train_y, est_x, est_y, prior);
  rows.array() -= std::log(sy.scale);

  LikelihoodResult result;
  result.total_logpred = rows.sum();
  if (!std::isfinite(result.total_logpred)) {
    throw EstimatorError("non-finite predictive likelihood for child " + std::to_string(child));
  }
  if (per_row) result.per_row.assign(rows.data(), rows.data() + rows.size());
  return result;
}

}  // namespace acd
