#include <cmath>
#include <numbers>

#include "acd/estimators.hpp"

namespace acd {

namespace {

struct AdamMoments {
  Eigen::ArrayXXd first;
  Eigen::ArrayXXd second;
};

template <typename Param>
void adam_step(Param& param, const Param& grad, AdamMoments& m, double step_size, int t) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  if (m.first.size() == 0) {
    m.first = Eigen::ArrayXXd::Zero(param.rows(), param.cols());
    m.second = Eigen::ArrayXXd::Zero(param.rows(), param.cols());
  }
  const Eigen::ArrayXXd g = grad.array();
  m.first = kBeta1 * m.first + (1.0 - kBeta1) * g;
  m.second = kBeta2 * m.second + (1.0 - kBeta2) * g.square();
  const double c1 = 1.0 - std::pow(kBeta1, t);
  const double c2 = 1.0 - std::pow(kBeta2, t);
  param.array() -= step_size * (m.first / c1) / ((m.second / c2).sqrt() + kEps);
}

struct GaussianMlp {
  Eigen::MatrixXd w_in;  // hidden x inputs
  Eigen::VectorXd b_in;
  Eigen::VectorXd w_mean;
  Eigen::VectorXd w_logvar;
  double b_mean = 0.0;
  double b_logvar = 0.0;

  GaussianMlp(int inputs, int hidden, Rng& rng) {
    std::normal_distribution<double> unit(0.0, 1.0);
    const double in_scale = 1.0 / std::sqrt(std::max(inputs, 1));
    const double out_scale = 1.0 / std::sqrt(hidden);
    w_in.resize(hidden, inputs);
    for (Eigen::Index i = 0; i < w_in.size(); ++i) w_in.data()[i] = in_scale * unit(rng);
    b_in = Eigen::VectorXd::Zero(hidden);
    w_mean.resize(hidden);
    w_logvar.resize(hidden);
    for (int h = 0; h < hidden; ++h) w_mean(h) = out_scale * unit(rng);
    for (int h = 0; h < hidden; ++h) w_logvar(h) = out_scale * unit(rng);
  }

  Eigen::MatrixXd hidden(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd z = x * w_in.transpose();
    z.rowwise() += b_in.transpose();
    return z.array().tanh().matrix();
  }

  /// Per-row Gaussian log density of y.
  Eigen::VectorXd log_density(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const {
    const Eigen::MatrixXd h = hidden(x);
    const Eigen::ArrayXd mean = (h * w_mean).array() + b_mean;
    const Eigen::ArrayXd logvar = (h * w_logvar).array() + b_logvar;
    const Eigen::ArrayXd r = y.array() - mean;
    return (-0.5 * (std::log(2.0 * std::numbers::pi) + logvar + r.square() * (-logvar).exp())).matrix();
  }
};

}  // namespace

LikelihoodResult estimate_mlp(const LikelihoodQuery& q, const MlpHyperparams& hp, Rng& rng,
                              bool per_row) {
  q.validate();
  hp.validate();
  const auto parents = q.target.parent_list();
  const auto& train = q.split->train.values;
  const auto& est = q.split->est.values;
  const int child = q.target.child;

  const auto p = static_cast<Eigen::Index>(parents.size());
  Eigen::MatrixXd x(train.rows(), p);
  Eigen::MatrixXd est_x(est.rows(), p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const int col = parents[static_cast<std::size_t>(k)];
    const auto s = Standardizer::fit(train.col(col));
    x.col(k) = (train.col(col).array() - s.center) / s.scale;
    est_x.col(k) = (est.col(col).array() - s.center) / s.scale;
  }
  const auto sy = Standardizer::fit(train.col(child));
  const Eigen::VectorXd y = (train.col(child).array() - sy.center) / sy.scale;
  const Eigen::VectorXd est_y = (est.col(child).array() - sy.center) / sy.scale;

  GaussianMlp net(static_cast<int>(p), hp.hidden_width, rng);
  AdamMoments m_w_in, m_b_in, m_w_mean, m_w_logvar, m_b_mean, m_b_logvar;
  const double n = static_cast<double>(x.rows());

  for (int t = 1; t <= hp.steps; ++t) {
    const Eigen::MatrixXd h = net.hidden(x);
    const Eigen::ArrayXd mean = (h * net.w_mean).array() + net.b_mean;
    const Eigen::ArrayXd logvar = (h * net.w_logvar).array() + net.b_logvar;
    const Eigen::ArrayXd r = y.array() - mean;
    const Eigen::ArrayXd inv_var = (-logvar).exp();
    const double loss = 0.5 * (std::log(2.0 * std::numbers::pi) + logvar + r.square() * inv_var).mean();
    if (!std::isfinite(loss)) {
      throw EstimatorError("MLP training diverged at step " + std::to_string(t) + " for child " +
                           std::to_string(child));
    }

    const Eigen::VectorXd g_mean = (-(r * inv_var) / n).matrix();
    const Eigen::VectorXd g_logvar = (0.5 * (1.0 - r.square() * inv_var) / n).matrix();
    const Eigen::VectorXd d_w_mean = h.transpose() * g_mean;
    const Eigen::VectorXd d_w_logvar = h.transpose() * g_logvar;
    const Eigen::Matrix<double, 1, 1> d_b_mean = Eigen::Matrix<double, 1, 1>::Constant(g_mean.sum());
    const Eigen::Matrix<double, 1, 1> d_b_logvar = Eigen::Matrix<double, 1, 1>::Constant(g_logvar.sum());
    Eigen::MatrixXd g_hidden = g_mean * net.w_mean.transpose() + g_logvar * net.w_logvar.transpose();
    g_hidden.array() *= 1.0 - h.array().square();
    const Eigen::MatrixXd d_w_in = g_hidden.transpose() * x;
    const Eigen::VectorXd d_b_in = g_hidden.colwise().sum().transpose();

    adam_step(net.w_in, d_w_in, m_w_in, hp.step_size, t);
    adam_step(net.b_in, d_b_in, m_b_in, hp.step_size, t);
    adam_step(net.w_mean, d_w_mean, m_w_mean, hp.step_size, t);
    adam_step(net.w_logvar, d_w_logvar, m_w_logvar, hp.step_size, t);
    Eigen::Matrix<double, 1, 1> b_mean = Eigen::Matrix<double, 1, 1>::Constant(net.b_mean);
    Eigen::Matrix<double, 1, 1> b_logvar = Eigen::Matrix<double, 1, 1>::Constant(net.b_logvar);
    adam_step(b_mean, d_b_mean, m_b_mean, hp.step_size, t);
    adam_step(b_logvar, d_b_logvar, m_b_logvar, hp.step_size, t);
    net.b_mean = b_mean(0);
    net.b_logvar = b_logvar(0);
  }

  Eigen::VectorXd rows = net.log_density(est_x, est_y);
  rows.array() -= std::log(sy.scale);
  LikelihoodResult result;
  result.total_logpred = rows.sum();
  if (!std::isfinite(result.total_logpred)) {
    throw EstimatorError("MLP produced a non-finite likelihood for child " + std::to_string(child));
  }
  if (per_row) result.per_row.assign(rows.data(), rows.data() + rows.size());
  return result;
}

}  // namespace acd
