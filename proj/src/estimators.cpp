#include "acd/estimators.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

namespace acd {

void NigPrior::validate() const {
  if (!std::isfinite(mean)) throw EstimatorError("NIG prior mean must be finite");
  if (!(precision > 0.0) || !std::isfinite(precision)) throw EstimatorError("NIG prior precision must be positive");
  if (!(shape > 0.0) || !std::isfinite(shape)) throw EstimatorError("NIG prior shape must be positive");
  if (!(rate > 0.0) || !std::isfinite(rate)) throw EstimatorError("NIG prior rate must be positive");
}

void MlpHyperparams::validate() const {
  if (hidden_width < 1) throw EstimatorError("MLP hidden width must be positive");
  if (steps < 0) throw EstimatorError("MLP step count must be non-negative");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw EstimatorError("MLP step size must be positive");
}

void LikelihoodQuery::validate() const {
  if (split == nullptr) throw EstimatorError("likelihood query without data");
  const int d = split->train.cols();
  if (split->est.cols() != d) throw EstimatorError("train and estimation parts differ in width");
  if (split->train.rows() == 0) throw EstimatorError("empty training part");
  if (target.child < 0 || target.child >= d) {
    throw EstimatorError("child index " + std::to_string(target.child) + " out of range");
  }
  if (d < 32 && (target.parents >> d) != 0) throw EstimatorError("parent index out of range");
  if ((target.parents >> target.child) & 1U) throw EstimatorError("child listed among its parents");
}

Standardizer Standardizer::fit(const Eigen::Ref<const Eigen::VectorXd>& column) {
  Standardizer s;
  const auto n = column.size();
  if (n == 0) return s;
  s.center = column.mean();
  if (n > 1) {
    const double sd = std::sqrt((column.array() - s.center).square().sum() / static_cast<double>(n - 1));
    if (sd > 1e-12 * std::max(1.0, std::abs(s.center))) s.scale = sd;
  }
  return s;
}

ConjugateGaussianEstimator::ConjugateGaussianEstimator(NigPrior prior) : prior_(prior) {
  prior_.validate();
}

LikelihoodResult ConjugateGaussianEstimator::estimate(const LikelihoodQuery& q, bool per_row) const {
  return estimate_conjugate_gaussian(q, prior_, per_row);
}

std::string ConjugateGaussianEstimator::describe() const {
  std::ostringstream out;
  out << "conjugate(mean=" << format_double(prior_.mean) << ",precision=" << format_double(prior_.precision)
      << ",shape=" << format_double(prior_.shape) << ",rate=" << format_double(prior_.rate) << ")";
  return out.str();
}

MlpEstimator::MlpEstimator(MlpHyperparams hp) : hp_(hp) { hp_.validate(); }

LikelihoodResult MlpEstimator::estimate(const LikelihoodQuery& q, bool per_row) const {
  Rng rng(derive_seed(hp_.seed, {static_cast<std::uint64_t>(q.target.child), q.target.parents}));
  return estimate_mlp(q, hp_, rng, per_row);
}

std::string MlpEstimator::describe() const {
  std::ostringstream out;
  out << "mlp(hidden=" << hp_.hidden_width << ",steps=" << hp_.steps
      << ",step_size=" << format_double(hp_.step_size) << ",seed=" << hp_.seed << ")";
  return out.str();
}

FallbackEstimator::FallbackEstimator(std::unique_ptr<Estimator> primary,
                                     std::unique_ptr<Estimator> fallback)
    : primary_(std::move(primary)), fallback_(std::move(fallback)) {}

LikelihoodResult FallbackEstimator::estimate(const LikelihoodQuery& q, bool per_row) const {
  try {
    return primary_->estimate(q, per_row);
  } catch (const BridgeConnectionError& e) {
    std::cerr << "warning: " << e.what() << "; using " << fallback_->describe() << '\n';
    return fallback_->estimate(q, per_row);
  }
}

std::string FallbackEstimator::describe() const {
  return primary_->describe() + "|fallback=" + fallback_->describe();
}

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::ConjugateGaussian: return "conjugate";
    case EstimatorKind::MlpBaseline: return "mlp";
    case EstimatorKind::External: return "external";
  }
  return "unknown";
}

EstimatorKind estimator_kind_from_string(const std::string& name) {
  if (name == "conjugate") return EstimatorKind::ConjugateGaussian;
  if (name == "mlp") return EstimatorKind::MlpBaseline;
  if (name == "external") return EstimatorKind::External;
  throw std::invalid_argument("unknown estimator '" + name + "' (expected conjugate, mlp or external)");
}

std::unique_ptr<Estimator> make_estimator(const EstimatorConfig& config) {
  switch (config.kind) {
    case EstimatorKind::ConjugateGaussian:
      return std::make_unique<ConjugateGaussianEstimator>(config.prior);
    case EstimatorKind::MlpBaseline:
      return std::make_unique<MlpEstimator>(config.mlp);
    case EstimatorKind::External: {
      auto external = std::make_unique<ExternalEstimator>(config.endpoint, config.connections);
      if (!config.fallback_to_conjugate) return external;
      return std::make_unique<FallbackEstimator>(
          std::move(external), std::make_unique<ConjugateGaussianEstimator>(config.prior));
    }
  }
  throw std::invalid_argument("unknown estimator kind");
}

}  // namespace acd
