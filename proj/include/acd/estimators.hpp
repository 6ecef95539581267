#ifndef ACD_ESTIMATORS_HPP_
#define ACD_ESTIMATORS_HPP_

#include <Eigen/Dense>

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "acd/dataset.hpp"
#include "acd/graph.hpp"
#include "acd/random.hpp"

namespace acd {

class EstimatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Normal-inverse-gamma prior on (coefficients, noise variance):
/// beta | s2 ~ N(mean, s2 / precision * I), s2 ~ InvGamma(shape, rate).
struct NigPrior {
  double mean = 0.0;
  double precision = 1.0;
  double shape = 2.0;
  double rate = 1.0;

  void validate() const;
};

struct MlpHyperparams {
  int hidden_width = 64;
  int steps = 500;
  double step_size = 1e-2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LikelihoodQuery {
  const DataSplit* split = nullptr;
  ParentSet target;

  /// Throws EstimatorError on bad indices or a child listed among its parents.
  void validate() const;
};

struct LikelihoodResult {
  double total_logpred = 0.0;
  std::vector<double> per_row;  // filled only when requested
};

/// Affine map x -> (x - center) / scale fitted on training rows.
struct Standardizer {
  double center = 0.0;
  double scale = 1.0;

  static Standardizer fit(const Eigen::Ref<const Eigen::VectorXd>& column);
  double apply(double x) const { return (x - center) / scale; }
};

/// Bayesian linear regression of y on [1, X] under a NIG prior. Returns the
/// Student-t posterior-predictive log density for each test row. Inputs are
/// used as given (no standardization).
Eigen::VectorXd nig_log_predictive(const Eigen::MatrixXd& train_x, const Eigen::VectorXd& train_y,
                                   const Eigen::MatrixXd& test_x, const Eigen::VectorXd& test_y,
                                   const NigPrior& prior);

/// Posterior-predictive log likelihood of the estimation rows, with columns
/// standardized by training statistics and the child's Jacobian included so
/// the result is a density on the original scale.
LikelihoodResult estimate_conjugate_gaussian(const LikelihoodQuery& q, const NigPrior& prior,
                                             bool per_row = false);

/// Gaussian MLP baseline: one tanh hidden layer predicting mean and
/// log-variance, fit by full-batch Adam on the training NLL.
LikelihoodResult estimate_mlp(const LikelihoodQuery& q, const MlpHyperparams& hp, Rng& rng,
                              bool per_row = false);

/// Uniform interface over the backends.
class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual LikelihoodResult estimate(const LikelihoodQuery& q, bool per_row = false) const = 0;
  /// Stable text identifying the backend and its hyperparameters.
  virtual std::string describe() const = 0;
};

class ConjugateGaussianEstimator final : public Estimator {
 public:
  explicit ConjugateGaussianEstimator(NigPrior prior = {});
  LikelihoodResult estimate(const LikelihoodQuery& q, bool per_row = false) const override;
  std::string describe() const override;

 private:
  NigPrior prior_;
};

/// Each (child, parent set) fit draws its initialization from a stream
/// derived from the base seed and the query key, so results do not depend
/// on call order.
class MlpEstimator final : public Estimator {
 public:
  explicit MlpEstimator(MlpHyperparams hp = {});
  LikelihoodResult estimate(const LikelihoodQuery& q, bool per_row = false) const override;
  std::string describe() const override;

 private:
  MlpHyperparams hp_;
};

// ---------------------------------------------------------------------------
// Bridge client: newline-delimited JSON to an external in-context regressor.

class BridgeConnectionError : public EstimatorError {
 public:
  using EstimatorError::EstimatorError;
};

class BridgeProtocolError : public EstimatorError {
 public:
  BridgeProtocolError(const std::string& what, std::string payload)
      : EstimatorError(what + ": " + payload), payload_(std::move(payload)) {}
  const std::string& payload() const { return payload_; }

 private:
  std::string payload_;
};

class BridgeRemoteError : public EstimatorError {
 public:
  using EstimatorError::EstimatorError;
};

struct BridgeReply {
  std::int64_t id = 0;
  std::optional<double> total_logpred;
  std::optional<std::string> error;
};

/// One request line (no trailing newline). Rows hold the parent columns in
/// ascending index order followed by the child.
std::string bridge_request_line(std::int64_t id, const LikelihoodQuery& q);

/// Throws BridgeProtocolError for anything that is not a well-formed reply.
BridgeReply parse_bridge_reply(const std::string& line);

class BridgeTransport {
 public:
  virtual ~BridgeTransport() = default;
  virtual void write_line(const std::string& line) = 0;
  /// Next line without the newline; nullopt at end of stream.
  virtual std::optional<std::string> read_line() = 0;
};

/// Endpoint forms: "tcp://HOST:PORT", "HOST:PORT", or "exec:COMMAND" (spawned
/// through /bin/sh, speaking the protocol on its stdin/stdout).
std::unique_ptr<BridgeTransport> connect_bridge(const std::string& endpoint);

/// Connection pool with at most one in-flight request per connection.
class ExternalEstimator final : public Estimator {
 public:
  explicit ExternalEstimator(std::string endpoint, int connections = 1);
  ~ExternalEstimator() override;

  LikelihoodResult estimate(const LikelihoodQuery& q, bool per_row = false) const override;
  std::string describe() const override;

 private:
  std::unique_ptr<BridgeTransport> acquire() const;
  void release(std::unique_ptr<BridgeTransport> t) const;

  std::string endpoint_;
  int max_connections_;
  mutable std::mutex mutex_;
  mutable std::condition_variable available_;
  mutable std::vector<std::unique_ptr<BridgeTransport>> idle_;
  mutable int open_ = 0;
  mutable std::int64_t next_id_ = 1;
};

LikelihoodResult estimate_external(const LikelihoodQuery& q, const std::string& endpoint);

/// Uses `primary`; on a bridge connection failure answers with `fallback`.
class FallbackEstimator final : public Estimator {
 public:
  FallbackEstimator(std::unique_ptr<Estimator> primary, std::unique_ptr<Estimator> fallback);
  LikelihoodResult estimate(const LikelihoodQuery& q, bool per_row = false) const override;
  std::string describe() const override;

 private:
  std::unique_ptr<Estimator> primary_;
  std::unique_ptr<Estimator> fallback_;
};

enum class EstimatorKind { ConjugateGaussian, MlpBaseline, External };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& name);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::ConjugateGaussian;
  NigPrior prior;
  MlpHyperparams mlp;
  std::string endpoint;
  int connections = 1;
  bool fallback_to_conjugate = false;
};

std::unique_ptr<Estimator> make_estimator(const EstimatorConfig& config);

}  // namespace acd

#endif  // ACD_ESTIMATORS_HPP_
