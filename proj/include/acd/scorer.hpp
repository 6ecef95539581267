#ifndef ACD_SCORER_HPP_
#define ACD_SCORER_HPP_

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "acd/dataset.hpp"
#include "acd/estimators.hpp"
#include "acd/graph.hpp"

namespace acd {

struct ScoreConfig {
  /// Edge penalty. Unset means 0.5 * log(n_est), the BIC cost of one
  /// coefficient on the estimation set.
  std::optional<double> lambda;
  double split_fraction = 0.8;
  EstimatorConfig estimator;

  double resolve_lambda(int n_est) const;
};

/// Concurrent memo from (child, parent mask) to total log predictive
/// likelihood. Bound to one (split, estimator) fingerprint at a time; binding
/// a different fingerprint empties it.
class ScoreCache {
 public:
  static std::uint64_t key(const ParentSet& ps) {
    return (static_cast<std::uint64_t>(ps.child) << 32U) | ps.parents;
  }

  void bind(const std::string& fingerprint);
  const std::string& fingerprint() const { return fingerprint_; }

  std::optional<double> find(const ParentSet& ps) const;
  /// Insert-if-absent; returns the stored value.
  double insert(const ParentSet& ps, double value);
  void clear();
  std::size_t size() const;

  void record_hits(std::int64_t n) { hits_ += n; }
  void record_misses(std::int64_t n) { misses_ += n; }
  std::int64_t hits() const { return hits_; }
  std::int64_t misses() const { return misses_; }

  /// All entries sorted by key.
  std::vector<std::pair<ParentSet, double>> entries() const;

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::uint64_t, double> values_;
  std::string fingerprint_;
  std::atomic<std::int64_t> hits_{0};
  std::atomic<std::int64_t> misses_{0};
};

struct ScoredGraph {
  DirectedGraph graph;
  double loglik_sum = 0.0;
  int n_edges = 0;
  double score = 0.0;
};

/// Penalized likelihood score: sum over variables of log p_i(D_est | D_train,
/// pa_G(i)) minus lambda * |G|.
class Scorer {
 public:
  Scorer(std::shared_ptr<const DataSplit> split, ScoreConfig config,
         std::shared_ptr<const Estimator> estimator, std::shared_ptr<ScoreCache> cache = nullptr,
         int jobs = 1);

  /// Builds the estimator from config.estimator.
  Scorer(std::shared_ptr<const DataSplit> split, ScoreConfig config, int jobs = 1);

  double lambda() const { return lambda_; }
  int dimension() const { return split_->train.cols(); }
  const DataSplit& split() const { return *split_; }
  const ScoreConfig& config() const { return config_; }
  const Estimator& estimator() const { return *estimator_; }
  ScoreCache& cache() { return *cache_; }
  const ScoreCache& cache() const { return *cache_; }

  /// Number of estimator fits performed through this scorer's cache.
  std::int64_t estimator_calls() const { return cache_->misses(); }

  double variable_loglik(const ParentSet& target);

  /// Ensures every target is cached, fitting missing ones in parallel.
  /// Each distinct uncached key is fitted once and counted as one miss;
  /// every other requested key counts as a hit.
  void prefetch(std::span<const ParentSet> targets);

  double loglik_sum(const DirectedGraph& g);
  double graph_score(const DirectedGraph& g);
  ScoredGraph score_graph(const DirectedGraph& g);

  /// Scores a batch with deduplicated, parallel estimator calls.
  std::vector<ScoredGraph> score_graphs(std::span<const DirectedGraph> graphs);

  /// Every DAG on the scorer's d nodes (d within the enumeration limit), in
  /// enumeration order. Needs at most d * 2^(d-1) estimator fits.
  std::vector<ScoredGraph> score_all_dags(int max_d = kDefaultEnumerationLimit);

 private:
  double compute(const ParentSet& target) const;
  void check_graph(const DirectedGraph& g) const;

  std::shared_ptr<const DataSplit> split_;
  ScoreConfig config_;
  std::shared_ptr<const Estimator> estimator_;
  std::shared_ptr<ScoreCache> cache_;
  int jobs_;
  double lambda_;
};

/// Fingerprint of a split's contents plus the estimator description.
std::string score_fingerprint(const DataSplit& split, const Estimator& estimator);

/// CSV with columns graph, loglik_sum, n_edges, penalized_score.
void write_score_dump(const std::string& path, std::span<const ScoredGraph> scores);
std::string format_score_dump(std::span<const ScoredGraph> scores);

}  // namespace acd

#endif  // ACD_SCORER_HPP_
