#ifndef ACD_EVAL_HPP_
#define ACD_EVAL_HPP_

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "acd/dataset.hpp"
#include "acd/estimators.hpp"
#include "acd/graph.hpp"
#include "acd/ppo.hpp"
#include "acd/scm.hpp"
#include "acd/scorer.hpp"

namespace acd {

// ---------------------------------------------------------------------------
// Estimator quality

struct StudyConfig {
  int n_per_replicate = 500;
  int n_replicates = 30;
  int n_heldout = 10000;
  std::uint64_t seed = 0;
  int jobs = 1;
  /// Edge penalty for the incorrect-structure count (estimator field unused).
  ScoreConfig score;
  std::vector<EstimatorConfig> estimators;
  bool count_incorrect = true;
};

/// Mean held-out NLL of one (variable, parent set) cell on one replicate.
struct CellResult {
  int replicate = 0;
  ParentSet target;
  double nll = 0.0;  // NaN when the fit failed
  std::string error;
};

struct CellSummary {
  ParentSet target;
  double bootstrap_variance = 0.0;
  double mean_nll = 0.0;
  int n_ok = 0;
};

struct BootstrapReport {
  std::string estimator;
  int d = 0;
  int n_per_replicate = 0;
  int n_replicates = 0;
  int n_heldout = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;

  std::vector<CellResult> raw;
  std::vector<CellSummary> cells;
  double mean_bv = 0.0;
  double median_bv = 0.0;
  double mean_nll = 0.0;
  /// NaN for replicates whose count was skipped.
  std::vector<double> incorrect_per_replicate;
  double mean_incorrect = 0.0;
  int failed_cells = 0;
  std::int64_t estimator_fits = 0;
  std::vector<std::string> warnings;

  nlohmann::json aggregates_json() const;
  std::string cells_csv() const;
};

/// Aggregates per-replicate cell NLLs: sample variance across replicates per
/// cell (0 when only one replicate), then mean and median over cells.
void summarize_cells(BootstrapReport& report);

/// Runs the protocol on supplied data: each replicate is a training set,
/// `heldout` is the shared estimation set.
std::vector<BootstrapReport> bootstrap_variance_from_data(const std::vector<Dataset>& replicates,
                                                          const Dataset& heldout,
                                                          const DirectedGraph& truth,
                                                          const StudyConfig& cfg);

/// Samples a held-out set and `n_replicates` training sets from the SCM, then
/// runs bootstrap_variance_from_data. Requires d within the enumeration limit.
std::vector<BootstrapReport> bootstrap_variance_study(const ScmSpec& scm, const StudyConfig& cfg);

/// Number of scored graphs strictly better than the best-scoring member of
/// the truth's Markov equivalence class.
int count_better_than_truth(std::span<const ScoredGraph> scores, const DirectedGraph& truth);

int incorrect_structure_count(Scorer& scorer, const DirectedGraph& truth);

// ---------------------------------------------------------------------------
// Structure recovery

struct BenchmarkTask {
  std::string name;
  Dataset data;
  DirectedGraph truth;
};

struct TaskOutcome {
  std::string name;
  DirectedGraph truth;
  DirectedGraph estimate;
  int shd = 0;
  double lambda = 0.0;
  bool failed = false;
  std::string error;
};

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Percentile bootstrap interval of the mean, widened if needed so that it
/// contains the sample mean.
Interval bootstrap_mean_ci(std::span<const double> values, int resamples, double level, Rng& rng);

struct BenchmarkConfig {
  ScoreConfig score;
  PpoConfig ppo;
  std::uint64_t seed = 0;
  int jobs = 1;
  int bootstrap_resamples = 10000;
  double ci_level = 0.95;
};

struct BenchmarkReport {
  std::vector<TaskOutcome> outcomes;
  double mean_shd = 0.0;
  Interval ci;
  int excluded = 0;
  nlohmann::json metadata;

  nlohmann::json aggregates_json() const;
  std::string tasks_csv() const;
};

/// Recomputes mean and CI from the per-task outcomes (failed ones excluded).
void summarize_benchmark(BenchmarkReport& report, int resamples, double level, Rng& rng);

/// One task: split, optimize, take the modal graph, compare CPDAGs.
TaskOutcome run_discovery_task(const BenchmarkTask& task, const BenchmarkConfig& cfg, std::uint64_t task_seed);

BenchmarkReport benchmark_shd(const std::vector<BenchmarkTask>& tasks, const BenchmarkConfig& cfg);

}  // namespace acd

#endif  // ACD_EVAL_HPP_
