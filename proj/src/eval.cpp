#include "acd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "acd/parallel.hpp"

namespace acd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<ParentSet> all_cells(int d) {
  std::vector<ParentSet> cells;
  for (int child = 0; child < d; ++child) {
    for (NodeMask mask = 0; mask < (NodeMask{1} << d); ++mask) {
      if ((mask >> child) & 1U) continue;
      cells.push_back(ParentSet{child, mask});
    }
  }
  return cells;
}

std::string parents_text(NodeMask mask) {
  std::string out;
  for (int i = 0; i < kMaxNodes; ++i) {
    if (!((mask >> i) & 1U)) continue;
    if (!out.empty()) out += ' ';
    out += std::to_string(i);
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

double json_number(double x) { return x; }

nlohmann::json number_or_null(double x) {
  if (std::isfinite(x)) return json_number(x);
  return nullptr;
}

}  // namespace

void summarize_cells(BootstrapReport& report) {
  report.cells.clear();
  std::vector<ParentSet> order;
  for (const auto& r : report.raw) {
    const bool seen = std::any_of(order.begin(), order.end(), [&](const ParentSet& p) {
      return p.child == r.target.child && p.parents == r.target.parents;
    });
    if (!seen) order.push_back(r.target);
  }
  std::vector<double> variances;
  std::vector<double> means;
  for (const auto& target : order) {
    std::vector<double> values;
    for (const auto& r : report.raw) {
      if (r.target.child == target.child && r.target.parents == target.parents && std::isfinite(r.nll)) {
        values.push_back(r.nll);
      }
    }
    CellSummary s;
    s.target = target;
    s.n_ok = static_cast<int>(values.size());
    s.mean_nll = mean_of(values);
    if (values.size() >= 2) {
      // Deviations are taken about the first value so identical replicates
      // give exactly zero.
      const double shift = values.front();
      double centre = 0.0;
      for (double v : values) centre += v - shift;
      centre /= static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += ((v - shift) - centre) * ((v - shift) - centre);
      s.bootstrap_variance = ss / static_cast<double>(values.size() - 1);
    } else {
      s.bootstrap_variance = values.empty() ? kNaN : 0.0;
    }
    if (std::isfinite(s.bootstrap_variance)) variances.push_back(s.bootstrap_variance);
    if (std::isfinite(s.mean_nll)) means.push_back(s.mean_nll);
    report.cells.push_back(s);
  }
  report.mean_bv = mean_of(variances);
  report.median_bv = median_of(variances);
  report.mean_nll = mean_of(means);
}

int count_better_than_truth(std::span<const ScoredGraph> scores, const DirectedGraph& truth) {
  const Cpdag truth_class = dag_to_cpdag(truth);
  double best_truth = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (const auto& s : scores) {
    if (s.graph.size() != truth.size()) throw GraphError("scored graph size does not match the truth");
    if (dag_to_cpdag(s.graph) == truth_class) {
      best_truth = std::max(best_truth, s.score);
      found = true;
    }
  }
  if (!found) throw GraphError("no member of the true equivalence class among the scored graphs");
  int count = 0;
  for (const auto& s : scores) {
    if (s.score > best_truth) ++count;
  }
  return count;
}

int incorrect_structure_count(Scorer& scorer, const DirectedGraph& truth) {
  const auto scores = scorer.score_all_dags();
  return count_better_than_truth(scores, truth);
}

std::vector<BootstrapReport> bootstrap_variance_from_data(const std::vector<Dataset>& replicates,
                                                          const Dataset& heldout,
                                                          const DirectedGraph& truth,
                                                          const StudyConfig& cfg) {
  if (replicates.empty()) throw std::invalid_argument("bootstrap study needs at least one replicate");
  if (cfg.estimators.empty()) throw std::invalid_argument("bootstrap study needs at least one estimator");
  const int d = heldout.cols();
  if (d > kDefaultEnumerationLimit) {
    throw std::invalid_argument("bootstrap study enumerates all DAGs and supports d <= " +
                                std::to_string(kDefaultEnumerationLimit) + ", got d=" + std::to_string(d));
  }
  if (truth.size() != d) throw std::invalid_argument("true graph size does not match the data");
  for (const auto& r : replicates) {
    if (r.cols() != d) throw std::invalid_argument("replicate column count does not match the held-out set");
  }

  const auto cells = all_cells(d);
  std::vector<BootstrapReport> reports;
  for (const auto& est_cfg : cfg.estimators) {
    std::shared_ptr<const Estimator> estimator = make_estimator(est_cfg);
    BootstrapReport report;
    report.estimator = to_string(est_cfg.kind);
    report.d = d;
    report.n_per_replicate = replicates.front().rows();
    report.n_replicates = static_cast<int>(replicates.size());
    report.n_heldout = heldout.rows();
    report.seed = cfg.seed;
    report.lambda = cfg.score.resolve_lambda(heldout.rows());
    if (replicates.size() == 1) {
      report.warnings.push_back("only one replicate: bootstrap variance is reported as 0");
    }

    for (std::size_t r = 0; r < replicates.size(); ++r) {
      auto split = std::make_shared<DataSplit>();
      split->train = replicates[r];
      split->est = heldout;
      ScoreConfig score_cfg = cfg.score;
      score_cfg.estimator = est_cfg;
      Scorer scorer(split, score_cfg, estimator, nullptr, cfg.jobs);

      std::vector<CellResult> results(cells.size());
      parallel_for(cells.size(), cfg.jobs, [&](std::size_t k) {
        CellResult& out = results[k];
        out.replicate = static_cast<int>(r);
        out.target = cells[k];
        try {
          const auto res = estimator->estimate(LikelihoodQuery{split.get(), cells[k]});
          if (!std::isfinite(res.total_logpred)) throw EstimatorError("non-finite log likelihood");
          scorer.cache().insert(cells[k], res.total_logpred);
          out.nll = -res.total_logpred / static_cast<double>(heldout.rows());
        } catch (const std::exception& e) {
          out.nll = kNaN;
          out.error = e.what();
        }
      });
      scorer.cache().record_misses(static_cast<std::int64_t>(cells.size()));
      report.estimator_fits += static_cast<std::int64_t>(cells.size());

      int failed = 0;
      for (auto& res : results) {
        if (!res.error.empty()) ++failed;
        report.raw.push_back(std::move(res));
      }
      report.failed_cells += failed;

      double incorrect = kNaN;
      if (cfg.count_incorrect && failed == 0) incorrect = incorrect_structure_count(scorer, truth);
      report.incorrect_per_replicate.push_back(incorrect);
      if (scorer.cache().misses() != static_cast<std::int64_t>(cells.size())) {
        throw std::logic_error("enumeration scoring refitted cached cells");
      }
    }
    if (report.failed_cells > 0) {
      report.warnings.push_back(std::to_string(report.failed_cells) + " cell fits failed and were excluded");
    }
    summarize_cells(report);
    std::vector<double> counted;
    for (double c : report.incorrect_per_replicate) {
      if (std::isfinite(c)) counted.push_back(c);
    }
    report.mean_incorrect = mean_of(counted);
    reports.push_back(std::move(report));
  }
  return reports;
}

std::vector<BootstrapReport> bootstrap_variance_study(const ScmSpec& scm, const StudyConfig& cfg) {
  validate(scm);
  if (scm.size() > kDefaultEnumerationLimit) {
    throw std::invalid_argument("bootstrap study supports d <= " + std::to_string(kDefaultEnumerationLimit) +
                                ", got d=" + std::to_string(scm.size()));
  }
  if (cfg.n_replicates < 1) throw std::invalid_argument("need at least one replicate");
  if (cfg.n_per_replicate < 2 || cfg.n_heldout < 1) throw std::invalid_argument("sample sizes too small");

  Rng heldout_rng(derive_seed(cfg.seed, {0x68656c64ULL}));
  const Dataset heldout = generate_dataset(scm, cfg.n_heldout, heldout_rng);
  std::vector<Dataset> replicates;
  for (int r = 0; r < cfg.n_replicates; ++r) {
    Rng rng(derive_seed(cfg.seed, {0x72657073ULL, static_cast<std::uint64_t>(r)}));
    replicates.push_back(generate_dataset(scm, cfg.n_per_replicate, rng));
  }
  return bootstrap_variance_from_data(replicates, heldout, scm.graph, cfg);
}

nlohmann::json BootstrapReport::aggregates_json() const {
  nlohmann::ordered_json j;
  j["estimator"] = estimator;
  j["d"] = d;
  j["n_per_replicate"] = n_per_replicate;
  j["n_replicates"] = n_replicates;
  j["n_heldout"] = n_heldout;
  j["seed"] = seed;
  j["lambda"] = lambda;
  j["mean_bootstrap_variance"] = number_or_null(mean_bv);
  j["median_bootstrap_variance"] = number_or_null(median_bv);
  j["mean_heldout_nll"] = number_or_null(mean_nll);
  j["mean_incorrect_structures"] = number_or_null(mean_incorrect);
  nlohmann::json counts = nlohmann::json::array();
  for (double c : incorrect_per_replicate) counts.push_back(number_or_null(c));
  j["incorrect_per_replicate"] = counts;
  j["failed_cells"] = failed_cells;
  j["estimator_fits"] = estimator_fits;
  j["warnings"] = warnings;
  return nlohmann::json::parse(j.dump());
}

std::string BootstrapReport::cells_csv() const {
  std::ostringstream out;
  out << "child,parents,bootstrap_variance,mean_nll,n_ok\n";
  for (const auto& c : cells) {
    out << c.target.child << ",\"" << parents_text(c.target.parents) << "\"," << format_double(c.bootstrap_variance)
        << ',' << format_double(c.mean_nll) << ',' << c.n_ok << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

Interval bootstrap_mean_ci(std::span<const double> values, int resamples, double level, Rng& rng) {
  if (values.empty()) return {kNaN, kNaN};
  if (resamples < 1) throw std::invalid_argument("bootstrap needs at least one resample");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) total += values[pick(rng)];
    m = total / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  const double tail = 0.5 * (1.0 - level);
  Interval ci{quantile(tail), quantile(1.0 - tail)};
  ci.low = std::min(ci.low, mean);
  ci.high = std::max(ci.high, mean);
  return ci;
}

void summarize_benchmark(BenchmarkReport& report, int resamples, double level, Rng& rng) {
  std::vector<double> shds;
  report.excluded = 0;
  for (const auto& o : report.outcomes) {
    if (o.failed) {
      ++report.excluded;
      continue;
    }
    shds.push_back(static_cast<double>(o.shd));
  }
  report.mean_shd = mean_of(shds);
  report.ci = bootstrap_mean_ci(shds, resamples, level, rng);
}

TaskOutcome run_discovery_task(const BenchmarkTask& task, const BenchmarkConfig& cfg, std::uint64_t task_seed) {
  TaskOutcome out;
  out.name = task.name;
  out.truth = task.truth;
  try {
    if (task.truth.size() != task.data.cols()) throw std::invalid_argument("true graph size does not match the data");
    Rng split_rng(derive_seed(task_seed, {0x73706c74ULL}));
    auto split = std::make_shared<DataSplit>(split_dataset(task.data, cfg.score.split_fraction, split_rng));
    Scorer scorer(split, cfg.score, cfg.jobs);
    out.lambda = scorer.lambda();
    PpoConfig ppo = cfg.ppo;
    ppo.seed = derive_seed(task_seed, {0x70706fULL});
    const auto result = optimize(scorer, ppo);
    out.estimate = map_graph(result.params);
    out.shd = shd_cpdag(dag_to_cpdag(out.estimate), dag_to_cpdag(task.truth));
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
    out.estimate = DirectedGraph(task.truth.size());
  }
  return out;
}

BenchmarkReport benchmark_shd(const std::vector<BenchmarkTask>& tasks, const BenchmarkConfig& cfg) {
  cfg.ppo.validate();
  BenchmarkReport report;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    report.outcomes.push_back(run_discovery_task(tasks[t], cfg, derive_seed(cfg.seed, {static_cast<std::uint64_t>(t)})));
  }
  Rng ci_rng(derive_seed(cfg.seed, {0x63695f72ULL}));
  summarize_benchmark(report, cfg.bootstrap_resamples, cfg.ci_level, ci_rng);
  report.metadata = {{"seed", cfg.seed},
                     {"estimator", to_string(cfg.score.estimator.kind)},
                     {"iterations", cfg.ppo.iterations},
                     {"samples_per_iter", cfg.ppo.samples_per_iter},
                     {"split_fraction", cfg.score.split_fraction},
                     {"bootstrap_resamples", cfg.bootstrap_resamples}};
  return report;
}

nlohmann::json BenchmarkReport::aggregates_json() const {
  nlohmann::json j = metadata;
  j["tasks"] = outcomes.size();
  j["excluded"] = excluded;
  j["mean_shd"] = number_or_null(mean_shd);
  j["ci_low"] = number_or_null(ci.low);
  j["ci_high"] = number_or_null(ci.high);
  return j;
}

std::string BenchmarkReport::tasks_csv() const {
  std::ostringstream out;
  out << "task,shd,n_edges_true,n_edges_est,lambda,estimate,status\n";
  for (const auto& o : outcomes) {
    out << o.name << ',' << (o.failed ? std::string() : std::to_string(o.shd)) << ',' << o.truth.edge_count() << ','
        << o.estimate.edge_count() << ',' << format_double(o.lambda) << ",\"" << compact_edges(o.estimate) << "\","
        << (o.failed ? "failed: " + o.error : std::string("ok")) << '\n';
  }
  return out.str();
}

}  // namespace acd
