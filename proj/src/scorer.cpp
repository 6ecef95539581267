#include "acd/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <unordered_set>

#include "acd/parallel.hpp"

namespace acd {

double ScoreConfig::resolve_lambda(int n_est) const {
  if (lambda) {
    if (!(*lambda >= 0.0) || !std::isfinite(*lambda)) {
      throw std::invalid_argument("lambda must be a finite non-negative number");
    }
    return *lambda;
  }
  return 0.5 * std::log(static_cast<double>(std::max(n_est, 1)));
}

void ScoreCache::bind(const std::string& fingerprint) {
  std::unique_lock lock(mutex_);
  if (fingerprint == fingerprint_) return;
  values_.clear();
  fingerprint_ = fingerprint;
}

std::optional<double> ScoreCache::find(const ParentSet& ps) const {
  std::shared_lock lock(mutex_);
  const auto it = values_.find(key(ps));
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

double ScoreCache::insert(const ParentSet& ps, double value) {
  std::unique_lock lock(mutex_);
  return values_.try_emplace(key(ps), value).first->second;
}

void ScoreCache::clear() {
  std::unique_lock lock(mutex_);
  values_.clear();
}

std::size_t ScoreCache::size() const {
  std::shared_lock lock(mutex_);
  return values_.size();
}

std::vector<std::pair<ParentSet, double>> ScoreCache::entries() const {
  std::vector<std::pair<std::uint64_t, double>> raw;
  {
    std::shared_lock lock(mutex_);
    raw.assign(values_.begin(), values_.end());
  }
  std::sort(raw.begin(), raw.end());
  std::vector<std::pair<ParentSet, double>> out;
  out.reserve(raw.size());
  for (const auto& [k, v] : raw) {
    out.push_back({ParentSet{static_cast<int>(k >> 32U), static_cast<NodeMask>(k & 0xffffffffULL)}, v});
  }
  return out;
}

std::string score_fingerprint(const DataSplit& split, const Estimator& estimator) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const Eigen::MatrixXd* m : {&split.train.values, &split.est.values}) {
    const std::int64_t dims[2] = {m->rows(), m->cols()};
    mix(dims, sizeof(dims));
    mix(m->data(), static_cast<std::size_t>(m->size()) * sizeof(double));
  }
  std::ostringstream out;
  out << std::hex << h << '|' << estimator.describe();
  return out.str();
}

Scorer::Scorer(std::shared_ptr<const DataSplit> split, ScoreConfig config,
               std::shared_ptr<const Estimator> estimator, std::shared_ptr<ScoreCache> cache, int jobs)
    : split_(std::move(split)),
      config_(std::move(config)),
      estimator_(std::move(estimator)),
      cache_(cache ? std::move(cache) : std::make_shared<ScoreCache>()),
      jobs_(jobs) {
  if (!split_ || !estimator_) throw std::invalid_argument("scorer needs a split and an estimator");
  if (split_->train.cols() != split_->est.cols()) {
    throw std::invalid_argument("train and estimation parts differ in width");
  }
  if (split_->train.cols() > kMaxNodes) throw std::invalid_argument("too many variables");
  lambda_ = config_.resolve_lambda(split_->est.rows());
  cache_->bind(score_fingerprint(*split_, *estimator_));
}

Scorer::Scorer(std::shared_ptr<const DataSplit> split, ScoreConfig config, int jobs)
    : Scorer(split, config, std::shared_ptr<const Estimator>(make_estimator(config.estimator)), nullptr,
             jobs) {}

double Scorer::compute(const ParentSet& target) const {
  LikelihoodQuery q{split_.get(), target};
  auto context = [&] {
    std::ostringstream msg;
    msg << "estimator failed for child " << target.child << " with parents {";
    const auto parents = target.parent_list();
    for (std::size_t k = 0; k < parents.size(); ++k) msg << (k ? "," : "") << parents[k];
    msg << "}: ";
    return msg.str();
  };
  // Bridge failures keep their type so callers can tell them apart.
  try {
    return estimator_->estimate(q).total_logpred;
  } catch (const BridgeConnectionError& e) {
    throw BridgeConnectionError(context() + e.what());
  } catch (const BridgeRemoteError& e) {
    throw BridgeRemoteError(context() + e.what());
  } catch (const BridgeProtocolError& e) {
    throw BridgeProtocolError(context() + "malformed bridge reply", e.payload());
  } catch (const std::exception& e) {
    throw EstimatorError(context() + e.what());
  }
}

double Scorer::variable_loglik(const ParentSet& target) {
  if (target.child < 0 || target.child >= dimension()) {
    throw std::invalid_argument("child index out of range");
  }
  if (auto v = cache_->find(target)) {
    cache_->record_hits(1);
    return *v;
  }
  cache_->record_misses(1);
  return cache_->insert(target, compute(target));
}

void Scorer::prefetch(std::span<const ParentSet> targets) {
  std::vector<ParentSet> missing;
  std::unordered_set<std::uint64_t> scheduled;
  std::int64_t hits = 0;
  for (const auto& t : targets) {
    if (t.child < 0 || t.child >= dimension()) throw std::invalid_argument("child index out of range");
    if (scheduled.contains(ScoreCache::key(t)) || cache_->find(t)) {
      ++hits;
      continue;
    }
    scheduled.insert(ScoreCache::key(t));
    missing.push_back(t);
  }
  cache_->record_hits(hits);
  cache_->record_misses(static_cast<std::int64_t>(missing.size()));
  parallel_for(static_cast<int>(missing.size()), jobs_, [&](int i) {
    const auto& t = missing[static_cast<std::size_t>(i)];
    cache_->insert(t, compute(t));
  });
}

void Scorer::check_graph(const DirectedGraph& g) const {
  if (g.size() != dimension()) {
    throw std::invalid_argument("graph has " + std::to_string(g.size()) + " nodes but data has " +
                                std::to_string(dimension()) + " variables");
  }
  if (!is_acyclic(g)) throw GraphError("cannot score a cyclic graph");
}

double Scorer::loglik_sum(const DirectedGraph& g) {
  check_graph(g);
  double total = 0.0;
  for (int i = 0; i < g.size(); ++i) total += variable_loglik(ParentSet{i, g.parents(i)});
  return total;
}

double Scorer::graph_score(const DirectedGraph& g) { return score_graph(g).score; }

ScoredGraph Scorer::score_graph(const DirectedGraph& g) {
  const double ll = loglik_sum(g);
  const int edges = g.edge_count();
  return ScoredGraph{g, ll, edges, ll - lambda_ * edges};
}

std::vector<ScoredGraph> Scorer::score_graphs(std::span<const DirectedGraph> graphs) {
  std::vector<ParentSet> targets;
  for (const auto& g : graphs) {
    check_graph(g);
    for (int i = 0; i < g.size(); ++i) targets.push_back(ParentSet{i, g.parents(i)});
  }
  prefetch(targets);
  std::vector<ScoredGraph> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) {
    double ll = 0.0;
    for (int i = 0; i < g.size(); ++i) ll += *cache_->find(ParentSet{i, g.parents(i)});
    const int edges = g.edge_count();
    out.push_back(ScoredGraph{g, ll, edges, ll - lambda_ * edges});
  }
  return out;
}

std::vector<ScoredGraph> Scorer::score_all_dags(int max_d) {
  const int d = dimension();
  const auto dags = enumerate_all_dags(d, max_d);
  std::vector<ParentSet> targets;
  for (int child = 0; child < d; ++child) {
    const NodeMask others = ((NodeMask{1} << d) - 1U) & ~(NodeMask{1} << child);
    for (NodeMask s = others;; s = (s - 1) & others) {
      targets.push_back(ParentSet{child, s});
      if (s == 0) break;
    }
  }
  prefetch(targets);
  std::vector<ScoredGraph> out;
  out.reserve(dags.size());
  std::vector<double> table(static_cast<std::size_t>(d) << static_cast<unsigned>(d), 0.0);
  for (const auto& [ps, v] : cache_->entries()) {
    table[(static_cast<std::size_t>(ps.child) << static_cast<unsigned>(d)) | ps.parents] = v;
  }
  for (const auto& g : dags) {
    double ll = 0.0;
    for (int i = 0; i < d; ++i) ll += table[(static_cast<std::size_t>(i) << static_cast<unsigned>(d)) | g.parents(i)];
    const int edges = g.edge_count();
    out.push_back(ScoredGraph{g, ll, edges, ll - lambda_ * edges});
  }
  return out;
}

std::string format_score_dump(std::span<const ScoredGraph> scores) {
  std::string out = "graph,loglik_sum,n_edges,penalized_score\n";
  for (const auto& s : scores) {
    out += '"' + compact_edges(s.graph) + "\"," + format_double(s.loglik_sum) + ',' +
           std::to_string(s.n_edges) + ',' + format_double(s.score) + '\n';
  }
  return out;
}

void write_score_dump(const std::string& path, std::span<const ScoredGraph> scores) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << format_score_dump(scores);
}

}  // namespace acd
