#include "acd/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include "acd/dataset.hpp"

namespace acd {

void PpoConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (samples_per_iter < 1) throw std::invalid_argument("samples per iteration must be at least 1");
  if (!(clip_epsilon >= 0.0)) throw std::invalid_argument("clip epsilon must be non-negative");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (update_epochs < 1) throw std::invalid_argument("update epochs must be at least 1");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) {
    throw std::invalid_argument("baseline decay must lie in [0, 1)");
  }
  if (!(entropy_coef >= 0.0)) throw std::invalid_argument("entropy coefficient must be non-negative");
  if (!(final_temperature > 0.0)) throw std::invalid_argument("final temperature must be positive");
}

TrajectoryBuffer::TrajectoryBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("trajectory buffer needs positive capacity");
  entries_.reserve(static_cast<std::size_t>(capacity));
}

void TrajectoryBuffer::push(TrajectoryEntry entry) {
  if (full()) throw std::logic_error("trajectory buffer is full");
  entries_.push_back(std::move(entry));
}

double TrajectoryBuffer::mean_reward() const {
  if (entries_.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : entries_) total += e.reward;
  return total / static_cast<double>(entries_.size());
}

BaselineState BaselineState::starting_at(double b0) {
  BaselineState b;
  b.value = b0;
  b.initialized = true;
  return b;
}

void BaselineState::update(double mean_reward, double decay) {
  if (!initialized) {
    value = mean_reward;
    initialized = true;
    return;
  }
  value = decay * value + (1.0 - decay) * mean_reward;
}

double advantage(double reward, const BaselineState& baseline) { return reward - baseline.value; }

double clipped_objective(double logp_new, double logp_old, double adv, double eps) {
  const double ratio = std::exp(logp_new - logp_old);
  return std::min(ratio * adv, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv);
}

namespace {

double shaped_reward(const TrajectoryEntry& e, const PpoConfig& cfg) {
  return e.reward - cfg.entropy_coef * e.logp_old;
}

void adam_ascent(PolicyParams& params, const PolicyGradient& g, AdaptiveState& s, double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  if (s.steps == 0) {
    s.first = {Eigen::VectorXd::Zero(params.size()), Eigen::MatrixXd::Zero(params.size(), params.size())};
    s.second = s.first;
  }
  ++s.steps;
  const double c1 = 1.0 - std::pow(kBeta1, s.steps);
  const double c2 = 1.0 - std::pow(kBeta2, s.steps);
  s.first.d_node_scores = kBeta1 * s.first.d_node_scores + (1.0 - kBeta1) * g.d_node_scores;
  s.first.d_edge_logits = kBeta1 * s.first.d_edge_logits + (1.0 - kBeta1) * g.d_edge_logits;
  s.second.d_node_scores = kBeta2 * s.second.d_node_scores + (1.0 - kBeta2) * g.d_node_scores.cwiseAbs2();
  s.second.d_edge_logits = kBeta2 * s.second.d_edge_logits + (1.0 - kBeta2) * g.d_edge_logits.cwiseAbs2();
  params.node_scores.array() +=
      lr * (s.first.d_node_scores.array() / c1) / ((s.second.d_node_scores.array() / c2).sqrt() + kEps);
  params.edge_logits.array() +=
      lr * (s.first.d_edge_logits.array() / c1) / ((s.second.d_edge_logits.array() / c2).sqrt() + kEps);
}

}  // namespace

void initialize_baseline(const TrajectoryBuffer& buffer, const PpoConfig& cfg, BaselineState& baseline) {
  const auto& entries = buffer.entries();
  if (entries.empty()) throw PpoError("cannot initialize the baseline from an empty buffer");
  double mean = 0.0;
  for (const auto& e : entries) mean += shaped_reward(e, cfg);
  mean /= static_cast<double>(entries.size());
  double var = 0.0;
  for (const auto& e : entries) var += (shaped_reward(e, cfg) - mean) * (shaped_reward(e, cfg) - mean);
  var /= static_cast<double>(entries.size());
  baseline.value = mean;
  baseline.variance = std::max(var, 1e-12);
  baseline.initialized = true;
}

PolicyParams update_step(const PolicyParams& params, const TrajectoryBuffer& buffer,
                         BaselineState& baseline, const PpoConfig& cfg, AdaptiveState* adaptive) {
  if (!buffer.full()) throw PpoError("update_step needs a full trajectory buffer");
  const auto& entries = buffer.entries();
  const int d = params.size();
  const double mean_reward = buffer.mean_reward();

  if (!baseline.initialized) initialize_baseline(buffer, cfg, baseline);
  std::vector<double> adv;
  adv.reserve(entries.size());
  const double scale = cfg.normalize_rewards ? 1.0 / (std::sqrt(baseline.variance) + 1e-8) : 1.0;
  for (const auto& e : entries) adv.push_back(scale * advantage(shaped_reward(e, cfg), baseline));

  PolicyParams next = params;
  for (int epoch = 0; epoch < cfg.update_epochs; ++epoch) {
    PolicyGradient total{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
    for (std::size_t k = 0; k < entries.size(); ++k) {
      if (adv[k] == 0.0) continue;
      const auto& e = entries[k];
      const double logp_new = log_prob(next, e.action.perm, e.action.adjacency);
      const double ratio = std::exp(logp_new - e.logp_old);
      const double unclipped = ratio * adv[k];
      const double clipped = std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv[k];
      // Only the unclipped branch depends on the parameters.
      if (unclipped > clipped) continue;
      const PolicyGradient g = grad_log_prob(next, e.action);
      total.d_node_scores += (adv[k] * ratio) * g.d_node_scores;
      total.d_edge_logits += (adv[k] * ratio) * g.d_edge_logits;
    }
    const double inv_k = 1.0 / static_cast<double>(entries.size());
    total.d_node_scores *= inv_k;
    total.d_edge_logits *= inv_k;
    if (!total.d_node_scores.allFinite() || !total.d_edge_logits.allFinite()) {
      throw PpoError("non-finite policy gradient in update epoch " + std::to_string(epoch));
    }
    if (adaptive != nullptr) {
      adam_ascent(next, total, *adaptive, cfg.learning_rate);
    } else {
      next.node_scores += cfg.learning_rate * total.d_node_scores;
      next.edge_logits += cfg.learning_rate * total.d_edge_logits;
    }
  }
  next.edge_logits.diagonal().setZero();

  double shaped_mean = 0.0;
  for (const auto& e : entries) shaped_mean += shaped_reward(e, cfg);
  shaped_mean /= static_cast<double>(entries.size());
  // Spread of the raw advantages this batch saw, for the next normalization.
  double sq = 0.0;
  for (const auto& e : entries) {
    const double a = advantage(shaped_reward(e, cfg), baseline);
    sq += a * a;
  }
  sq /= static_cast<double>(entries.size());
  baseline.variance = cfg.baseline_decay * baseline.variance + (1.0 - cfg.baseline_decay) * std::max(sq, 1e-12);
  baseline.update(cfg.entropy_coef == 0.0 ? mean_reward : shaped_mean, cfg.baseline_decay);
  return next;
}

OptimizeResult optimize(Scorer& scorer, const PpoConfig& cfg, std::ostream* progress) {
  cfg.validate();
  const int d = scorer.dimension();
  OptimizeResult result;
  result.params = PolicyParams(d);
  Rng rng(cfg.seed);
  BaselineState baseline;
  AdaptiveState adaptive;
  TrajectoryBuffer buffer(cfg.samples_per_iter);

  for (int t = 0; t < cfg.iterations; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const double frac = cfg.iterations > 1 ? static_cast<double>(t) / (cfg.iterations - 1) : 0.0;
    result.params.temperature = 1.0 + (cfg.final_temperature - 1.0) * frac;

    const auto hits_before = scorer.cache().hits();
    const auto misses_before = scorer.cache().misses();

    std::vector<DagAction> actions;
    std::vector<DirectedGraph> graphs;
    actions.reserve(static_cast<std::size_t>(cfg.samples_per_iter));
    for (int k = 0; k < cfg.samples_per_iter; ++k) {
      actions.push_back(sample_action(result.params, rng));
      graphs.push_back(actions.back().adjacency);
    }
    const auto scored = scorer.score_graphs(graphs);

    buffer.clear();
    for (std::size_t k = 0; k < actions.size(); ++k) {
      const double logp = actions[k].logp;
      buffer.push(TrajectoryEntry{std::move(actions[k]), logp, scored[k].score});
    }
    if (!baseline.initialized) initialize_baseline(buffer, cfg, baseline);
    double abs_adv = 0.0;
    for (const auto& e : buffer.entries()) abs_adv += std::abs(advantage(shaped_reward(e, cfg), baseline));

    IterationLog row;
    row.iter = t;
    row.mean_reward = buffer.mean_reward();
    row.mean_abs_adv = abs_adv / static_cast<double>(buffer.entries().size());

    result.params = update_step(result.params, buffer, baseline, cfg, cfg.adaptive_steps ? &adaptive : nullptr);

    row.baseline = baseline.value;
    row.cache_hits = scorer.cache().hits() - hits_before;
    row.cache_misses = scorer.cache().misses() - misses_before;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(row);

    if (progress != nullptr && cfg.log_every > 0 && (t + 1) % cfg.log_every == 0) {
      *progress << "iter " << (t + 1) << "/" << cfg.iterations << " mean_reward " << row.mean_reward
                << " baseline " << row.baseline << " cache " << scorer.cache().size() << " entries\n";
    }
  }
  result.params.temperature = 1.0;
  return result;
}

std::string format_run_log(const std::vector<IterationLog>& log) {
  std::string out = "iter,mean_reward,baseline,mean_abs_adv,cache_hits,cache_misses\n";
  for (const auto& r : log) {
    out += std::to_string(r.iter) + ',' + format_double(r.mean_reward) + ',' + format_double(r.baseline) + ',' +
           format_double(r.mean_abs_adv) + ',' + std::to_string(r.cache_hits) + ',' +
           std::to_string(r.cache_misses) + '\n';
  }
  return out;
}

std::string format_run_timing(const std::vector<IterationLog>& log) {
  std::string out = "iter,wall_ms\n";
  for (const auto& r : log) out += std::to_string(r.iter) + ',' + format_double(r.wall_ms) + '\n';
  return out;
}

}  // namespace acd
