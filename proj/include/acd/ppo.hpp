#ifndef ACD_PPO_HPP_
#define ACD_PPO_HPP_

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "acd/policy.hpp"
#include "acd/scorer.hpp"

namespace acd {

class PpoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PpoConfig {
  int iterations = 300;
  /// Larger than usual: small batches let a noisy early gradient fix the node order.
  int samples_per_iter = 128;
  double clip_epsilon = 0.2;
  double learning_rate = 0.5;
  int update_epochs = 4;
  double baseline_decay = 0.9;
  /// Divide advantages by a running standard deviation of R - b. On by
  /// default: raw rewards make the step size depend on the penalty scale.
  bool normalize_rewards = true;
  /// Per-coordinate Adam scaling instead of plain gradient ascent.
  bool adaptive_steps = false;
  /// Entropy regularization weight (reward shaped by -coef * log pi). Keeps
  /// the node order from locking in before the edges are learned.
  double entropy_coef = 0.2;
  /// Sampling temperature is annealed linearly from 1 to this value.
  double final_temperature = 1.0;
  std::uint64_t seed = 0;
  /// Progress line every this many iterations (0 = silent).
  int log_every = 0;

  void validate() const;
};

struct TrajectoryEntry {
  DagAction action;
  double logp_old = 0.0;
  double reward = 0.0;
};

class TrajectoryBuffer {
 public:
  explicit TrajectoryBuffer(int capacity);

  void push(TrajectoryEntry entry);
  bool full() const { return static_cast<int>(entries_.size()) == capacity_; }
  int capacity() const { return capacity_; }
  void clear() { entries_.clear(); }
  const std::vector<TrajectoryEntry>& entries() const { return entries_; }
  double mean_reward() const;

 private:
  int capacity_;
  std::vector<TrajectoryEntry> entries_;
};

/// Exponential moving average of rewards, plus an EMA of squared advantages
/// used only when reward normalization is on.
struct BaselineState {
  double value = 0.0;
  double variance = 1.0;
  bool initialized = false;

  static BaselineState starting_at(double b0);
  void update(double mean_reward, double decay);
};

double advantage(double reward, const BaselineState& baseline);

/// Sets the baseline to the buffer's mean (shaped) reward and its variance to
/// the batch variance.
void initialize_baseline(const TrajectoryBuffer& buffer, const PpoConfig& cfg, BaselineState& baseline);

/// min(r * adv, clip(r, 1 - eps, 1 + eps) * adv) with r = exp(logp_new - logp_old).
double clipped_objective(double logp_new, double logp_old, double adv, double eps);

/// Adam moments for the adaptive step option.
struct AdaptiveState {
  PolicyGradient first;
  PolicyGradient second;
  int steps = 0;
};

/// PPO update on one full buffer: `update_epochs` ascent steps on the batch
/// mean clipped objective, then the baseline absorbs the batch mean reward.
PolicyParams update_step(const PolicyParams& params, const TrajectoryBuffer& buffer,
                         BaselineState& baseline, const PpoConfig& cfg,
                         AdaptiveState* adaptive = nullptr);

struct IterationLog {
  int iter = 0;
  double mean_reward = 0.0;
  double baseline = 0.0;
  double mean_abs_adv = 0.0;
  std::int64_t cache_hits = 0;
  std::int64_t cache_misses = 0;
  double wall_ms = 0.0;
};

struct OptimizeResult {
  PolicyParams params;
  std::vector<IterationLog> log;
};

/// Sample K actions, score them, update; repeated for `iterations` rounds.
OptimizeResult optimize(Scorer& scorer, const PpoConfig& cfg, std::ostream* progress = nullptr);

/// Deterministic columns only (iter, mean_reward, baseline, mean_abs_adv,
/// cache_hits, cache_misses).
std::string format_run_log(const std::vector<IterationLog>& log);
/// iter, wall_ms.
std::string format_run_timing(const std::vector<IterationLog>& log);

}  // namespace acd

#endif  // ACD_PPO_HPP_
