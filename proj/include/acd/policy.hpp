#ifndef ACD_POLICY_HPP_
#define ACD_POLICY_HPP_

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "acd/graph.hpp"
#include "acd/random.hpp"

namespace acd {

/// Parameters of the distribution over DAGs: node scores drive a
/// Plackett-Luce draw of a node order, edge logits drive independent
/// Bernoulli draws for every order-respecting pair.
struct PolicyParams {
  Eigen::VectorXd node_scores;
  Eigen::MatrixXd edge_logits;  // diagonal ignored
  double temperature = 1.0;

  PolicyParams() = default;
  explicit PolicyParams(int d);

  int size() const { return static_cast<int>(node_scores.size()); }
  void validate() const;
};

/// One sampled (order, edge) pair. Edges can only point forward in `perm`,
/// so `adjacency` doubles as the edge mask restricted to its support.
struct DagAction {
  std::vector<int> perm;  // perm[k] = node placed at position k
  DirectedGraph adjacency;
  double logp = 0.0;
};

struct PolicyGradient {
  Eigen::VectorXd d_node_scores;
  Eigen::MatrixXd d_edge_logits;
};

DagAction sample_action(const PolicyParams& params, Rng& rng);

/// Exact log-probability of drawing `perm` and then `edges`. Throws
/// GraphError if an edge points backward in `perm`.
double log_prob(const PolicyParams& params, const std::vector<int>& perm,
                const DirectedGraph& edges);

PolicyGradient grad_log_prob(const PolicyParams& params, const DagAction& action);

/// Modal action: scores sorted descending (ties by index), edges where the
/// logit is positive.
DirectedGraph map_graph(const PolicyParams& params);

/// Probability of each edge under the policy marginal, estimated from samples.
Eigen::MatrixXd edge_frequencies(const PolicyParams& params, int samples, Rng& rng);

// Checkpoint text: "d=<n>", "temperature <t>", "node_scores ...", then d
// "edge_logits" rows. Values use shortest round-trip formatting.
std::string params_to_text(const PolicyParams& params);
PolicyParams params_from_text(const std::string& text);
void save_params(const std::string& path, const PolicyParams& params);
PolicyParams load_params(const std::string& path);

}  // namespace acd

#endif  // ACD_POLICY_HPP_
