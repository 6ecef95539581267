#ifndef ACD_SCM_HPP_
#define ACD_SCM_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "acd/dataset.hpp"
#include "acd/graph.hpp"
#include "acd/random.hpp"

namespace acd {

enum class MechanismKind { Zero, Mlp, Linear };

std::string to_string(MechanismKind kind);
MechanismKind mechanism_kind_from_string(const std::string& name);

/// Per-node function of the parent values. Mlp is one tanh hidden layer;
/// Linear is a weighted sum. The output is multiplied by output_scale.
struct MechanismNet {
  MechanismKind kind = MechanismKind::Zero;
  std::vector<int> parents;
  Eigen::MatrixXd hidden_weights;  // hidden x inputs (Mlp only)
  Eigen::VectorXd hidden_bias;     // hidden (Mlp only)
  Eigen::VectorXd output_weights;  // hidden (Mlp) or inputs (Linear)
  double output_bias = 0.0;
  double output_scale = 1.0;

  int input_width() const { return static_cast<int>(parents.size()); }
  int hidden_width() const { return static_cast<int>(hidden_bias.size()); }

  /// Outputs for a batch: one row per sample, columns in `parents` order.
  Eigen::VectorXd evaluate(const Eigen::MatrixXd& inputs) const;
};

struct ScmSpec {
  DirectedGraph graph;
  std::vector<MechanismNet> mechanisms;
  std::vector<double> noise_scales;
  std::uint64_t seed = 0;

  int size() const { return graph.size(); }
};

struct MechanismConfig {
  MechanismKind kind = MechanismKind::Mlp;
  int hidden_width = 16;
  double weight_scale = 1.0;
  double noise_min = 0.4;
  double noise_max = 0.8;
  int pilot_samples = 2000;
  bool standardize = true;
};

/// Throws std::invalid_argument when the spec breaks its invariants.
void validate(const ScmSpec& scm);

/// Random node order, then each order-respecting pair kept with probability
/// e / (d(d-1)/2).
DirectedGraph sample_er_graph(int d, double expected_edges, Rng& rng);

/// Random tanh networks with default noise scales and standardization.
ScmSpec sample_mechanisms(const DirectedGraph& graph, int hidden_width, double weight_scale,
                          Rng& rng);

ScmSpec sample_scm(const DirectedGraph& graph, const MechanismConfig& config, Rng& rng);

/// Ancestral sampling: x_i = f_i(x_pa(i)) + sigma_i * eps.
Dataset generate_dataset(const ScmSpec& scm, int n, Rng& rng);

std::string scm_to_json(const ScmSpec& scm);
ScmSpec scm_from_json(const std::string& text);
void save_scm(const std::string& path, const ScmSpec& scm);
ScmSpec load_scm(const std::string& path);

}  // namespace acd

#endif  // ACD_SCM_HPP_
