#include "acd/policy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "acd/dataset.hpp"

namespace acd {

namespace {

double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_add_exp(double a, double b) {
  const double hi = std::max(a, b);
  if (hi == -INFINITY) return hi;
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

std::vector<int> positions_of(const std::vector<int>& perm, int d) {
  if (static_cast<int>(perm.size()) != d) throw GraphError("permutation has the wrong length");
  std::vector<int> pos(static_cast<std::size_t>(d), -1);
  for (int k = 0; k < d; ++k) {
    const int v = perm[static_cast<std::size_t>(k)];
    if (v < 0 || v >= d || pos[static_cast<std::size_t>(v)] >= 0) throw GraphError("invalid permutation");
    pos[static_cast<std::size_t>(v)] = k;
  }
  return pos;
}

/// suffix[k] = log sum_{j >= k} exp(u[perm[j]]).
std::vector<double> suffix_log_sums(const Eigen::VectorXd& u, const std::vector<int>& perm) {
  const auto d = perm.size();
  std::vector<double> suffix(d + 1, -INFINITY);
  for (std::size_t k = d; k-- > 0;) suffix[k] = log_add_exp(u(perm[k]), suffix[k + 1]);
  return suffix;
}

}  // namespace

PolicyParams::PolicyParams(int d)
    : node_scores(Eigen::VectorXd::Zero(d)), edge_logits(Eigen::MatrixXd::Zero(d, d)) {}

void PolicyParams::validate() const {
  if (edge_logits.rows() != size() || edge_logits.cols() != size()) {
    throw std::invalid_argument("edge logits must be d x d");
  }
  if (size() > kMaxNodes) throw std::invalid_argument("too many nodes for a policy");
  if (!node_scores.allFinite() || !edge_logits.allFinite()) {
    throw std::invalid_argument("policy parameters must be finite");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("temperature must be positive");
  }
}

double log_prob(const PolicyParams& params, const std::vector<int>& perm, const DirectedGraph& edges) {
  const int d = params.size();
  if (edges.size() != d) throw GraphError("edge mask size does not match the policy");
  const auto pos = positions_of(perm, d);
  const Eigen::VectorXd u = params.node_scores / params.temperature;
  const auto suffix = suffix_log_sums(u, perm);

  double lp = 0.0;
  for (int k = 0; k < d; ++k) lp += u(perm[static_cast<std::size_t>(k)]) - suffix[static_cast<std::size_t>(k)];

  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (i == j) continue;
      const bool forward = pos[static_cast<std::size_t>(i)] < pos[static_cast<std::size_t>(j)];
      if (!forward) {
        if (edges.has_edge(i, j)) {
          throw GraphError("edge " + std::to_string(i) + "->" + std::to_string(j) +
                           " points backward in the node order");
        }
        continue;
      }
      const double x = params.edge_logits(i, j) / params.temperature;
      lp += edges.has_edge(i, j) ? log_sigmoid(x) : log_sigmoid(-x);
    }
  }
  return lp;
}

DagAction sample_action(const PolicyParams& params, Rng& rng) {
  const int d = params.size();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::VectorXd u = params.node_scores / params.temperature;

  DagAction action;
  std::vector<int> remaining(static_cast<std::size_t>(d));
  std::iota(remaining.begin(), remaining.end(), 0);
  std::vector<double> weights;
  while (!remaining.empty()) {
    double hi = -INFINITY;
    for (int v : remaining) hi = std::max(hi, u(v));
    weights.clear();
    double total = 0.0;
    for (int v : remaining) {
      weights.push_back(std::exp(u(v) - hi));
      total += weights.back();
    }
    double target = unit(rng) * total;
    std::size_t pick = remaining.size() - 1;
    for (std::size_t k = 0; k < remaining.size(); ++k) {
      target -= weights[k];
      if (target < 0.0) {
        pick = k;
        break;
      }
    }
    action.perm.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }

  action.adjacency = DirectedGraph(d);
  for (int a = 0; a < d; ++a) {
    for (int b = a + 1; b < d; ++b) {
      const int i = action.perm[static_cast<std::size_t>(a)];
      const int j = action.perm[static_cast<std::size_t>(b)];
      if (unit(rng) < sigmoid(params.edge_logits(i, j) / params.temperature)) action.adjacency.add_edge(i, j);
    }
  }
  action.logp = log_prob(params, action.perm, action.adjacency);
  return action;
}

PolicyGradient grad_log_prob(const PolicyParams& params, const DagAction& action) {
  const int d = params.size();
  const auto pos = positions_of(action.perm, d);
  const double inv_t = 1.0 / params.temperature;
  const Eigen::VectorXd u = params.node_scores * inv_t;
  const auto suffix = suffix_log_sums(u, action.perm);

  PolicyGradient g;
  g.d_node_scores = Eigen::VectorXd::Zero(d);
  g.d_edge_logits = Eigen::MatrixXd::Zero(d, d);

  // Node m is a candidate at every step up to and including its own; each
  // such step contributes minus its softmax probability.
  for (int m = 0; m < d; ++m) {
    double selected = 0.0;
    for (int k = 0; k <= pos[static_cast<std::size_t>(m)]; ++k) {
      selected += std::exp(u(m) - suffix[static_cast<std::size_t>(k)]);
    }
    g.d_node_scores(m) = inv_t * (1.0 - selected);
  }
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (i == j || pos[static_cast<std::size_t>(i)] > pos[static_cast<std::size_t>(j)]) continue;
      const double e = action.adjacency.has_edge(i, j) ? 1.0 : 0.0;
      g.d_edge_logits(i, j) = inv_t * (e - sigmoid(params.edge_logits(i, j) * inv_t));
    }
  }
  return g;
}

DirectedGraph map_graph(const PolicyParams& params) {
  const int d = params.size();
  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return params.node_scores(a) > params.node_scores(b); });
  DirectedGraph g(d);
  for (int a = 0; a < d; ++a) {
    for (int b = a + 1; b < d; ++b) {
      const int i = order[static_cast<std::size_t>(a)];
      const int j = order[static_cast<std::size_t>(b)];
      if (sigmoid(params.edge_logits(i, j)) > 0.5) g.add_edge(i, j);
    }
  }
  return g;
}

Eigen::MatrixXd edge_frequencies(const PolicyParams& params, int samples, Rng& rng) {
  const int d = params.size();
  Eigen::MatrixXd freq = Eigen::MatrixXd::Zero(d, d);
  for (int s = 0; s < samples; ++s) {
    const auto a = sample_action(params, rng);
    for (const auto& [i, j] : a.adjacency.edges()) freq(i, j) += 1.0;
  }
  if (samples > 0) freq /= samples;
  return freq;
}

std::string params_to_text(const PolicyParams& params) {
  std::ostringstream out;
  out << "d=" << params.size() << '\n';
  out << "temperature " << format_double(params.temperature) << '\n';
  out << "node_scores";
  for (int i = 0; i < params.size(); ++i) out << ' ' << format_double(params.node_scores(i));
  out << '\n';
  for (int i = 0; i < params.size(); ++i) {
    out << "edge_logits";
    for (int j = 0; j < params.size(); ++j) out << ' ' << format_double(params.edge_logits(i, j));
    out << '\n';
  }
  return out.str();
}

namespace {

double parse_value(const std::string& token) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw std::invalid_argument("bad number '" + token + "' in checkpoint");
  return v;
}

std::vector<double> parse_row(std::istream& in, const std::string& label, int count) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("checkpoint truncated before " + label);
  std::istringstream fields(line);
  std::string tag;
  fields >> tag;
  if (tag != label) throw std::invalid_argument("checkpoint expected '" + label + "', found '" + tag + "'");
  std::vector<double> out;
  std::string token;
  while (fields >> token) out.push_back(parse_value(token));
  if (static_cast<int>(out.size()) != count) {
    throw std::invalid_argument("checkpoint row '" + label + "' has " + std::to_string(out.size()) +
                                " values, expected " + std::to_string(count));
  }
  return out;
}

}  // namespace

PolicyParams params_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("d=", 0) != 0) {
    throw std::invalid_argument("checkpoint missing 'd=<n>' header");
  }
  const int d = std::stoi(line.substr(2));
  if (d < 1 || d > kMaxNodes) throw std::invalid_argument("checkpoint dimension out of range");
  PolicyParams params(d);
  params.temperature = parse_row(in, "temperature", 1)[0];
  const auto scores = parse_row(in, "node_scores", d);
  for (int i = 0; i < d; ++i) params.node_scores(i) = scores[static_cast<std::size_t>(i)];
  for (int i = 0; i < d; ++i) {
    const auto row = parse_row(in, "edge_logits", d);
    for (int j = 0; j < d; ++j) params.edge_logits(i, j) = row[static_cast<std::size_t>(j)];
  }
  params.validate();
  return params;
}

void save_params(const std::string& path, const PolicyParams& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << params_to_text(params);
}

PolicyParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return params_from_text(buffer.str());
}

}  // namespace acd
