#include "acd/scm.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace acd {

std::string to_string(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::Zero: return "zero";
    case MechanismKind::Mlp: return "mlp";
    case MechanismKind::Linear: return "linear";
  }
  return "unknown";
}

MechanismKind mechanism_kind_from_string(const std::string& name) {
  if (name == "zero") return MechanismKind::Zero;
  if (name == "mlp") return MechanismKind::Mlp;
  if (name == "linear") return MechanismKind::Linear;
  throw std::invalid_argument("unknown mechanism kind '" + name + "'");
}

Eigen::VectorXd MechanismNet::evaluate(const Eigen::MatrixXd& inputs) const {
  const Eigen::Index n = inputs.rows();
  switch (kind) {
    case MechanismKind::Zero:
      return Eigen::VectorXd::Zero(n);
    case MechanismKind::Linear:
      return output_scale * ((inputs * output_weights).array() + output_bias).matrix();
    case MechanismKind::Mlp: {
      Eigen::MatrixXd hidden = inputs * hidden_weights.transpose();
      hidden.rowwise() += hidden_bias.transpose();
      hidden = hidden.array().tanh().matrix();
      return output_scale * ((hidden * output_weights).array() + output_bias).matrix();
    }
  }
  return Eigen::VectorXd::Zero(n);
}

void validate(const ScmSpec& scm) {
  const int d = scm.graph.size();
  if (!is_acyclic(scm.graph)) throw std::invalid_argument("SCM graph is cyclic");
  if (static_cast<int>(scm.mechanisms.size()) != d) {
    throw std::invalid_argument("SCM needs one mechanism per node");
  }
  if (static_cast<int>(scm.noise_scales.size()) != d) {
    throw std::invalid_argument("SCM needs one noise scale per node");
  }
  for (int i = 0; i < d; ++i) {
    const auto& m = scm.mechanisms[static_cast<std::size_t>(i)];
    if (!(scm.noise_scales[static_cast<std::size_t>(i)] > 0.0) ||
        !std::isfinite(scm.noise_scales[static_cast<std::size_t>(i)])) {
      throw std::invalid_argument("noise scale of node " + std::to_string(i) + " must be positive");
    }
    NodeMask mask = 0;
    for (int p : m.parents) mask |= NodeMask{1} << p;
    if (mask != scm.graph.parents(i) || popcount(mask) != m.input_width()) {
      throw std::invalid_argument("mechanism inputs of node " + std::to_string(i) +
                                  " do not match its parents");
    }
    if (m.kind == MechanismKind::Mlp &&
        (m.hidden_weights.rows() != m.hidden_width() || m.hidden_weights.cols() != m.input_width() ||
         m.output_weights.size() != m.hidden_width())) {
      throw std::invalid_argument("mechanism of node " + std::to_string(i) + " has bad shape");
    }
    if (m.kind == MechanismKind::Linear && m.output_weights.size() != m.input_width()) {
      throw std::invalid_argument("mechanism of node " + std::to_string(i) + " has bad shape");
    }
    if (!m.hidden_weights.allFinite() || !m.hidden_bias.allFinite() ||
        !m.output_weights.allFinite() || !std::isfinite(m.output_bias) ||
        !std::isfinite(m.output_scale)) {
      throw std::invalid_argument("mechanism of node " + std::to_string(i) + " has non-finite weights");
    }
  }
}

DirectedGraph sample_er_graph(int d, double expected_edges, Rng& rng) {
  if (d < 2) throw std::invalid_argument("ER graph needs at least 2 nodes");
  const double pairs = d * (d - 1) / 2.0;
  if (!(expected_edges >= 0.0 && expected_edges <= pairs)) {
    throw std::invalid_argument("expected edge count " + std::to_string(expected_edges) +
                                " outside [0, " + std::to_string(pairs) + "]");
  }
  const double p = expected_edges / pairs;

  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  for (int i = d - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DirectedGraph g(d);
  for (int a = 0; a < d; ++a) {
    for (int b = a + 1; b < d; ++b) {
      if (unit(rng) < p) g.add_edge(order[a], order[b]);
    }
  }
  return g;
}

namespace {

MechanismNet random_mechanism(const DirectedGraph& graph, int node, const MechanismConfig& config,
                              Rng& rng) {
  MechanismNet m;
  m.parents = ParentSet{node, graph.parents(node)}.parent_list();
  if (m.parents.empty()) return m;

  const int inputs = m.input_width();
  if (config.kind == MechanismKind::Linear) {
    // Magnitudes bounded away from zero so every edge carries signal.
    std::uniform_real_distribution<double> magnitude(0.5, 2.0);
    std::bernoulli_distribution sign(0.5);
    m.kind = MechanismKind::Linear;
    m.output_weights.resize(inputs);
    for (int k = 0; k < inputs; ++k) {
      m.output_weights(k) = (sign(rng) ? 1.0 : -1.0) * magnitude(rng) * config.weight_scale;
    }
    return m;
  }
  if (config.kind == MechanismKind::Zero) return m;

  std::normal_distribution<double> weight(0.0, 1.0);
  auto draw = [&] { return config.weight_scale * weight(rng); };
  m.kind = MechanismKind::Mlp;
  m.hidden_weights.resize(config.hidden_width, inputs);
  m.hidden_bias.resize(config.hidden_width);
  m.output_weights.resize(config.hidden_width);
  for (int h = 0; h < config.hidden_width; ++h) {
    for (int k = 0; k < inputs; ++k) m.hidden_weights(h, k) = draw();
  }
  for (int h = 0; h < config.hidden_width; ++h) m.hidden_bias(h) = draw();
  for (int h = 0; h < config.hidden_width; ++h) m.output_weights(h) = draw();
  m.output_bias = draw();
  return m;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& values, const std::vector<int>& columns) {
  Eigen::MatrixXd out(values.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = values.col(columns[k]);
  }
  return out;
}

}  // namespace

ScmSpec sample_scm(const DirectedGraph& graph, const MechanismConfig& config, Rng& rng) {
  if (!is_acyclic(graph)) throw std::invalid_argument("SCM graph is cyclic");
  if (config.hidden_width < 1) throw std::invalid_argument("hidden width must be positive");
  if (!(config.weight_scale >= 0.0)) throw std::invalid_argument("weight scale must be non-negative");
  if (!(config.noise_min > 0.0 && config.noise_max >= config.noise_min)) {
    throw std::invalid_argument("noise interval must be positive and ordered");
  }
  const int d = graph.size();
  ScmSpec scm;
  scm.graph = graph;
  for (int i = 0; i < d; ++i) scm.mechanisms.push_back(random_mechanism(graph, i, config, rng));
  std::uniform_real_distribution<double> noise(config.noise_min, config.noise_max);
  for (int i = 0; i < d; ++i) scm.noise_scales.push_back(noise(rng));

  if (config.standardize && config.pilot_samples > 1) {
    Rng pilot_rng(rng());
    std::normal_distribution<double> eps(0.0, 1.0);
    Eigen::MatrixXd pilot = Eigen::MatrixXd::Zero(config.pilot_samples, d);
    for (int node : topological_order(graph)) {
      auto& m = scm.mechanisms[static_cast<std::size_t>(node)];
      Eigen::VectorXd out = Eigen::VectorXd::Zero(config.pilot_samples);
      if (!m.parents.empty()) {
        out = m.evaluate(gather(pilot, m.parents));
        const double mean = out.mean();
        const double sd = std::sqrt((out.array() - mean).square().sum() / (out.size() - 1));
        if (sd > 1e-12) {
          m.output_scale = 1.0 / sd;
          out *= m.output_scale;
        }
      }
      for (int r = 0; r < config.pilot_samples; ++r) {
        pilot(r, node) = out(r) + scm.noise_scales[static_cast<std::size_t>(node)] * eps(pilot_rng);
      }
    }
  }
  validate(scm);
  return scm;
}

ScmSpec sample_mechanisms(const DirectedGraph& graph, int hidden_width, double weight_scale,
                          Rng& rng) {
  MechanismConfig config;
  config.hidden_width = hidden_width;
  config.weight_scale = weight_scale;
  return sample_scm(graph, config, rng);
}

Dataset generate_dataset(const ScmSpec& scm, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample count must be positive");
  validate(scm);
  const int d = scm.size();
  std::normal_distribution<double> eps(0.0, 1.0);
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(n, d);
  for (int node : topological_order(scm.graph)) {
    const auto& m = scm.mechanisms[static_cast<std::size_t>(node)];
    Eigen::VectorXd out = m.parents.empty() ? Eigen::VectorXd::Zero(n)
                                            : m.evaluate(gather(values, m.parents));
    const double sigma = scm.noise_scales[static_cast<std::size_t>(node)];
    for (int r = 0; r < n; ++r) {
      const double v = out(r) + sigma * eps(rng);
      if (!std::isfinite(v)) {
        throw DataError("non-finite value generated for node " + std::to_string(node) +
                        " at row " + std::to_string(r));
      }
      values(r, node) = v;
    }
  }
  std::vector<std::string> names;
  for (int i = 0; i < d; ++i) names.push_back("x" + std::to_string(i));
  return Dataset(std::move(values), std::move(names));
}

namespace {

using nlohmann::json;

std::vector<double> flatten(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

std::vector<double> flatten(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::string scm_to_json(const ScmSpec& scm) {
  json j;
  j["format"] = "acd-scm-v1";
  j["d"] = scm.size();
  j["seed"] = scm.seed;
  j["edges"] = json::array();
  for (const auto& [from, to] : scm.graph.edges()) j["edges"].push_back({from, to});
  j["noise_scales"] = scm.noise_scales;
  j["mechanisms"] = json::array();
  for (int i = 0; i < scm.size(); ++i) {
    const auto& m = scm.mechanisms[static_cast<std::size_t>(i)];
    json mj;
    mj["node"] = i;
    mj["kind"] = to_string(m.kind);
    mj["parents"] = m.parents;
    mj["hidden_width"] = m.hidden_width();
    mj["hidden_weights"] = flatten(m.hidden_weights);
    mj["hidden_bias"] = flatten(m.hidden_bias);
    mj["output_weights"] = flatten(m.output_weights);
    mj["output_bias"] = m.output_bias;
    mj["output_scale"] = m.output_scale;
    j["mechanisms"].push_back(mj);
  }
  return j.dump(2);
}

ScmSpec scm_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "acd-scm-v1") throw std::invalid_argument("unsupported SCM format");
    const int d = j.at("d").get<int>();
    ScmSpec scm;
    scm.graph = DirectedGraph(d);
    for (const auto& e : j.at("edges")) scm.graph.add_edge(e.at(0).get<int>(), e.at(1).get<int>());
    scm.seed = j.at("seed").get<std::uint64_t>();
    scm.noise_scales = j.at("noise_scales").get<std::vector<double>>();
    for (const auto& mj : j.at("mechanisms")) {
      MechanismNet m;
      m.kind = mechanism_kind_from_string(mj.at("kind").get<std::string>());
      m.parents = mj.at("parents").get<std::vector<int>>();
      const int hidden = mj.at("hidden_width").get<int>();
      const auto hw = mj.at("hidden_weights").get<std::vector<double>>();
      const auto hb = mj.at("hidden_bias").get<std::vector<double>>();
      const auto ow = mj.at("output_weights").get<std::vector<double>>();
      const auto inputs = static_cast<Eigen::Index>(m.parents.size());
      if (static_cast<Eigen::Index>(hw.size()) != hidden * inputs ||
          static_cast<int>(hb.size()) != hidden) {
        throw std::invalid_argument("mechanism weight arrays have the wrong length");
      }
      m.hidden_weights.resize(hidden, inputs);
      for (int r = 0; r < hidden; ++r) {
        for (Eigen::Index c = 0; c < inputs; ++c) m.hidden_weights(r, c) = hw[static_cast<std::size_t>(r * inputs + c)];
      }
      m.hidden_bias = Eigen::Map<const Eigen::VectorXd>(hb.data(), static_cast<Eigen::Index>(hb.size()));
      m.output_weights = Eigen::Map<const Eigen::VectorXd>(ow.data(), static_cast<Eigen::Index>(ow.size()));
      m.output_bias = mj.at("output_bias").get<double>();
      m.output_scale = mj.at("output_scale").get<double>();
      scm.mechanisms.push_back(std::move(m));
    }
    validate(scm);
    return scm;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed SCM file: ") + e.what());
  }
}

void save_scm(const std::string& path, const ScmSpec& scm) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << scm_to_json(scm) << '\n';
}

ScmSpec load_scm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return scm_from_json(buffer.str());
}

}  // namespace acd
