#include "acd/graph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace acd {

namespace {

NodeMask full_mask(int d) {
  return d >= 32 ? ~NodeMask{0} : ((NodeMask{1} << d) - 1U);
}

void check_size(int d) {
  if (d < 0 || d > kMaxNodes) {
    throw GraphError("node count " + std::to_string(d) + " outside [0, " +
                     std::to_string(kMaxNodes) + "]");
  }
}

}  // namespace

std::vector<int> ParentSet::parent_list() const {
  std::vector<int> out;
  for (NodeMask m = parents; m != 0; m &= m - 1) out.push_back(std::countr_zero(m));
  return out;
}

DirectedGraph::DirectedGraph(int d) {
  check_size(d);
  parents_.assign(static_cast<std::size_t>(d), 0);
}

DirectedGraph DirectedGraph::from_edges(int d, const std::vector<std::pair<int, int>>& edges) {
  DirectedGraph g(d);
  for (const auto& [from, to] : edges) g.add_edge(from, to);
  return g;
}

DirectedGraph DirectedGraph::from_parent_masks(std::vector<NodeMask> parents) {
  const int d = static_cast<int>(parents.size());
  check_size(d);
  for (int j = 0; j < d; ++j) {
    if ((parents[j] & ~full_mask(d)) != 0) throw GraphError("parent mask out of range");
    if ((parents[j] >> j) & 1U) throw GraphError("self-loop on node " + std::to_string(j));
  }
  DirectedGraph g;
  g.parents_ = std::move(parents);
  return g;
}

void DirectedGraph::check_pair(int from, int to) const {
  if (from < 0 || to < 0 || from >= size() || to >= size()) {
    throw GraphError("edge " + std::to_string(from) + "->" + std::to_string(to) +
                     " outside graph of size " + std::to_string(size()));
  }
  if (from == to) throw GraphError("self-loop on node " + std::to_string(from));
}

void DirectedGraph::add_edge(int from, int to) {
  check_pair(from, to);
  parents_[to] |= NodeMask{1} << from;
}

void DirectedGraph::remove_edge(int from, int to) {
  check_pair(from, to);
  parents_[to] &= ~(NodeMask{1} << from);
}

NodeMask DirectedGraph::children(int node) const {
  NodeMask out = 0;
  for (int j = 0; j < size(); ++j) {
    if (has_edge(node, j)) out |= NodeMask{1} << j;
  }
  return out;
}

int DirectedGraph::edge_count() const {
  int n = 0;
  for (NodeMask m : parents_) n += popcount(m);
  return n;
}

std::vector<std::pair<int, int>> DirectedGraph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < size(); ++i) {
    for (int j = 0; j < size(); ++j) {
      if (has_edge(i, j)) out.emplace_back(i, j);
    }
  }
  return out;
}

Cpdag::Cpdag(int d) {
  check_size(d);
  directed_parents_.assign(static_cast<std::size_t>(d), 0);
  neighbors_.assign(static_cast<std::size_t>(d), 0);
}

void Cpdag::set_directed(int from, int to) {
  neighbors_[from] &= ~(NodeMask{1} << to);
  neighbors_[to] &= ~(NodeMask{1} << from);
  directed_parents_[from] &= ~(NodeMask{1} << to);
  directed_parents_[to] |= NodeMask{1} << from;
}

void Cpdag::set_undirected(int a, int b) {
  directed_parents_[a] &= ~(NodeMask{1} << b);
  directed_parents_[b] &= ~(NodeMask{1} << a);
  neighbors_[a] |= NodeMask{1} << b;
  neighbors_[b] |= NodeMask{1} << a;
}

std::vector<int> topological_order(const DirectedGraph& g) {
  const int d = g.size();
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(d));
  NodeMask placed = 0;
  while (static_cast<int>(order.size()) < d) {
    int next = -1;
    for (int v = 0; v < d; ++v) {
      if (((placed >> v) & 1U) == 0 && (g.parents(v) & ~placed) == 0) {
        next = v;
        break;
      }
    }
    if (next < 0) throw GraphError("graph contains a directed cycle");
    order.push_back(next);
    placed |= NodeMask{1} << next;
  }
  return order;
}

bool is_acyclic(const DirectedGraph& g) {
  const int d = g.size();
  NodeMask placed = 0;
  for (int step = 0; step < d; ++step) {
    bool progressed = false;
    for (int v = 0; v < d; ++v) {
      if (((placed >> v) & 1U) == 0 && (g.parents(v) & ~placed) == 0) {
        placed |= NodeMask{1} << v;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return placed == full_mask(d);
}

namespace {

// Each DAG decomposes uniquely into layers by longest distance from a source:
// layer k holds nodes whose parents all lie in layers < k with at least one in
// layer k-1. Enumerating the layer choices and those parent sets visits every
// DAG exactly once.
class DagEnumerator {
 public:
  explicit DagEnumerator(int d) : d_(d), all_(full_mask(d)), parents_(d, 0) {}

  std::vector<DirectedGraph> run() {
    extend(0, 0);
    std::sort(out_.begin(), out_.end());
    return std::move(out_);
  }

 private:
  void extend(NodeMask placed, NodeMask last_layer) {
    const NodeMask remaining = all_ & ~placed;
    if (remaining == 0) {
      out_.push_back(DirectedGraph::from_parent_masks(parents_));
      return;
    }
    for (NodeMask layer = remaining; layer != 0; layer = (layer - 1) & remaining) {
      assign(layer, layer, placed, last_layer);
    }
  }

  void assign(NodeMask layer, NodeMask pending, NodeMask placed, NodeMask last_layer) {
    if (pending == 0) {
      extend(placed | layer, layer);
      return;
    }
    const int v = std::countr_zero(pending);
    const NodeMask rest = pending & (pending - 1);
    if (placed == 0) {
      parents_[v] = 0;
      assign(layer, rest, placed, last_layer);
      return;
    }
    // Non-empty subsets of `placed` that touch the previous layer.
    for (NodeMask p = placed; p != 0; p = (p - 1) & placed) {
      if ((p & last_layer) == 0) continue;
      parents_[v] = p;
      assign(layer, rest, placed, last_layer);
    }
    parents_[v] = 0;
  }

  int d_;
  NodeMask all_;
  std::vector<NodeMask> parents_;
  std::vector<DirectedGraph> out_;
};

}  // namespace

std::vector<DirectedGraph> enumerate_all_dags(int d, int max_d) {
  if (d < 1) throw GraphError("enumeration needs at least one node");
  if (d > max_d) {
    throw GraphError("refusing to enumerate DAGs on " + std::to_string(d) +
                     " nodes (limit " + std::to_string(max_d) + ")");
  }
  return DagEnumerator(d).run();
}

namespace {

bool apply_meek_rules(Cpdag& c) {
  const int d = c.size();
  auto undirected = [&](int a, int b) { return c.has_undirected(a, b); };
  auto directed = [&](int a, int b) { return c.has_directed(a, b); };
  auto adjacent = [&](int a, int b) { return c.adjacent(a, b); };

  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      if (a == b || !undirected(a, b)) continue;

      // R1: c -> a - b, c and b nonadjacent  =>  a -> b
      for (int x = 0; x < d; ++x) {
        if (x != b && directed(x, a) && !adjacent(x, b)) {
          c.set_directed(a, b);
          return true;
        }
      }
      // R2: a -> x -> b, a - b  =>  a -> b
      for (int x = 0; x < d; ++x) {
        if (directed(a, x) && directed(x, b)) {
          c.set_directed(a, b);
          return true;
        }
      }
      // R3: a - x, a - y, x -> b, y -> b, x and y nonadjacent  =>  a -> b
      for (int x = 0; x < d; ++x) {
        if (!undirected(a, x) || !directed(x, b)) continue;
        for (int y = x + 1; y < d; ++y) {
          if (undirected(a, y) && directed(y, b) && !adjacent(x, y)) {
            c.set_directed(a, b);
            return true;
          }
        }
      }
      // R4: a - x, x -> y -> b, a adjacent to y, x and b nonadjacent  =>  a -> b
      for (int x = 0; x < d; ++x) {
        if (x == b || !undirected(a, x) || adjacent(x, b)) continue;
        for (int y = 0; y < d; ++y) {
          if (y != a && directed(x, y) && directed(y, b) && adjacent(a, y)) {
            c.set_directed(a, b);
            return true;
          }
        }
      }
    }
  }
  return false;
}

}  // namespace

Cpdag dag_to_cpdag(const DirectedGraph& g) {
  if (!is_acyclic(g)) throw GraphError("CPDAG requested for a cyclic graph");
  const int d = g.size();
  Cpdag c(d);
  for (const auto& [from, to] : g.edges()) c.set_undirected(from, to);

  auto adjacent_in_g = [&](int a, int b) { return g.has_edge(a, b) || g.has_edge(b, a); };
  for (int k = 0; k < d; ++k) {
    const auto pa = ParentSet{k, g.parents(k)}.parent_list();
    for (std::size_t x = 0; x < pa.size(); ++x) {
      for (std::size_t y = x + 1; y < pa.size(); ++y) {
        if (!adjacent_in_g(pa[x], pa[y])) {
          c.set_directed(pa[x], k);
          c.set_directed(pa[y], k);
        }
      }
    }
  }
  while (apply_meek_rules(c)) {
  }
  return c;
}

int shd_cpdag(const Cpdag& a, const Cpdag& b) {
  if (a.size() != b.size()) {
    throw GraphError("SHD between CPDAGs of different sizes " + std::to_string(a.size()) +
                     " and " + std::to_string(b.size()));
  }
  auto status = [](const Cpdag& c, int i, int j) {
    if (c.has_undirected(i, j)) return 3;
    if (c.has_directed(i, j)) return 1;
    if (c.has_directed(j, i)) return 2;
    return 0;
  };
  int distance = 0;
  for (int i = 0; i < a.size(); ++i) {
    for (int j = i + 1; j < a.size(); ++j) {
      if (status(a, i, j) != status(b, i, j)) ++distance;
    }
  }
  return distance;
}

std::vector<DirectedGraph> mec_of(const DirectedGraph& g,
                                  const std::vector<DirectedGraph>& all_dags) {
  const Cpdag target = dag_to_cpdag(g);
  std::vector<DirectedGraph> out;
  for (const auto& candidate : all_dags) {
    if (candidate.size() == g.size() && dag_to_cpdag(candidate) == target) {
      out.push_back(candidate);
    }
  }
  return out;
}

namespace {

int read_header(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("d=", 0) != 0) throw GraphError("edge list missing 'd=<n>' header");
    try {
      std::size_t used = 0;
      const int d = std::stoi(line.substr(2), &used);
      if (used != line.size() - 2) throw GraphError("malformed header '" + line + "'");
      return d;
    } catch (const std::logic_error&) {
      throw GraphError("malformed header '" + line + "'");
    }
  }
  throw GraphError("empty edge list");
}

}  // namespace

void write_edge_list(std::ostream& out, const DirectedGraph& g) {
  out << "d=" << g.size() << '\n';
  for (const auto& [from, to] : g.edges()) out << from << ' ' << to << '\n';
}

DirectedGraph read_edge_list(std::istream& in) {
  DirectedGraph g(read_header(in));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    int from = 0;
    int to = 0;
    std::string trailing;
    if (!(fields >> from >> to) || (fields >> trailing)) {
      throw GraphError("malformed edge line '" + line + "'");
    }
    g.add_edge(from, to);
  }
  return g;
}

void write_cpdag(std::ostream& out, const Cpdag& c) {
  out << "d=" << c.size() << '\n';
  for (int i = 0; i < c.size(); ++i) {
    for (int j = 0; j < c.size(); ++j) {
      if (c.has_directed(i, j)) out << i << " > " << j << '\n';
      if (i < j && c.has_undirected(i, j)) out << i << " - " << j << '\n';
    }
  }
}

Cpdag read_cpdag(std::istream& in) {
  Cpdag c(read_header(in));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    int a = 0;
    int b = 0;
    char kind = 0;
    std::string trailing;
    if (!(fields >> a >> kind >> b) || (fields >> trailing) || (kind != '>' && kind != '-') ||
        a < 0 || b < 0 || a >= c.size() || b >= c.size() || a == b) {
      throw GraphError("malformed CPDAG line '" + line + "'");
    }
    if (kind == '>') {
      c.set_directed(a, b);
    } else {
      c.set_undirected(a, b);
    }
  }
  return c;
}

std::string to_edge_list_string(const DirectedGraph& g) {
  std::ostringstream out;
  write_edge_list(out, g);
  return out.str();
}

DirectedGraph edge_list_from_string(const std::string& text) {
  std::istringstream in(text);
  return read_edge_list(in);
}

void save_edge_list(const std::string& path, const DirectedGraph& g) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_edge_list(out, g);
}

DirectedGraph load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_edge_list(in);
}

std::string compact_edges(const DirectedGraph& g) {
  std::string out;
  for (const auto& [from, to] : g.edges()) {
    if (!out.empty()) out += ';';
    out += std::to_string(from) + '>' + std::to_string(to);
  }
  return out;
}

}  // namespace acd
