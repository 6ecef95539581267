#ifndef ACD_GRAPH_HPP_
#define ACD_GRAPH_HPP_

#include <bit>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace acd {

/// Bitmask over node indices; bit i set means node i is a member.
using NodeMask = std::uint32_t;

inline constexpr int kMaxNodes = 30;
inline constexpr int kDefaultEnumerationLimit = 5;

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A child variable together with its conditioning set.
struct ParentSet {
  int child = 0;
  NodeMask parents = 0;

  std::vector<int> parent_list() const;
  bool operator==(const ParentSet&) const = default;
};

/// Binary adjacency structure on d nodes, stored as one parent mask per node.
/// Entry (i, j) set means the edge i -> j.
class DirectedGraph {
 public:
  DirectedGraph() = default;
  explicit DirectedGraph(int d);
  static DirectedGraph from_edges(int d, const std::vector<std::pair<int, int>>& edges);
  static DirectedGraph from_parent_masks(std::vector<NodeMask> parents);

  int size() const { return static_cast<int>(parents_.size()); }
  bool has_edge(int from, int to) const { return (parents_[to] >> from) & 1U; }
  void add_edge(int from, int to);
  void remove_edge(int from, int to);

  NodeMask parents(int node) const { return parents_[node]; }
  NodeMask children(int node) const;
  const std::vector<NodeMask>& parent_masks() const { return parents_; }

  int edge_count() const;
  std::vector<std::pair<int, int>> edges() const;

  bool operator==(const DirectedGraph&) const = default;
  bool operator<(const DirectedGraph& other) const { return parents_ < other.parents_; }

 private:
  void check_pair(int from, int to) const;

  std::vector<NodeMask> parents_;
};

/// Partially directed graph representing a Markov equivalence class.
class Cpdag {
 public:
  Cpdag() = default;
  explicit Cpdag(int d);

  int size() const { return static_cast<int>(directed_parents_.size()); }

  bool has_directed(int from, int to) const { return (directed_parents_[to] >> from) & 1U; }
  bool has_undirected(int a, int b) const { return (neighbors_[a] >> b) & 1U; }
  bool adjacent(int a, int b) const {
    return has_directed(a, b) || has_directed(b, a) || has_undirected(a, b);
  }

  void set_directed(int from, int to);
  void set_undirected(int a, int b);

  NodeMask directed_parents(int node) const { return directed_parents_[node]; }
  NodeMask neighbors(int node) const { return neighbors_[node]; }

  bool operator==(const Cpdag&) const = default;

 private:
  std::vector<NodeMask> directed_parents_;
  std::vector<NodeMask> neighbors_;
};

bool is_acyclic(const DirectedGraph& g);

/// Kahn order (smallest ready index first). Throws GraphError on a cycle.
std::vector<int> topological_order(const DirectedGraph& g);

/// Every labelled DAG on d nodes, each exactly once, in ascending
/// parent-mask order. Rejects d above max_d.
std::vector<DirectedGraph> enumerate_all_dags(int d, int max_d = kDefaultEnumerationLimit);

/// CPDAG of the Markov equivalence class of g: skeleton, v-structures, then
/// Meek rules R1-R4 applied to closure.
Cpdag dag_to_cpdag(const DirectedGraph& g);

/// Structural Hamming distance: one unit per node pair whose edge status
/// (absent, i->j, j->i, undirected) differs.
int shd_cpdag(const Cpdag& a, const Cpdag& b);

/// Members of all_dags whose CPDAG equals that of g.
std::vector<DirectedGraph> mec_of(const DirectedGraph& g,
                                  const std::vector<DirectedGraph>& all_dags);

// Edge-list text format: header "d=<n>", then one "i j" line per edge.
// CPDAGs write "i > j" for directed and "i - j" for undirected edges.
void write_edge_list(std::ostream& out, const DirectedGraph& g);
DirectedGraph read_edge_list(std::istream& in);
void write_cpdag(std::ostream& out, const Cpdag& c);
Cpdag read_cpdag(std::istream& in);

std::string to_edge_list_string(const DirectedGraph& g);
DirectedGraph edge_list_from_string(const std::string& text);
void save_edge_list(const std::string& path, const DirectedGraph& g);
DirectedGraph load_edge_list(const std::string& path);

/// Compact single-line form "0>1;1>2", used inside CSV dumps.
std::string compact_edges(const DirectedGraph& g);

inline int popcount(NodeMask m) { return std::popcount(m); }

}  // namespace acd

#endif  // ACD_GRAPH_HPP_
