#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace cmst {

// Bad generator/operation parameters (e.g. requesting m < n-1 edges).
struct ParamError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed graph structure (duplicate edge, unknown endpoint, disconnected, ...).
struct StructureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Total order on edge weights: numeric value first, endpoint id pair as a
// tie-break. This keeps the minimum spanning tree unique even if a caller
// supplies colliding numeric weights. Generators always produce distinct
// numerics, so protocols that compare keys see pure weight comparisons there.
struct WeightKey {
  std::uint64_t numeric = 0;
  std::uint64_t lo = 0;  // smaller endpoint id
  std::uint64_t hi = 0;  // larger endpoint id

  friend auto operator<=>(const WeightKey&, const WeightKey&) = default;
};

struct WeightedEdge {
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::uint64_t w = 0;

  WeightKey key() const {
    return WeightKey{w, a < b ? a : b, a < b ? b : a};
  }
  std::uint64_t other(std::uint64_t v) const { return v == a ? b : a; }

  friend bool operator==(const WeightedEdge&, const WeightedEdge&) = default;
};

struct DiameterEstimate {
  std::uint64_t value = 0;
  bool exact = true;
};

// Connected undirected simple graph with distinct weight keys and a port
// numbering: each node locally numbers its incident edges 1..deg in the order
// they appear in the edge list. Node ids are arbitrary 64-bit values.
class WeightedGraph {
 public:
  // Single isolated node (the only legal graph with no edges).
  static WeightedGraph single_node(std::uint64_t id);

  // Validates simplicity, distinct keys and connectivity.
  explicit WeightedGraph(std::vector<WeightedEdge> edges);

  std::size_t n() const { return ids_.size(); }
  std::size_t m() const { return edges_.size(); }

  const std::vector<std::uint64_t>& node_ids() const { return ids_; }
  const std::vector<WeightedEdge>& edges() const { return edges_; }
  const WeightedEdge& edge(std::size_t e) const { return edges_[e]; }

  bool has_node(std::uint64_t id) const { return index_.count(id) != 0; }
  std::size_t index_of(std::uint64_t id) const;
  std::uint64_t id_of(std::size_t idx) const { return ids_[idx]; }

  std::size_t degree_by_index(std::size_t idx) const { return adj_[idx].size(); }
  std::size_t degree(std::uint64_t id) const { return adj_[index_of(id)].size(); }

  // Ports are 1-based. port_edge gives the global edge index behind a port.
  std::size_t port_edge(std::size_t node_idx, std::size_t port) const;
  std::uint64_t neighbor_via(std::size_t node_idx, std::size_t port) const;
  // Port at which `node` sees `edge` (every edge appears in both port maps).
  std::size_t port_of_edge(std::size_t node_idx, std::size_t edge_idx) const;

  const std::vector<std::size_t>& incident_edges(std::size_t node_idx) const {
    return adj_[node_idx];
  }

  // Hop diameter, ignoring weights. Exact via all-sources BFS up to
  // `exact_threshold` nodes; above that a sampled double-sweep lower bound is
  // returned and flagged as inexact.
  DiameterEstimate hop_diameter(std::size_t exact_threshold = 4096) const;

  // Hop distances from one node to all others (BFS).
  std::vector<std::uint64_t> hop_distances_from(std::size_t node_idx) const;

 private:
  WeightedGraph() = default;

  std::vector<std::uint64_t> ids_;                      // sorted ascending
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::vector<WeightedEdge> edges_;                     // file/insertion order
  std::vector<std::vector<std::size_t>> adj_;           // node idx -> edge idx per port-1
};

// --- generators ------------------------------------------------------------

// Connected random graph: random spanning tree plus random extra edges,
// distinct weights drawn from [1, n^3]. Throws ParamError on infeasible n/m.
WeightedGraph generate_random_connected(std::size_t n, std::size_t m,
                                        std::uint64_t seed);

// Path v0-v1-...-v{n-1} with weights 1..n-1 in order.
WeightedGraph generate_path(std::size_t n);

// rows x cols grid, ids row-major, distinct weights.
WeightedGraph generate_grid(std::size_t rows, std::size_t cols,
                            std::uint64_t seed);

// --- serialization ---------------------------------------------------------

// Text format: header "n m", then one "u v w" line per edge in port order.
std::string serialize_graph(const WeightedGraph& g);
WeightedGraph parse_graph(const std::string& text);

}  // namespace cmst
