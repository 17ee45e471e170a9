#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cmst/graph.hpp"

namespace cmst {

struct UnionFind {
  std::vector<std::size_t> parent;
  std::vector<std::size_t> rank;

  explicit UnionFind(std::size_t n) : parent(n), rank(n, 0) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank[a] < rank[b]) std::swap(a, b);
    parent[b] = a;
    if (rank[a] == rank[b]) ++rank[a];
    return true;
  }
};

struct MstResult {
  std::vector<std::size_t> edge_indices;  // ascending indices into g.edges()
  std::uint64_t total_weight = 0;
  std::string source = "oracle";  // which producer built it: oracle | ghs | opt
};

// Sequential reference MST. Deterministic: ties cannot occur because weight
// keys are a total order.
MstResult kruskal(const WeightedGraph& g);

struct SpanningTreeCheck {
  bool ok = true;
  std::string reason;
};

// Checks edge count, connectivity/acyclicity of the candidate, and that the
// candidate is exactly the unique MST (cut-respecting via weight comparison).
SpanningTreeCheck verify_spanning_tree(const WeightedGraph& g,
                                       const std::vector<std::size_t>& edges);

}  // namespace cmst
