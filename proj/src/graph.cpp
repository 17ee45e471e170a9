#include "cmst/graph.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <set>
#include <sstream>
#include <unordered_set>

#include "cmst/rng.hpp"

namespace cmst {

WeightedGraph WeightedGraph::single_node(std::uint64_t id) {
  WeightedGraph g;
  g.ids_.push_back(id);
  g.index_[id] = 0;
  g.adj_.resize(1);
  return g;
}

WeightedGraph::WeightedGraph(std::vector<WeightedEdge> edges) {
  if (edges.empty())
    throw StructureError("graph with no edges; use single_node for n=1");

  edges_ = std::move(edges);
  std::set<std::pair<std::uint64_t, std::uint64_t>> seen_pairs;
  std::set<WeightKey> seen_keys;
  for (const auto& e : edges_) {
    if (e.a == e.b) throw StructureError("self-loop on node " + std::to_string(e.a));
    auto pair = std::minmax(e.a, e.b);
    if (!seen_pairs.insert({pair.first, pair.second}).second)
      throw StructureError("duplicate edge " + std::to_string(e.a) + "-" +
                           std::to_string(e.b));
    if (!seen_keys.insert(e.key()).second)
      throw StructureError("duplicate weight key");
    for (auto v : {e.a, e.b}) {
      if (index_.emplace(v, ids_.size()).second) ids_.push_back(v);
    }
  }

  std::sort(ids_.begin(), ids_.end());
  for (std::size_t i = 0; i < ids_.size(); ++i) index_[ids_[i]] = i;

  adj_.resize(ids_.size());
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    adj_[index_[edges_[e].a]].push_back(e);
    adj_[index_[edges_[e].b]].push_back(e);
  }

  // Connectivity check.
  std::vector<char> seen(ids_.size(), 0);
  std::deque<std::size_t> work{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!work.empty()) {
    std::size_t v = work.front();
    work.pop_front();
    for (std::size_t e : adj_[v]) {
      std::size_t u = index_[edges_[e].other(ids_[v])];
      if (!seen[u]) {
        seen[u] = 1;
        ++reached;
        work.push_back(u);
      }
    }
  }
  if (reached != ids_.size()) throw StructureError("graph is not connected");
}

std::size_t WeightedGraph::index_of(std::uint64_t id) const {
  auto it = index_.find(id);
  if (it == index_.end())
    throw StructureError("unknown node id " + std::to_string(id));
  return it->second;
}

std::size_t WeightedGraph::port_edge(std::size_t node_idx, std::size_t port) const {
  if (port == 0 || port > adj_[node_idx].size())
    throw StructureError("port " + std::to_string(port) + " out of range");
  return adj_[node_idx][port - 1];
}

std::uint64_t WeightedGraph::neighbor_via(std::size_t node_idx,
                                          std::size_t port) const {
  return edges_[port_edge(node_idx, port)].other(ids_[node_idx]);
}

std::size_t WeightedGraph::port_of_edge(std::size_t node_idx,
                                        std::size_t edge_idx) const {
  const auto& inc = adj_[node_idx];
  for (std::size_t i = 0; i < inc.size(); ++i)
    if (inc[i] == edge_idx) return i + 1;
  throw StructureError("edge not incident to node");
}

std::vector<std::uint64_t> WeightedGraph::hop_distances_from(
    std::size_t node_idx) const {
  constexpr auto kInf = ~std::uint64_t{0};
  std::vector<std::uint64_t> dist(ids_.size(), kInf);
  std::deque<std::size_t> work{node_idx};
  dist[node_idx] = 0;
  while (!work.empty()) {
    std::size_t v = work.front();
    work.pop_front();
    for (std::size_t e : adj_[v]) {
      std::size_t u = index_.at(edges_[e].other(ids_[v]));
      if (dist[u] == kInf) {
        dist[u] = dist[v] + 1;
        work.push_back(u);
      }
    }
  }
  return dist;
}

DiameterEstimate WeightedGraph::hop_diameter(std::size_t exact_threshold) const {
  if (n() <= 1) return {0, true};
  if (n() <= exact_threshold) {
    std::uint64_t best = 0;
    for (std::size_t v = 0; v < n(); ++v) {
      auto d = hop_distances_from(v);
      best = std::max(best, *std::max_element(d.begin(), d.end()));
    }
    return {best, true};
  }
  // Double sweep from a few spread-out starts: lower bound, usually tight.
  std::uint64_t best = 0;
  std::size_t start = 0;
  for (int sweep = 0; sweep < 4; ++sweep) {
    auto d = hop_distances_from(start);
    auto far = std::max_element(d.begin(), d.end()) - d.begin();
    best = std::max(best, d[far]);
    start = static_cast<std::size_t>(far);
  }
  return {best, false};
}

// --- generators ------------------------------------------------------------

namespace {

std::vector<std::uint64_t> distinct_weights(std::size_t count, std::uint64_t hi,
                                            SplitMix64& rng) {
  std::unordered_set<std::uint64_t> used;
  std::vector<std::uint64_t> out;
  out.reserve(count);
  while (out.size() < count) {
    std::uint64_t w = rng.range(1, hi);
    if (used.insert(w).second) out.push_back(w);
  }
  return out;
}

}  // namespace

WeightedGraph generate_random_connected(std::size_t n, std::size_t m,
                                        std::uint64_t seed) {
  if (n == 0) throw ParamError("n must be positive");
  if (n == 1) {
    if (m != 0) throw ParamError("n=1 admits no edges");
    return WeightedGraph::single_node(0);
  }
  if (m < n - 1) throw ParamError("need m >= n-1 for connectivity");
  if (m > n * (n - 1) / 2) throw ParamError("m exceeds simple-graph maximum");

  SplitMix64 rng = derive_stream(seed, 0x67656e72616e64ull);

  // Random spanning tree: attach each node to a random earlier one under a
  // random ordering.
  std::vector<std::uint64_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);

  std::set<std::pair<std::uint64_t, std::uint64_t>> present;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
  pairs.reserve(m);
  for (std::size_t i = 1; i < n; ++i) {
    std::uint64_t u = order[i];
    std::uint64_t v = order[rng.below(i)];
    auto mm = std::minmax(u, v);
    present.insert({mm.first, mm.second});
    pairs.push_back({u, v});
  }
  while (pairs.size() < m) {
    std::uint64_t u = rng.below(n);
    std::uint64_t v = rng.below(n);
    if (u == v) continue;
    auto mm = std::minmax(u, v);
    if (!present.insert({mm.first, mm.second}).second) continue;
    pairs.push_back({u, v});
  }

  std::uint64_t wmax = static_cast<std::uint64_t>(n) * n * n;
  auto ws = distinct_weights(m, wmax, rng);
  std::vector<WeightedEdge> edges;
  edges.reserve(m);
  for (std::size_t i = 0; i < m; ++i)
    edges.push_back({pairs[i].first, pairs[i].second, ws[i]});
  return WeightedGraph(std::move(edges));
}

WeightedGraph generate_path(std::size_t n) {
  if (n == 0) throw ParamError("n must be positive");
  if (n == 1) return WeightedGraph::single_node(0);
  std::vector<WeightedEdge> edges;
  edges.reserve(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i)
    edges.push_back({i, i + 1, i + 1});
  return WeightedGraph(std::move(edges));
}

WeightedGraph generate_grid(std::size_t rows, std::size_t cols,
                            std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw ParamError("grid dimensions must be positive");
  if (rows * cols == 1) return WeightedGraph::single_node(0);
  SplitMix64 rng = derive_stream(seed, 0x67656e67726964ull);
  std::size_t m = rows * (cols - 1) + cols * (rows - 1);
  std::uint64_t n = rows * cols;
  auto ws = distinct_weights(m, n * n * n, rng);
  std::vector<WeightedEdge> edges;
  edges.reserve(m);
  std::size_t k = 0;
  auto id = [cols](std::size_t r, std::size_t c) { return r * cols + c; };
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      if (c + 1 < cols) edges.push_back({id(r, c), id(r, c + 1), ws[k++]});
      if (r + 1 < rows) edges.push_back({id(r, c), id(r + 1, c), ws[k++]});
    }
  return WeightedGraph(std::move(edges));
}

// --- serialization ---------------------------------------------------------

std::string serialize_graph(const WeightedGraph& g) {
  std::ostringstream out;
  out << g.n() << ' ' << g.m() << '\n';
  for (const auto& e : g.edges())
    out << e.a << ' ' << e.b << ' ' << e.w << '\n';
  return out.str();
}

WeightedGraph parse_graph(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0, m = 0;
  if (!(in >> n >> m)) throw StructureError("missing graph header");
  if (n == 1 && m == 0) return WeightedGraph::single_node(0);
  std::vector<WeightedEdge> edges;
  edges.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    WeightedEdge e;
    if (!(in >> e.a >> e.b >> e.w))
      throw StructureError("truncated edge list at line " + std::to_string(i + 2));
    edges.push_back(e);
  }
  WeightedGraph g(std::move(edges));
  if (g.n() != n)
    throw StructureError("header node count " + std::to_string(n) +
                         " does not match edge list (" + std::to_string(g.n()) + ")");
  return g;
}

}  // namespace cmst
