#include "cmst/lb_graphs.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <queue>
#include <set>
#include <utility>

#include "cmst/rng.hpp"

namespace cmst {
namespace {

using u64 = std::uint64_t;
using Pair = std::pair<std::size_t, std::size_t>;

// Simple d-regular graph: circulant chords as a guaranteed-valid start,
// randomized by degree-preserving double-edge swaps and a node relabeling.
// Rejection-free, unlike stub pairing, so dense cores cannot stall.
std::vector<Pair> sample_regular(std::size_t size, std::size_t d,
                                 SplitMix64& rng) {
  std::set<Pair> es;
  auto norm = [](std::size_t a, std::size_t b) {
    return Pair{std::min(a, b), std::max(a, b)};
  };
  for (std::size_t v = 0; v < size; ++v) {
    for (std::size_t k = 1; k <= d / 2; ++k) es.insert(norm(v, (v + k) % size));
    if (d % 2) es.insert(norm(v, (v + size / 2) % size));
  }
  std::vector<Pair> edges(es.begin(), es.end());
  if (d >= 3 && d + 1 < size) {
    for (std::size_t t = 0; t < 10 * edges.size(); ++t) {
      auto& e1 = edges[rng.below(edges.size())];
      auto& e2 = edges[rng.below(edges.size())];
      auto [a, b] = e1;
      auto [c, f] = e2;
      if (rng.next() & 1) std::swap(c, f);
      if (a == c || a == f || b == c || b == f) continue;
      if (es.count(norm(a, f)) || es.count(norm(c, b))) continue;
      es.erase(e1);
      es.erase(e2);
      es.insert(norm(a, f));
      es.insert(norm(c, b));
      e1 = norm(a, f);
      e2 = norm(c, b);
    }
  }
  std::vector<std::size_t> perm(size);
  for (std::size_t v = 0; v < size; ++v) perm[v] = v;
  for (std::size_t i = 0; i + 1 < size; ++i)
    std::swap(perm[i], perm[i + rng.below(size - i)]);
  std::set<Pair> out;
  for (const auto& [a, b] : es) out.insert(norm(perm[a], perm[b]));
  return {out.begin(), out.end()};
}

bool core_is_compact(std::size_t size, const std::vector<Pair>& edges) {
  std::vector<std::vector<std::size_t>> adj(size);
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  const u64 cap =
      std::max<u64>(2, 2 * std::bit_width(size > 1 ? size - 1 : 1));
  for (std::size_t src = 0; src < size; ++src) {
    std::vector<u64> dist(size, ~0ull);
    std::queue<std::size_t> q;
    dist[src] = 0;
    q.push(src);
    while (!q.empty()) {
      std::size_t v = q.front();
      q.pop();
      for (std::size_t w : adj[v])
        if (dist[w] == ~0ull) {
          dist[w] = dist[v] + 1;
          q.push(w);
        }
    }
    for (std::size_t v = 0; v < size; ++v)
      if (dist[v] == ~0ull || dist[v] > cap) return false;
  }
  return true;
}

// Bridge edges of the assembled graph (iterative lowlink walk).
std::set<std::size_t> find_bridges(const WeightedGraph& g) {
  const std::size_t n = g.n();
  std::vector<u64> disc(n, 0), low(n, 0);
  std::set<std::size_t> bridges;
  u64 timer = 0;
  struct Frame {
    std::size_t v;
    std::size_t via_edge;
    std::size_t next = 0;
  };
  for (std::size_t root = 0; root < n; ++root) {
    if (disc[root]) continue;
    std::vector<Frame> stack{{root, static_cast<std::size_t>(-1)}};
    disc[root] = low[root] = ++timer;
    while (!stack.empty()) {
      Frame& f = stack.back();
      const auto& inc = g.incident_edges(f.v);
      if (f.next < inc.size()) {
        const std::size_t e = inc[f.next++];
        if (e == f.via_edge) continue;
        const std::size_t w = g.index_of(g.edge(e).other(g.id_of(f.v)));
        if (!disc[w]) {
          disc[w] = low[w] = ++timer;
          stack.push_back({w, e});
        } else {
          low[f.v] = std::min(low[f.v], disc[w]);
        }
      } else {
        if (stack.size() > 1) {
          Frame& parent = stack[stack.size() - 2];
          low[parent.v] = std::min(low[parent.v], low[f.v]);
          if (low[f.v] > disc[parent.v]) bridges.insert(f.via_edge);
        }
        stack.pop_back();
      }
    }
  }
  return bridges;
}

void validate(const LowerBoundParams& par) {
  if (par.p < 1 || par.L < 1 || par.D_target < 1)
    throw ParamError("p, L and D_target must all be at least 1");
  if (par.core_size < 2 || par.d_core < 1 || par.d_core >= par.core_size)
    throw ParamError("core needs 1 <= d_core < core_size and core_size >= 2");
  if (par.d_core * par.core_size % 2 != 0)
    throw ParamError("d_core * core_size must be even");
  if (par.weight_mode == WeightMode::kDisjointness &&
      (par.X.size() != par.p || par.Y.size() != par.p))
    throw ParamError("selector bit vectors must have one bit per slow path");
}

}  // namespace

HardInstance build_hard_graph(const LowerBoundParams& par) {
  validate(par);
  const std::size_t D = par.D_target, L = par.L, p = par.p;
  const u64 n_total = (D + 1) + p * (L + 1) + par.core_size;
  const bool disj = par.weight_mode == WeightMode::kDisjointness;
  if (disj && n_total > 65535)
    throw ParamError("instance too large for the sentinel weight");
  const u64 heavy = disj ? n_total : 1;
  const u64 sentinel = disj ? n_total * n_total * n_total * n_total : 1;

  const u64 B = par.id_base;
  auto hw = [&](std::size_t k) { return B + k; };
  auto sp = [&](std::size_t i, std::size_t j) {
    return B + (D + 1) + i * (L + 1) + j;
  };
  auto core = [&](std::size_t k) { return B + (D + 1) + p * (L + 1) + k; };

  SplitMix64 rng(hash_combine(par.seed, 0xc07e));
  for (int attempt = 0; attempt < 64; ++attempt) {
    const auto core_pairs = sample_regular(par.core_size, par.d_core, rng);
    if (!core_is_compact(par.core_size, core_pairs)) continue;

    std::vector<WeightedEdge> edges;
    std::set<std::pair<u64, u64>> pairs;
    auto add = [&](u64 a, u64 b, u64 w) {
      if (!pairs.insert({std::min(a, b), std::max(a, b)}).second) return false;
      edges.push_back({a, b, w});
      return true;
    };

    const std::size_t mid = D / 2;
    for (std::size_t k = 0; k < D; ++k)
      if (k != mid) add(hw(k), hw(k + 1), 1);
    add(hw(mid), core(0), 1);  // the split highway detours through the core
    add(hw(mid + 1), core(1), 1);
    std::vector<std::size_t> switch_edges;
    for (const auto& [a, b] : core_pairs) {
      switch_edges.push_back(edges.size());
      add(core(a), core(b), 1);
    }
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < L; ++j) add(sp(i, j), sp(i, j + 1), 1);
    const std::size_t sfirst = L >= 2 ? 1 : 0;
    const std::size_t tlast = L >= 2 ? L - 1 : L;
    for (std::size_t i = 0; i < p; ++i)
      add(hw(0), sp(i, sfirst), disj && par.X[i] ? heavy : 1);
    for (std::size_t i = 0; i < p; ++i)
      add(hw(D), sp(i, tlast), disj && par.Y[i] ? heavy : 1);
    // every interior slow-path node is tethered to its aligned highway node,
    // so hop distances track the highway while the weights keep these spokes
    // out of the tree
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 1; j < L; ++j) add(sp(i, j), hw(j * D / L), sentinel);

    HardInstance inst{WeightedGraph(std::move(edges)), std::move(switch_edges),
                      hw(0), hw(D), par};
    const auto bridges = find_bridges(inst.graph);
    const bool removable = std::none_of(
        inst.switch_edges.begin(), inst.switch_edges.end(),
        [&](std::size_t e) { return bridges.count(e) != 0; });
    if (removable) return inst;
  }
  throw ParamError("no core sample kept every switch edge removable");
}

std::vector<OpenGraph> enumerate_open_graphs(const HardInstance& inst,
                                             std::size_t limit,
                                             std::uint64_t seed) {
  std::vector<std::size_t> pool = inst.switch_edges;
  SplitMix64 rng(hash_combine(seed, 0x09e7));
  for (std::size_t i = 0; i + 1 < pool.size(); ++i)
    std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  pool.resize(std::min(limit, pool.size()));

  std::vector<OpenGraph> out;
  for (std::size_t removed : pool) {
    const WeightedEdge e = inst.graph.edge(removed);
    std::vector<WeightedEdge> rest;
    rest.reserve(inst.graph.m() - 1);
    for (std::size_t i = 0; i < inst.graph.m(); ++i)
      if (i != removed) rest.push_back(inst.graph.edge(i));
    OpenGraph og{WeightedGraph(std::move(rest)), e,
                 {e.a, inst.graph.port_of_edge(inst.graph.index_of(e.a), removed)},
                 {e.b, inst.graph.port_of_edge(inst.graph.index_of(e.b), removed)}};
    out.push_back(std::move(og));
  }
  return out;
}

WeightedGraph dumbbell(const OpenGraph& g1, const OpenGraph& g2) {
  for (u64 id : g2.base.node_ids())
    if (g1.base.has_node(id))
      throw ParamError("dumbbell halves must use disjoint node ids");

  // Each stub must see its bridge on the port the removed edge occupied.
  // Ports follow edge-list order, so list the first (port-1) incident edges
  // of every stub ahead of the bridges and everything else after.
  auto mark = [](const WeightedGraph& b, const OpenStub& stub,
                 std::set<std::size_t>& early) {
    const std::size_t idx = b.index_of(stub.node);
    for (std::size_t port = 1; port < stub.port; ++port)
      early.insert(b.port_edge(idx, port));
  };
  std::set<std::size_t> early1, early2;
  mark(g1.base, g1.stub_a, early1);
  mark(g1.base, g1.stub_b, early1);
  mark(g2.base, g2.stub_a, early2);
  mark(g2.base, g2.stub_b, early2);

  std::vector<WeightedEdge> edges;
  for (std::size_t e : early1) edges.push_back(g1.base.edge(e));
  for (std::size_t e : early2) edges.push_back(g2.base.edge(e));
  edges.push_back({g1.stub_a.node, g2.stub_a.node, g1.removed.w});
  edges.push_back({g1.stub_b.node, g2.stub_b.node, g2.removed.w});
  for (std::size_t e = 0; e < g1.base.m(); ++e)
    if (!early1.count(e)) edges.push_back(g1.base.edge(e));
  for (std::size_t e = 0; e < g2.base.m(); ++e)
    if (!early2.count(e)) edges.push_back(g2.base.edge(e));
  return WeightedGraph(std::move(edges));
}

}  // namespace cmst
