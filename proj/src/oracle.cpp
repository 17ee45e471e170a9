#include "cmst/oracle.hpp"

#include <algorithm>

namespace cmst {

MstResult kruskal(const WeightedGraph& g) {
  std::vector<std::size_t> order(g.m());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return g.edge(a).key() < g.edge(b).key();
  });

  UnionFind uf(g.n());
  MstResult out;
  for (std::size_t e : order) {
    const auto& ed = g.edge(e);
    if (uf.unite(g.index_of(ed.a), g.index_of(ed.b))) {
      out.edge_indices.push_back(e);
      out.total_weight += ed.w;
    }
  }
  std::sort(out.edge_indices.begin(), out.edge_indices.end());
  return out;
}

SpanningTreeCheck verify_spanning_tree(const WeightedGraph& g,
                                       const std::vector<std::size_t>& edges) {
  auto fail = [](std::string why) { return SpanningTreeCheck{false, std::move(why)}; };

  if (g.n() == 1) {
    if (!edges.empty()) return fail("single node expects empty edge set");
    return {};
  }
  if (edges.size() != g.n() - 1)
    return fail("expected " + std::to_string(g.n() - 1) + " edges, got " +
                std::to_string(edges.size()));

  UnionFind uf(g.n());
  for (std::size_t e : edges) {
    if (e >= g.m()) return fail("edge index out of range");
    const auto& ed = g.edge(e);
    if (!uf.unite(g.index_of(ed.a), g.index_of(ed.b)))
      return fail("cycle through edge " + std::to_string(ed.a) + "-" +
                  std::to_string(ed.b));
  }
  // n-1 successful unions on n nodes == spanning tree; now confirm it is the
  // unique minimum one by comparing with the reference.
  auto ref = kruskal(g);
  std::vector<std::size_t> sorted(edges);
  std::sort(sorted.begin(), sorted.end());
  if (sorted != ref.edge_indices) {
    for (std::size_t e : sorted)
      if (!std::binary_search(ref.edge_indices.begin(), ref.edge_indices.end(), e)) {
        const auto& ed = g.edge(e);
        return fail("edge " + std::to_string(ed.a) + "-" + std::to_string(ed.b) +
                    " (w=" + std::to_string(ed.w) + ") is not in the minimum tree");
      }
    return fail("edge set differs from the minimum tree");
  }
  return {};
}

}  // namespace cmst
