#include <algorithm>
#include <cmath>
#include <set>

#include "cmst/calibration.hpp"
#include "cmst/cover.hpp"
#include "cmst/graph.hpp"
#include "cmst/rng.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cmst;

namespace {

std::size_t port_to(const WeightedGraph& g, std::uint64_t from,
                    std::uint64_t to) {
  std::size_t idx = g.index_of(from);
  for (std::size_t p = 1; p <= g.degree_by_index(idx); ++p)
    if (g.neighbor_via(idx, p) == to) return p;
  FAIL("no port from ", from, " to ", to);
  return 0;
}

// single cluster holding every node, shaped as a breadth-first tree from root
Cover whole_graph_cover(const WeightedGraph& g, std::uint64_t root,
                        std::uint64_t radius, std::uint64_t kappa) {
  Cover cover;
  cover.radius = radius;
  cover.kappa = kappa;
  ClusterTree ct;
  ct.root = root;
  auto dist = g.hop_distances_from(g.index_of(root));
  ct.parent_port[root] = 0;
  for (std::size_t i = 0; i < g.n(); ++i) {
    std::uint64_t nid = g.id_of(i);
    if (nid == root) continue;
    // parent: any neighbor one hop closer to the root
    for (std::size_t p = 1; p <= g.degree_by_index(i); ++p) {
      std::uint64_t nb = g.neighbor_via(i, p);
      if (dist[g.index_of(nb)] + 1 == dist[i]) {
        ct.parent_port[nid] = p;
        ct.child_ports[nb].push_back(port_to(g, nb, nid));
        break;
      }
    }
    ct.depth = std::max(ct.depth, dist[i]);
  }
  for (auto& [nid, ports] : ct.child_ports)
    std::sort(ports.begin(), ports.end());
  cover.clusters.push_back(std::move(ct));
  cover.memberships.assign(g.n(), {0});
  return cover;
}

void rebuild_memberships(Cover& cover, const WeightedGraph& g) {
  cover.memberships.assign(g.n(), {});
  for (std::size_t c = 0; c < cover.clusters.size(); ++c)
    for (const auto& [nid, pp] : cover.clusters[c].parent_port)
      cover.memberships[g.index_of(nid)].push_back(c);
}

double message_budget(const WeightedGraph& g, std::uint64_t kappa) {
  double nd = static_cast<double>(g.n());
  return cal::kCoverMessages * static_cast<double>(g.m()) *
         static_cast<double>(kappa) *
         std::pow(nd, 1.0 / static_cast<double>(kappa)) *
         std::max(std::log2(nd), 1.0);
}

}  // namespace

TEST_CASE("budget helpers follow their formulas") {
  CHECK(cover_depth_budget(4, 3) == 24);
  CHECK(cover_depth_budget(1, 1) == 2);
  CHECK(cover_membership_budget(16, 2) == doctest::Approx(4.0 * 2 * 4 * 4));
  CHECK(cover_membership_budget(1, 5) == doctest::Approx(1.0));
}

TEST_CASE("a breadth-first tree over the whole graph is a valid cover when "
          "the graph has small diameter") {
  WeightedGraph g = generate_random_connected(6, 15, 3);  // complete
  Cover cover = whole_graph_cover(g, g.id_of(0), 1, 2);
  CoverReport rep = verify_cover(cover, g);
  CHECK(rep.depth.ok);
  CHECK(rep.sparsity.ok);
  CHECK(rep.neighborhood.ok);
  CHECK(rep.all_ok());

  // star: leaves hang off one hub, radius may even exceed the diameter
  std::vector<WeightedEdge> edges;
  for (std::uint64_t v = 1; v <= 5; ++v) edges.push_back({0, v, v});
  WeightedGraph star(edges);
  CHECK(verify_cover(whole_graph_cover(star, 0, 3, 1), star).all_ok());
}

TEST_CASE("verification rejects a stored depth that disagrees with the tree") {
  WeightedGraph g = generate_path(4);
  Cover cover = whole_graph_cover(g, 0, 1, 2);
  cover.clusters[0].depth = 1;  // really 3
  CoverReport rep = verify_cover(cover, g);
  CHECK_FALSE(rep.depth.ok);
  CHECK(rep.depth.detail.find("measured") != std::string::npos);
}

TEST_CASE("verification rejects child ports that are not the inverse of the "
          "parent ports") {
  WeightedGraph g = generate_path(3);
  Cover cover = whole_graph_cover(g, 0, 2, 1);
  cover.clusters[0].child_ports.clear();
  CHECK_FALSE(verify_cover(cover, g).depth.ok);
}

TEST_CASE("verification pinpoints the node whose ball no cluster contains") {
  WeightedGraph g = generate_path(5);
  Cover cover;
  cover.radius = 1;
  cover.kappa = 1;
  ClusterTree a;  // {0,1,2} rooted at 1
  a.id = 0;
  a.root = 1;
  a.parent_port = {{0, port_to(g, 0, 1)}, {1, 0}, {2, port_to(g, 2, 1)}};
  a.child_ports[1] = {port_to(g, 1, 0), port_to(g, 1, 2)};
  std::sort(a.child_ports[1].begin(), a.child_ports[1].end());
  a.depth = 1;
  ClusterTree b;  // {2,3,4} rooted at 3
  b.id = 1;
  b.root = 3;
  b.parent_port = {{2, port_to(g, 2, 3)}, {3, 0}, {4, port_to(g, 4, 3)}};
  b.child_ports[3] = {port_to(g, 3, 2), port_to(g, 3, 4)};
  std::sort(b.child_ports[3].begin(), b.child_ports[3].end());
  b.depth = 1;
  cover.clusters = {a, b};
  rebuild_memberships(cover, g);

  CoverReport rep = verify_cover(cover, g);
  CHECK(rep.depth.ok);
  CHECK(rep.sparsity.ok);
  // node 2's ball {1,2,3} straddles the two clusters
  CHECK_FALSE(rep.neighborhood.ok);
  CHECK(rep.neighborhood.detail.find("node 2") != std::string::npos);
  CHECK_FALSE(rep.all_ok());
}

TEST_CASE("deleting every cluster that holds a node's ball breaks the cover "
          "and the witness names that node") {
  WeightedGraph g = generate_random_connected(24, 48, 11);
  CoverResult res = compute_cover(g, 2, 9);
  REQUIRE(verify_cover(res.cover, g).all_ok());

  auto dist = g.hop_distances_from(0);
  std::set<std::uint64_t> ball;
  for (std::size_t u = 0; u < g.n(); ++u)
    if (dist[u] <= 2) ball.insert(g.id_of(u));
  Cover broken = res.cover;
  std::erase_if(broken.clusters, [&](const ClusterTree& ct) {
    return std::all_of(ball.begin(), ball.end(), [&](std::uint64_t b) {
      return ct.parent_port.count(b) != 0;
    });
  });
  REQUIRE(broken.clusters.size() < res.cover.clusters.size());
  rebuild_memberships(broken, g);

  CoverReport rep = verify_cover(broken, g);
  CHECK_FALSE(rep.neighborhood.ok);
  CHECK(rep.neighborhood.detail.find("node " + std::to_string(g.id_of(0))) !=
        std::string::npos);
}

TEST_CASE("constructed cover on a path keeps every two-hop ball inside one "
          "cluster") {
  WeightedGraph g = generate_path(9);
  CoverResult res = compute_cover(g, 2, 1, 2);
  CHECK(res.cover.kappa == 2);
  CHECK(verify_cover(res.cover, g).all_ok());

  // independent containment check, not through verify_cover
  for (std::uint64_t v = 0; v < 9; ++v) {
    std::set<std::uint64_t> ball;
    for (std::uint64_t u = 0; u < 9; ++u)
      if ((u > v ? u - v : v - u) <= 2) ball.insert(u);
    bool held = false;
    for (const auto& ct : res.cover.clusters) {
      if (!ct.parent_port.count(v)) continue;
      held = std::all_of(ball.begin(), ball.end(), [&](std::uint64_t b) {
        return ct.parent_port.count(b) != 0;
      });
      if (held) break;
    }
    CHECK(held);
    CHECK(res.cover.memberships[v].size() >= 1);
  }
  for (const auto& ct : res.cover.clusters)
    CHECK(ct.depth <= cover_depth_budget(2, 2));
}

TEST_CASE("constructed cover on a random graph meets all budgets") {
  WeightedGraph g = generate_random_connected(64, 128, 5);
  CoverResult res = compute_cover(g, 4, 5);
  CHECK(res.cover.kappa == 6);  // ceil(log2 64)
  CoverReport rep = verify_cover(res.cover, g);
  CHECK(rep.all_ok());
  INFO(rep.depth.detail, "; ", rep.sparsity.detail, "; ",
       rep.neighborhood.detail);
  std::size_t worst_mem = 0;
  for (const auto& ms : res.cover.memberships)
    worst_mem = std::max(worst_mem, ms.size());
  CHECK(static_cast<double>(worst_mem) <= cover_membership_budget(64, 6));
  CHECK(static_cast<double>(res.metrics.messages_total) <=
        message_budget(g, 6));
  CHECK(res.metrics.messages_by_tag.at("cover") == res.metrics.messages_total);
}

TEST_CASE("cover construction holds its properties across many random graphs") {
  SplitMix64 rng(4242);
  for (int t = 0; t < 50; ++t) {
    std::size_t n = 8 + rng.below(33);
    std::size_t m = std::min(n - 1 + rng.below(2 * n), n * (n - 1) / 2);
    std::uint64_t radius = 1 + rng.below(3);
    std::uint64_t kappa = rng.below(4);  // 0 picks the default
    WeightedGraph g = generate_random_connected(n, m, rng.next());
    CAPTURE(n);
    CAPTURE(m);
    CAPTURE(radius);
    CAPTURE(kappa);
    CoverResult res = compute_cover(g, radius, rng.next(), kappa);
    REQUIRE(res.attempts >= 1);
    CHECK(verify_cover(res.cover, g).all_ok());
    CHECK(static_cast<double>(res.metrics.messages_total) <=
          static_cast<double>(res.attempts) *
              message_budget(g, res.cover.kappa));
  }
}

TEST_CASE("cover construction is deterministic for a fixed seed") {
  WeightedGraph g = generate_random_connected(30, 70, 8);
  CoverResult a = compute_cover(g, 2, 123);
  CoverResult b = compute_cover(g, 2, 123);
  CHECK(cover_to_json(a.cover) == cover_to_json(b.cover));
  CHECK(a.metrics.messages_total == b.metrics.messages_total);
  CHECK(a.metrics.rounds == b.metrics.rounds);
  CHECK(a.attempts == b.attempts);
  CoverResult c = compute_cover(g, 2, 124);
  CHECK(cover_to_json(a.cover) != cover_to_json(c.cover));
}

TEST_CASE("cover of a single node is that node alone") {
  WeightedGraph g = WeightedGraph::single_node(42);
  CoverResult res = compute_cover(g, 3, 1);
  CHECK(res.cover.clusters.size() == 1);
  CHECK(res.cover.clusters[0].root == 42);
  CHECK(res.cover.clusters[0].depth == 0);
  CHECK(res.cover.memberships[0] == std::vector<std::size_t>{0});
  CHECK(res.metrics.messages_total == 0);
  CHECK(verify_cover(res.cover, g).all_ok());
}

TEST_CASE("zero radius is rejected") {
  WeightedGraph g = generate_path(4);
  CHECK_THROWS_AS(compute_cover(g, 0, 1), ParamError);
}

TEST_CASE("cover serialization carries every cluster") {
  WeightedGraph g = generate_path(6);
  CoverResult res = compute_cover(g, 1, 2);
  auto j = nlohmann::json::parse(cover_to_json(res.cover));
  CHECK(j["radius"] == 1);
  CHECK(j["clusters"].size() == res.cover.clusters.size());
  std::size_t total_nodes = 0;
  for (const auto& c : j["clusters"]) {
    CHECK(c.contains("root"));
    CHECK(c["nodes"].size() >= 1);
    total_nodes += c["nodes"].size();
  }
  std::size_t expect = 0;
  for (const auto& ct : res.cover.clusters) expect += ct.parent_port.size();
  CHECK(total_nodes == expect);
}
