#include "cmst/opt_mst.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cmst/calibration.hpp"
#include "cmst/controlled_ghs.hpp"
#include "cmst/oracle.hpp"
#include "cmst/rng.hpp"
#include "doctest.h"
#include "reference.hpp"

using namespace cmst;

namespace {

// Checks that down is the exact reverse of up at every node, for every
// (fragment, level) key, and that up chains are acyclic.
void audit_routing(const WeightedGraph& g,
                   const std::vector<RoutingTable>& routing) {
  for (std::size_t u = 0; u < g.n(); ++u) {
    for (const auto& [key, p] : routing[u].up) {
      const std::size_t w = g.index_of(g.neighbor_via(u, p));
      const std::size_t e = g.port_edge(u, p);
      const std::size_t back = g.port_of_edge(w, e);
      auto dn = routing[w].down.find(key);
      REQUIRE(dn != routing[w].down.end());
      CHECK(dn->second.count(back) == 1);
    }
    for (const auto& [key, ports] : routing[u].down) {
      for (std::size_t p : ports) {
        const std::size_t w = g.index_of(g.neighbor_via(u, p));
        const std::size_t e = g.port_edge(u, p);
        const std::size_t back = g.port_of_edge(w, e);
        auto up = routing[w].up.find(key);
        REQUIRE(up != routing[w].up.end());
        CHECK(up->second == back);
      }
    }
  }
  // every up chain terminates within n hops at a node with no up entry
  for (std::size_t u = 0; u < g.n(); ++u) {
    for (const auto& [key, p0] : routing[u].up) {
      std::size_t cur = u, hops = 0;
      while (hops <= g.n()) {
        auto it = routing[cur].up.find(key);
        if (it == routing[cur].up.end()) break;
        cur = g.index_of(g.neighbor_via(cur, it->second));
        ++hops;
      }
      CHECK(hops <= g.n());
    }
  }
}

std::uint64_t other_fragment(const WeightedGraph& g,
                             const GrowthIteration& rec, std::uint64_t frag) {
  const auto& ed = g.edge(rec.proposal.at(frag));
  const std::uint64_t fa = rec.fragment_before[g.index_of(ed.a)];
  const std::uint64_t fb = rec.fragment_before[g.index_of(ed.b)];
  return fa == frag ? fb : fa;
}

}  // namespace

TEST_CASE("growth iteration count follows the diameter ratio") {
  CHECK(growth_iterations(0, 16) == 1);
  CHECK(growth_iterations(4, 16) == 1);   // ratio exactly 1
  CHECK(growth_iterations(5, 16) == 1);   // ratio 1.25 rounds up to 1
  CHECK(growth_iterations(9, 16) == 2);   // ratio 2.25
  CHECK(growth_iterations(63, 16) == 4);  // ratio 15.75
  CHECK(growth_iterations(64, 16) == 4);  // ratio exactly 16
  CHECK(growth_iterations(2046, 1024) == 6);
  CHECK_THROWS_AS(growth_iterations(4, 0), ParamError);
}

TEST_CASE("cluster radius doubles per level and clamps at the diameter bound") {
  CHECK(growth_cluster_radius(1, 4, 1000, 1.0) == 96);
  CHECK(growth_cluster_radius(2, 4, 1000, 1.0) == 192);
  CHECK(growth_cluster_radius(3, 4, 100, 1.0) == 100);  // clamped
  CHECK(growth_cluster_radius(1, 4, 0, 1.0) == 1);      // degenerate estimate
  for (std::uint64_t lvl = 1; lvl < 6; ++lvl)
    CHECK(growth_cluster_radius(lvl + 1, 7, 1u << 30, 1.0) ==
          2 * growth_cluster_radius(lvl, 7, 1u << 30, 1.0));
}

TEST_CASE("a singleton fragment has a leader and empty tables") {
  auto g = generate_path(3);  // ids 0,1,2
  MstForest forest;
  forest.fragment = {0, 1, 2};
  forest.parent_port = {0, 0, 0};
  auto p1 = init_phase1(g, forest, RunOptions{});
  for (const auto& rt : p1.routing) {
    CHECK(rt.up.empty());
    CHECK(rt.down.empty());
  }
}

TEST_CASE("a path fragment of four nodes routes up to the leader at the end") {
  auto g = generate_path(4);  // ids 0-1-2-3, leader 0 at one end
  MstForest forest;
  forest.fragment = {0, 0, 0, 0};
  forest.parent_port = {0, 0, 0, 0};
  forest.tree_edges = {0, 1, 2};
  auto p1 = init_phase1(g, forest, RunOptions{});
  const RoutingTable::Key key{0, 1};

  CHECK(p1.routing[g.index_of(0)].up.count(key) == 0);
  std::size_t cur = g.index_of(3), hops = 0;
  while (p1.routing[cur].up.count(key)) {
    cur = g.index_of(g.neighbor_via(cur, p1.routing[cur].up.at(key)));
    ++hops;
  }
  CHECK(hops == 3);
  CHECK(cur == g.index_of(0));
  CHECK(p1.routing[g.index_of(0)].down.at(key).size() == 1);
  CHECK(p1.routing[g.index_of(1)].down.at(key).size() == 1);
  CHECK(p1.routing[g.index_of(2)].down.at(key).size() == 1);
  CHECK(p1.routing[g.index_of(3)].down.count(key) == 0);
  audit_routing(g, p1.routing);
}

TEST_CASE("overlay tables are exact reverses on a random graph's base forest") {
  auto g = generate_random_connected(64, 160, 5);
  auto ghs = controlled_ghs(g, RunOptions{});
  auto p1 = init_phase1(g, ghs.forest, RunOptions{});
  audit_routing(g, p1.routing);
  // every member's chain ends at its fragment leader
  for (std::size_t u = 0; u < g.n(); ++u) {
    const std::uint64_t frag = ghs.forest.fragment[u];
    const RoutingTable::Key key{frag, 1};
    std::size_t cur = u;
    while (p1.routing[cur].up.count(key))
      cur = g.index_of(g.neighbor_via(cur, p1.routing[cur].up.at(key)));
    CHECK(g.id_of(cur) == frag);
  }
  CHECK(p1.metrics.messages_by_tag.count("phase1") == 1);
  CHECK(p1.metrics.messages_by_tag.size() == 1);
}

TEST_CASE("forest inputs that do not fit the graph are rejected") {
  auto g = generate_path(4);
  MstForest bad;
  bad.fragment = {1, 1};  // wrong size
  bad.parent_port = {0, 0};
  CHECK_THROWS_AS(init_phase1(g, bad, RunOptions{}), ParamError);
  MstForest bad2;
  bad2.fragment = {1, 1, 1, 1};
  bad2.parent_port = {0, 0, 0, 0};
  bad2.tree_edges = {17};
  CHECK_THROWS_AS(init_phase1(g, bad2, RunOptions{}), ParamError);
}

TEST_CASE("diameter estimate is a two-approximation") {
  SUBCASE("path of five") {
    auto d = estimate_diameter(generate_path(5), RunOptions{});
    CHECK(d.dtilde >= 4);
    CHECK(d.dtilde <= 8);
    CHECK(d.leader == 4);  // max id wins (path ids are 0..4)
  }
  SUBCASE("complete graph on four nodes") {
    WeightedGraph g({{1, 2, 1},
                     {1, 3, 2},
                     {1, 4, 3},
                     {2, 3, 4},
                     {2, 4, 5},
                     {3, 4, 6}});
    auto d = estimate_diameter(g, RunOptions{});
    CHECK(d.dtilde >= 1);
    CHECK(d.dtilde <= 2);
  }
  SUBCASE("random graph against the exact oracle") {
    auto g = generate_random_connected(64, 200, 1);
    const std::uint64_t exact = g.hop_diameter().value;
    auto d = estimate_diameter(g, RunOptions{});
    CHECK(d.dtilde >= exact);
    CHECK(d.dtilde <= 2 * exact);
    CHECK(d.metrics.messages_by_tag.count("elect") == 1);
    CHECK(d.metrics.messages_by_tag.size() == 1);
    // parent ports describe a tree rooted at the leader
    std::size_t roots = 0;
    for (std::size_t i = 0; i < g.n(); ++i)
      if (d.bfs_parent_port[i] == 0) {
        ++roots;
        CHECK(g.id_of(i) == d.leader);
      }
    CHECK(roots == 1);
  }
  SUBCASE("single node") {
    auto d = estimate_diameter(WeightedGraph::single_node(9), RunOptions{});
    CHECK(d.dtilde == 0);
    CHECK(d.leader == 9);
  }
}

TEST_CASE("lightest outgoing edges reported in the trace match brute force") {
  auto g = generate_path(128);
  auto r = run_opt_mst(g, AlgoConfig{}, 7, RunOptions{});
  REQUIRE(!r.trace.growth.empty());
  auto mst = kruskal(g);
  std::set<std::size_t> mst_set(mst.edge_indices.begin(),
                                mst.edge_indices.end());
  for (const auto& rec : r.trace.growth) {
    for (const auto& [frag, e] : rec.proposal) {
      std::vector<char> mask(g.n(), 0);
      for (std::size_t i = 0; i < g.n(); ++i)
        if (rec.fragment_before[i] == frag) mask[i] = 1;
      auto loe = lightest_outgoing_edge_of_component(g, mask);
      REQUIRE(loe.has_value());
      CHECK(*loe == e);
      CHECK(mst_set.count(e) == 1);  // every proposal obeys the cut property
    }
  }
}

TEST_CASE("five-clique cut minima match enumeration and survive the pipeline") {
  // complete graph on ids 1..5 with weights 1..10
  std::vector<WeightedEdge> es;
  std::uint64_t w = 1;
  for (std::uint64_t a = 1; a <= 5; ++a)
    for (std::uint64_t b = a + 1; b <= 5; ++b) es.push_back({a, b, w++});
  WeightedGraph g(es);
  auto lo = ref::brute_force_cut_min(g, {1, 2});
  auto hi = ref::brute_force_cut_min(g, {3, 4, 5});
  REQUIRE(lo.has_value());
  REQUIRE(hi.has_value());
  CHECK(*lo == 1);  // the (1,3) edge of weight 2
  CHECK(*lo == *hi);

  auto r = run_opt_mst(g, AlgoConfig{}, 3, RunOptions{});
  CHECK(r.mst.edge_indices == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(r.mst.total_weight == 10);
  CHECK(std::count(r.mst.edge_indices.begin(), r.mst.edge_indices.end(), *lo) ==
        1);
}

TEST_CASE("joint cover levels found by probing match the offline search") {
  for (std::size_t n : {64, 200}) {
    auto g = generate_path(n);
    auto r = run_opt_mst(g, AlgoConfig{}, 11, RunOptions{});
    REQUIRE(!r.trace.growth.empty());
    std::size_t checked = 0;
    for (const auto& rec : r.trace.growth) {
      std::vector<Cover> prefix(r.trace.covers.begin(),
                                r.trace.covers.begin() + rec.iteration);
      for (const auto& [frag, lvl] : rec.success_level) {
        const std::uint64_t tgt = other_fragment(g, rec, frag);
        auto offline = smallest_joint_cover_level(prefix, frag, tgt);
        REQUIRE(offline.has_value());
        CHECK(*offline == lvl);
        ++checked;
      }
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("matchings over the proposal graph are maximal") {
  auto g = generate_path(128);
  auto r = run_opt_mst(g, AlgoConfig{}, 7, RunOptions{});
  REQUIRE(!r.trace.growth.empty());
  std::size_t games = 0;
  for (const auto& rec : r.trace.growth) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> game_edges;
    for (const auto& [frag, e] : rec.proposal) {
      const std::uint64_t tgt = other_fragment(g, rec, frag);
      if (rec.active.at(frag) && rec.active.count(tgt) &&
          rec.active.at(tgt)) {
        auto pr = std::minmax(frag, tgt);
        game_edges.push_back({pr.first, pr.second});
      }
    }
    std::sort(game_edges.begin(), game_edges.end());
    game_edges.erase(std::unique(game_edges.begin(), game_edges.end()),
                     game_edges.end());
    if (game_edges.empty()) continue;
    ++games;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> matching;
    for (auto [p, t] : rec.matched_pairs) matching.push_back(std::minmax(p, t));
    CHECK(ref::is_maximal_matching(game_edges, matching));
  }
  CHECK(games > 0);
}

TEST_CASE("one matched pair collapses into the dominator") {
  WeightedGraph g({{1, 2, 5}});
  std::map<std::uint64_t, std::size_t> prop{{1, 0}, {2, 0}};
  std::map<std::uint64_t, bool> act{{1, true}, {2, true}};
  auto step = guarded_merge_step(g, {1, 2}, prop, act);
  CHECK(step.fragment == std::vector<std::uint64_t>{2, 2});
  CHECK(step.matched_pairs.size() == 1);
  CHECK(step.forced.empty());
  CHECK(step.added_edges == std::vector<std::size_t>{0});
}

TEST_CASE("a star of three requesters collapses onto the dominator") {
  WeightedGraph g({{10, 1, 1}, {10, 2, 2}, {10, 3, 3}});
  std::vector<std::uint64_t> frag(g.n());
  for (std::size_t i = 0; i < g.n(); ++i) frag[i] = g.id_of(i);
  std::map<std::uint64_t, std::size_t> prop{{1, 0}, {2, 1}, {3, 2}, {10, 0}};
  std::map<std::uint64_t, bool> act{
      {1, true}, {2, true}, {3, true}, {10, true}};
  auto step = guarded_merge_step(g, frag, prop, act);
  for (std::uint64_t f : step.fragment) CHECK(f == 10);
  CHECK(step.matched_pairs.size() == 1);
  CHECK(step.forced.size() == 2);
  CHECK(step.added_edges == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("a proposal chain of three fragments matches once and forces once") {
  auto g = generate_path(3);  // ids 0-1-2, edges (0,1) and (1,2)
  const std::size_t lighter = g.edge(0).w < g.edge(1).w ? 0 : 1;
  std::map<std::uint64_t, std::size_t> prop{{0, 0}, {1, lighter}, {2, 1}};
  std::map<std::uint64_t, bool> act{{0, true}, {1, true}, {2, true}};
  auto step = guarded_merge_step(g, {0, 1, 2}, prop, act);
  CHECK(step.matched_pairs.size() == 1);
  CHECK(step.forced.size() == 1);
  CHECK(step.added_edges == std::vector<std::size_t>{0, 1});
  CHECK(std::set<std::uint64_t>(step.fragment.begin(), step.fragment.end())
            .size() == 1);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> game{{0, 1}, {1, 2}};
  std::vector<std::pair<std::uint64_t, std::uint64_t>> matching;
  for (auto [p, t] : step.matched_pairs) matching.push_back(std::minmax(p, t));
  CHECK(ref::is_maximal_matching(game, matching));
}

TEST_CASE("an inactive fragment absorbs a requester without renaming itself") {
  auto g = generate_path(4);
  // fragments {1,2} (id 1) and {3,4} (id 3); only the first is active
  std::vector<std::uint64_t> frag{1, 1, 3, 3};
  std::map<std::uint64_t, std::size_t> prop{{1, 1}};  // the (2,3) edge
  std::map<std::uint64_t, bool> act{{1, true}, {3, false}};
  auto step = guarded_merge_step(g, frag, prop, act);
  CHECK(step.fragment == std::vector<std::uint64_t>{3, 3, 3, 3});
  CHECK(step.matched_pairs.empty());
  CHECK(step.forced == std::vector<std::uint64_t>{1});
  CHECK(step.added_edges == std::vector<std::size_t>{1});

  SUBCASE("no active fragments means an identity step") {
    std::map<std::uint64_t, bool> none{{1, false}, {3, false}};
    auto idle = guarded_merge_step(g, frag, prop, none);
    CHECK(idle.fragment == frag);
    CHECK(idle.matched_pairs.empty());
    CHECK(idle.forced.empty());
    CHECK(idle.added_edges.empty());
  }
}

TEST_CASE("merge step rejects malformed proposals") {
  auto g = generate_path(3);
  CHECK_THROWS_AS(guarded_merge_step(g, {1, 2}, {}, {}), ParamError);
  CHECK_THROWS_AS(
      guarded_merge_step(g, {1, 2, 3}, {{1, 99}}, {{1, true}}), ParamError);
  // both endpoints of edge 1 live in fragment 3
  CHECK_THROWS_AS(
      guarded_merge_step(g, {1, 3, 3}, {{3, 1}}, {{3, true}}), ParamError);
}

TEST_CASE("label counts at the root at least halve each global iteration") {
  for (auto [n, m, seed] :
       {std::tuple<std::size_t, std::size_t, std::uint64_t>{256, 1024, 5},
        {200, 400, 12},
        {256, 700, 9}}) {
    auto g = generate_random_connected(n, m, seed);
    auto r = run_opt_mst(g, AlgoConfig{}, 3, RunOptions{});
    const auto& counts = r.trace.label_counts;
    REQUIRE(!counts.empty());
    CHECK(counts.back() == 1);
    CHECK(r.trace.phase3_iterations == counts.size());
    for (std::size_t i = 0; i + 1 < counts.size(); ++i)
      CHECK(2 * counts[i + 1] <= counts[i]);
  }
}

TEST_CASE("a lone surviving fragment ends the global stage in one iteration") {
  auto g = generate_path(8);
  auto r = run_opt_mst(g, AlgoConfig{}, 7, RunOptions{});
  CHECK(r.trace.label_counts == std::vector<std::size_t>{1});
  CHECK(r.trace.phase3_iterations == 1);
}

TEST_CASE("two blobs joined by bridges keep only the lightest bridge") {
  std::vector<WeightedEdge> es;
  std::uint64_t w = 1;
  for (std::uint64_t a = 1; a <= 4; ++a)
    for (std::uint64_t b = a + 1; b <= 4; ++b) es.push_back({a, b, w++});
  for (std::uint64_t a = 5; a <= 8; ++a)
    for (std::uint64_t b = a + 1; b <= 8; ++b) es.push_back({a, b, w++});
  es.push_back({4, 5, 100});  // the cheapest bridge
  es.push_back({3, 6, 101});
  es.push_back({2, 7, 102});
  WeightedGraph g(es);

  auto cut = ref::brute_force_cut_min(g, {1, 2, 3, 4});
  REQUIRE(cut.has_value());
  CHECK(g.edge(*cut).w == 100);

  auto r = run_opt_mst(g, AlgoConfig{}, 2, RunOptions{});
  CHECK(r.mst.edge_indices == kruskal(g).edge_indices);
  std::set<std::size_t> in(r.mst.edge_indices.begin(),
                           r.mst.edge_indices.end());
  CHECK(in.count(*cut) == 1);
  CHECK(in.count(13) == 0);  // heavier bridges dropped
  CHECK(in.count(14) == 0);
}

TEST_CASE("trees come back whole and the triangle drops its heaviest edge") {
  SUBCASE("path") {
    auto g = generate_path(6);
    auto r = run_opt_mst(g, AlgoConfig{}, 1, RunOptions{});
    CHECK(r.mst.edge_indices == std::vector<std::size_t>{0, 1, 2, 3, 4});
  }
  SUBCASE("star") {
    WeightedGraph g({{7, 1, 4}, {7, 2, 9}, {7, 3, 1}, {7, 4, 6}});
    auto r = run_opt_mst(g, AlgoConfig{}, 1, RunOptions{});
    CHECK(r.mst.edge_indices == std::vector<std::size_t>{0, 1, 2, 3});
  }
  SUBCASE("triangle") {
    WeightedGraph g({{1, 2, 1}, {2, 3, 2}, {1, 3, 3}});
    auto r = run_opt_mst(g, AlgoConfig{}, 1, RunOptions{});
    CHECK(r.mst.edge_indices == std::vector<std::size_t>{0, 1});
    CHECK(r.mst.total_weight == 3);
  }
  SUBCASE("single node and single edge") {
    auto r1 = run_opt_mst(WeightedGraph::single_node(3), AlgoConfig{}, 1,
                          RunOptions{});
    CHECK(r1.mst.edge_indices.empty());
    auto r2 = run_opt_mst(WeightedGraph({{8, 9, 42}}), AlgoConfig{}, 1,
                          RunOptions{});
    CHECK(r2.mst.edge_indices == std::vector<std::size_t>{0});
  }
}

TEST_CASE("a hundred random graphs agree with the sequential oracle") {
  SplitMix64 rng(4242);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 2 + rng.below(127);
    const std::size_t mmax = n * (n - 1) / 2;
    const std::size_t m =
        (n - 1) +
        rng.below(std::min<std::uint64_t>(mmax - (n - 1) + 1, 3 * n));
    auto g = generate_random_connected(n, m, rng.next());
    auto r = run_opt_mst(g, AlgoConfig{}, rng.next(), RunOptions{});
    REQUIRE(r.mst.edge_indices == kruskal(g).edge_indices);
  }
}

TEST_CASE("fragment counts and weak diameters shrink on schedule") {
  auto audit = [](const WeightedGraph& g, std::uint64_t seed) {
    auto r = run_opt_mst(g, AlgoConfig{}, seed, RunOptions{});
    const double sq = std::sqrt(static_cast<double>(g.n()));
    for (const auto& rec : r.trace.growth) {
      std::set<std::uint64_t> frags(rec.fragment_after.begin(),
                                    rec.fragment_after.end());
      const double cbound = sq / static_cast<double>(1u << rec.iteration);
      CHECK((frags.size() == 1 ||
             static_cast<double>(frags.size()) <= cbound + 1e-9));
      const double dbound =
          6.0 * static_cast<double>(1u << rec.iteration) * sq;
      for (const auto& [f, members] : ref::group_by(g, rec.fragment_after))
        CHECK(static_cast<double>(ref::weak_diameter(g, members)) <=
              dbound + 1e-9);
    }
    return r.trace.growth.size();
  };
  CHECK(audit(generate_path(200), 3) >= 2);
  CHECK(audit(generate_path(400), 4) >= 2);
  auto base = generate_path(300);
  std::vector<WeightedEdge> es(base.edges());
  es.push_back({10, 50, 100000});
  es.push_back({120, 180, 100001});
  es.push_back({200, 290, 100002});
  CHECK(audit(WeightedGraph(es), 6) >= 2);
}

TEST_CASE("routing tables stay reciprocal after the full run") {
  for (auto [n, m, seed] :
       {std::tuple<std::size_t, std::size_t, std::uint64_t>{64, 160, 2},
        {100, 240, 8}}) {
    auto g = generate_random_connected(n, m, seed);
    auto r = run_opt_mst(g, AlgoConfig{}, 5, RunOptions{});
    audit_routing(g, r.routing);
  }
  auto g = generate_path(128);  // exercises multi-level tables
  auto r = run_opt_mst(g, AlgoConfig{}, 5, RunOptions{});
  audit_routing(g, r.routing);
}

TEST_CASE("round and message totals stay under the pinned budgets") {
  auto g = generate_path(256);
  auto r = run_opt_mst(g, AlgoConfig{}, 7, RunOptions{});
  REQUIRE(r.mst.edge_indices == kruskal(g).edge_indices);
  const double n = 256, lg = 8;  // log2(256)
  const double diam = 255;
  CHECK(static_cast<double>(r.metrics.rounds) <=
        cal::kOptRounds * (diam + std::sqrt(n)) * lg * lg * lg);
  const double fl = static_cast<double>(
      r.metrics.messages_by_tag.count("findlightest")
          ? r.metrics.messages_by_tag.at("findlightest")
          : 0);
  CHECK(fl <= cal::kFindLightestMessages *
                  (static_cast<double>(g.m()) + n * lg * lg * lg));
  const double fp = static_cast<double>(
      r.metrics.messages_by_tag.count("findpath")
          ? r.metrics.messages_by_tag.at("findpath")
          : 0);
  const double iters = static_cast<double>(
      std::max<std::size_t>(1, r.trace.growth.size()));
  CHECK(fp <= cal::kFindPathMessages * iters * n * lg * lg * lg);
  const double peak = static_cast<double>(
      r.metrics.peak_round_by_tag.count("findpath")
          ? r.metrics.peak_round_by_tag.at("findpath")
          : 0);
  CHECK(peak <= cal::kProbePeak * std::sqrt(n) * lg * lg);
}

TEST_CASE("expected metric tags and only those appear") {
  auto g = generate_path(128);  // growth stage active
  auto r = run_opt_mst(g, AlgoConfig{}, 7, RunOptions{});
  std::set<std::string> tags;
  for (const auto& [tag, c] : r.metrics.messages_by_tag) tags.insert(tag);
  CHECK(tags == std::set<std::string>{"cghs", "cover", "elect", "findlightest",
                                      "findpath", "matching", "merge",
                                      "phase1", "phase3"});

  auto g2 = generate_random_connected(64, 200, 1);  // growth stage skipped
  auto r2 = run_opt_mst(g2, AlgoConfig{}, 7, RunOptions{});
  CHECK(r2.trace.phase2_skipped);
  std::set<std::string> tags2;
  for (const auto& [tag, c] : r2.metrics.messages_by_tag) tags2.insert(tag);
  CHECK(tags2 == std::set<std::string>{"cghs", "elect", "phase1", "phase3"});
}

TEST_CASE("replay digests are stable across repeats") {
  auto g = generate_random_connected(96, 300, 21);
  std::set<std::string> digests;
  for (int rep = 0; rep < 4; ++rep)
    digests.insert(replay_digest(run_opt_mst(g, AlgoConfig{}, 1, RunOptions{})));
  CHECK(digests.size() == 1);
  // a different graph lands on a different digest
  auto g2 = generate_random_connected(97, 300, 21);
  CHECK(digests.count(
            replay_digest(run_opt_mst(g2, AlgoConfig{}, 1, RunOptions{}))) ==
        0);
}

TEST_CASE("config validation rejects bad growth constants") {
  auto g = generate_path(4);
  AlgoConfig bad;
  bad.c1 = 0.5;
  CHECK_THROWS_AS(run_opt_mst(g, bad, 1, RunOptions{}), ParamError);
  AlgoConfig bad2;
  bad2.c2 = 0.0;
  CHECK_THROWS_AS(run_opt_mst(g, bad2, 1, RunOptions{}), ParamError);
}

TEST_CASE("the diameter override steers the phase-skip rule") {
  auto g = generate_random_connected(64, 200, 1);  // naturally small diameter
  AlgoConfig forced;
  forced.dtilde_override = 1000;  // pretend the graph is long and thin
  auto r = run_opt_mst(g, forced, 7, RunOptions{});
  CHECK(!r.trace.phase2_skipped);
  CHECK(r.mst.edge_indices == kruskal(g).edge_indices);

  auto r2 = run_opt_mst(g, AlgoConfig{}, 7, RunOptions{});
  CHECK(r2.trace.phase2_skipped);
  CHECK(r2.mst.edge_indices == kruskal(g).edge_indices);
}
