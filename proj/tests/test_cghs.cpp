#include "cmst/controlled_ghs.hpp"

#include <cmath>
#include <set>

#include "cmst/calibration.hpp"
#include "cmst/oracle.hpp"
#include "cmst/rng.hpp"
#include "doctest.h"
#include "reference.hpp"

using namespace cmst;

namespace {

std::size_t ceil_sqrt(std::size_t n) {
  std::size_t r = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (r * r < n) ++r;
  while (r > 0 && (r - 1) * (r - 1) >= n) --r;
  return r;
}

bool subset_of(const std::vector<std::size_t>& small,
               const std::vector<std::size_t>& big) {
  std::set<std::size_t> s(big.begin(), big.end());
  for (std::size_t e : small)
    if (!s.count(e)) return false;
  return true;
}

}  // namespace

TEST_CASE("iteration count is log4 of n, inclusive") {
  CHECK(controlled_ghs_iterations(1) == 1);
  CHECK(controlled_ghs_iterations(2) == 2);
  CHECK(controlled_ghs_iterations(4) == 2);
  CHECK(controlled_ghs_iterations(5) == 3);
  CHECK(controlled_ghs_iterations(16) == 3);
  CHECK(controlled_ghs_iterations(17) == 4);
  CHECK(controlled_ghs_iterations(256) == 5);
  CHECK(controlled_ghs_iterations(1024) == 6);
  CHECK(controlled_ghs_iterations(1025) == 7);
}

TEST_CASE("diameter budget table follows its recurrence") {
  auto b = fragment_diameter_bounds(6);
  REQUIRE(b.size() == 7);
  CHECK(b[0] == 0);
  CHECK(b[1] == 6);
  CHECK(b[2] == 15);
  CHECK(b[3] == 30);
  CHECK(b[4] == 57);
  CHECK(b[5] == 108);
  CHECK(b[6] == 207);
  for (std::size_t i = 0; i + 1 < b.size(); ++i)
    CHECK(b[i + 1] == b[i] + 3 * (std::uint64_t{1} << i) + 3);
}

TEST_CASE("lightest outgoing edge of a single node is its min incident key") {
  WeightedGraph g({{9, 1, 5}, {9, 2, 2}, {9, 3, 9}});
  std::vector<char> mask(g.n(), 0);
  mask[g.index_of(9)] = 1;
  auto loe = lightest_outgoing_edge_of_component(g, mask);
  REQUIRE(loe.has_value());
  CHECK(*loe == 1);
  CHECK(g.edge(*loe).w == 2);
}

TEST_CASE("component covering all nodes reports forest complete") {
  auto g = generate_path(5);
  std::vector<char> mask(g.n(), 1);
  CHECK_FALSE(lightest_outgoing_edge_of_component(g, mask).has_value());
  CHECK_THROWS_AS(lightest_outgoing_edge_of_component(g, {1, 0}), ParamError);
}

TEST_CASE("lightest outgoing edge matches brute-force cut minimum") {
  // fixed K4 split
  WeightedGraph k4({{0, 1, 1}, {0, 2, 2}, {0, 3, 3}, {1, 2, 4}, {1, 3, 5}, {2, 3, 6}});
  std::vector<char> mask(4, 0);
  mask[k4.index_of(0)] = mask[k4.index_of(1)] = 1;
  auto loe = lightest_outgoing_edge_of_component(k4, mask);
  auto brute = ref::brute_force_cut_min(k4, {0, 1});
  REQUIRE(loe.has_value());
  REQUIRE(brute.has_value());
  CHECK(*loe == *brute);

  // random splits of random graphs
  SplitMix64 rng(91);
  for (int t = 0; t < 120; ++t) {
    std::size_t n = 3 + rng.below(20);
    std::size_t m = std::min(n - 1 + rng.below(n), n * (n - 1) / 2);
    auto g = generate_random_connected(n, m, rng.next());
    std::vector<char> side(n, 0);
    std::set<std::uint64_t> ids;
    for (std::size_t i = 0; i < n; ++i)
      if (rng.below(2)) {
        side[i] = 1;
        ids.insert(g.id_of(i));
      }
    if (ids.empty() || ids.size() == n) continue;
    auto a = lightest_outgoing_edge_of_component(g, side);
    auto b = ref::brute_force_cut_min(g, ids);
    REQUIRE(a.has_value() == b.has_value());
    if (a) CHECK(*a == *b);
  }
}

TEST_CASE("pairing a single proposal matches the two parties") {
  auto out = cv_match({{1, 2}});
  REQUIRE(out.matched_pairs.size() == 1);
  CHECK(out.matched_pairs[0] == std::pair<std::uint64_t, std::uint64_t>{1, 2});
  CHECK(out.forced.empty());
}

TEST_CASE("mutual proposals form exactly one pair") {
  auto out = cv_match({{1, 2}, {2, 1}});
  REQUIRE(out.matched_pairs.size() == 1);
  auto [p, t] = out.matched_pairs[0];
  CHECK(std::set<std::uint64_t>{p, t} == std::set<std::uint64_t>{1, 2});
  CHECK(out.forced.empty());
}

TEST_CASE("star of proposals keeps one pair and forces the rest") {
  auto out = cv_match({{1, 9}, {2, 9}, {3, 9}});
  REQUIRE(out.matched_pairs.size() == 1);
  CHECK(out.matched_pairs[0].second == 9);
  CHECK(out.forced.size() == 2);
}

TEST_CASE("self proposal is rejected") {
  CHECK_THROWS_AS(cv_match({{4, 4}}), ParamError);
}

TEST_CASE("pairing is a maximal matching on random proposal forests") {
  SplitMix64 rng(4242);
  for (int t = 0; t < 300; ++t) {
    std::size_t k = 2 + rng.below(40);
    std::vector<std::uint64_t> ids;
    std::set<std::uint64_t> seen;
    while (ids.size() < k) {
      std::uint64_t id = rng.below(10'000);
      if (seen.insert(id).second) ids.push_back(id);
    }
    std::map<std::uint64_t, std::uint64_t> target_of;
    for (std::uint64_t c : ids) {
      if (rng.below(4) == 0) continue;  // some fragments do not propose
      std::uint64_t t2 = c;
      while (t2 == c) t2 = ids[rng.below(k)];
      target_of[c] = t2;
    }
    auto out = cv_match(target_of);
    auto again = cv_match(target_of);
    CHECK(out.matched_pairs == again.matched_pairs);  // deterministic
    CHECK(out.forced == again.forced);

    std::set<std::uint64_t> matched;
    for (auto [p, q] : out.matched_pairs) {
      CHECK(target_of.at(p) == q);  // pairs follow proposals
      CHECK(matched.insert(p).second);  // vertex-disjoint
      CHECK(matched.insert(q).second);
    }
    std::set<std::uint64_t> forced(out.forced.begin(), out.forced.end());
    for (const auto& [c, t2] : target_of) {
      CHECK((matched.count(c) || matched.count(t2)));  // maximal
      bool is_forced = !matched.count(c);
      CHECK(forced.count(c) == (is_forced ? 1 : 0));
      if (is_forced) CHECK(matched.count(t2));  // forced target always matched
    }
    std::vector<std::pair<std::uint64_t, std::uint64_t>> prop_edges(
        target_of.begin(), target_of.end());
    CHECK(ref::is_maximal_matching(prop_edges, out.matched_pairs));
  }
}

TEST_CASE("merge step joins two components over their only edge") {
  WeightedGraph g({{0, 1, 7}});
  auto step = matching_merge_step(g, {0, 1}, {{0, 0}, {1, 0}});
  CHECK(step.component == std::vector<std::uint64_t>{1, 1});
  CHECK(step.added_edges == std::vector<std::size_t>{0});
  CHECK(step.matched_pairs.size() == 1);
  CHECK(step.forced.empty());
}

TEST_CASE("merge step on a three-chain matches once and forces the leftover") {
  auto g = generate_path(3);  // edges (0,1) w1, (1,2) w2
  std::map<std::uint64_t, std::size_t> proposals{{0, 0}, {1, 0}, {2, 1}};
  auto step = matching_merge_step(g, {0, 1, 2}, proposals);
  CHECK(step.matched_pairs.size() == 1);
  CHECK(step.forced.size() == 1);
  CHECK(step.added_edges == std::vector<std::size_t>{0, 1});
  CHECK(step.component[0] == step.component[1]);
  CHECK(step.component[1] == step.component[2]);
}

TEST_CASE("merge step without proposals changes nothing") {
  auto g = generate_path(4);
  std::vector<std::uint64_t> comp{5, 5, 6, 6};
  auto step = matching_merge_step(g, comp, {});
  CHECK(step.component == comp);
  CHECK(step.added_edges.empty());
}

TEST_CASE("merge step rejects a proposal that does not leave its component") {
  auto g = generate_path(3);
  CHECK_THROWS_AS(matching_merge_step(g, {7, 7, 8}, {{7, 0}}), ParamError);
}

TEST_CASE("fragment growth on a single node does nothing and sends nothing") {
  auto res = controlled_ghs(WeightedGraph::single_node(7));
  CHECK(res.forest.fragment == std::vector<std::uint64_t>{7});
  CHECK(res.forest.fragment_count() == 1);
  CHECK(res.forest.tree_edges.empty());
  CHECK(res.metrics.messages_total == 0);
  CHECK(res.fragments_per_iteration == std::vector<std::size_t>{1});
}

TEST_CASE("fragment growth on a claw absorbs every edge in one iteration") {
  WeightedGraph g({{0, 1, 1}, {0, 2, 2}, {0, 3, 3}});
  auto res = controlled_ghs(g);
  CHECK(res.forest.tree_edges == std::vector<std::size_t>{0, 1, 2});
  REQUIRE(res.fragments_per_iteration.size() == 2);
  CHECK(res.fragments_per_iteration[0] <= 2);
  CHECK(res.fragments_per_iteration.back() == 1);
  CHECK(res.metrics.messages_total > 0);
  CHECK(res.metrics.messages_by_tag.at("cghs") == res.metrics.messages_total);
}

TEST_CASE("path of 16 replays the sequential re-enactment exactly") {
  auto g = generate_path(16);
  auto res = controlled_ghs(g);
  auto tr = ref::cghs_reference(g);
  CHECK(res.forest.fragment == tr.component);
  CHECK(res.forest.tree_edges == tr.tree_edges);
  CHECK(res.fragments_per_iteration == tr.fragments_per_iteration);
  CHECK(res.forest.fragment_count() <= 4);
  CHECK(static_cast<double>(tr.max_tree_diameter_per_iteration.back()) <=
        cal::kGhsDiameter * 4.0);
}

TEST_CASE("protocol equals the sequential re-enactment on random graphs") {
  SplitMix64 rng(20260823);
  for (auto [n, m] : std::vector<std::pair<std::size_t, std::size_t>>{
           {6, 8}, {12, 20}, {24, 40}, {40, 80}, {64, 150}, {90, 130}}) {
    auto g = generate_random_connected(n, m, rng.next());
    auto res = controlled_ghs(g);
    auto tr = ref::cghs_reference(g);
    REQUIRE(res.forest.fragment == tr.component);
    REQUIRE(res.forest.tree_edges == tr.tree_edges);
    REQUIRE(res.fragments_per_iteration == tr.fragments_per_iteration);
    REQUIRE(subset_of(res.forest.tree_edges, kruskal(g).edge_indices));
  }
}

TEST_CASE("fragment growth meets its count, diameter and message budgets") {
  SplitMix64 rng(7711);
  auto suite = std::vector<std::tuple<std::size_t, std::size_t>>{
      {4, 5}, {16, 30}, {33, 64}, {64, 160}, {100, 240}, {256, 640}, {1024, 2048}};
  for (auto [n, m] : suite) {
    auto g = generate_random_connected(n, m, rng.next());
    auto res = controlled_ghs(g);
    CAPTURE(n);

    CHECK(subset_of(res.forest.tree_edges, kruskal(g).edge_indices));
    CHECK(res.forest.fragment_count() <= ceil_sqrt(n));
    for (std::size_t i = 1; i < res.fragments_per_iteration.size(); ++i)
      CHECK(res.fragments_per_iteration[i] <= res.fragments_per_iteration[i - 1]);

    double logn = std::log2(static_cast<double>(n));
    double budget = cal::kGhsMessages *
                    (static_cast<double>(m) * logn +
                     static_cast<double>(n) * logn * logn);
    CHECK(static_cast<double>(res.metrics.messages_total) <= budget);

    if (n <= 256) {
      auto tr = ref::cghs_reference(g);
      REQUIRE(res.forest.fragment == tr.component);
      REQUIRE(res.forest.tree_edges == tr.tree_edges);
      auto bounds = fragment_diameter_bounds(controlled_ghs_iterations(n));
      REQUIRE(tr.max_tree_diameter_per_iteration.size() + 1 == bounds.size());
      for (std::size_t i = 0; i < tr.max_tree_diameter_per_iteration.size(); ++i)
        CHECK(tr.max_tree_diameter_per_iteration[i] <= bounds[i + 1]);
      CHECK(static_cast<double>(tr.max_tree_diameter_per_iteration.back()) <=
            cal::kGhsDiameter * std::sqrt(static_cast<double>(n)));
    }
  }
}

TEST_CASE("grid and path shapes also replay the re-enactment") {
  for (auto& g : {generate_grid(5, 7, 3), generate_path(33)}) {
    auto res = controlled_ghs(g);
    auto tr = ref::cghs_reference(g);
    REQUIRE(res.forest.fragment == tr.component);
    REQUIRE(res.forest.tree_edges == tr.tree_edges);
  }
}

TEST_CASE("fragment growth runs are reproducible") {
  auto g = generate_random_connected(30, 60, 5);
  auto a = controlled_ghs(g);
  auto b = controlled_ghs(g);
  CHECK(a.forest.fragment == b.forest.fragment);
  CHECK(a.forest.tree_edges == b.forest.tree_edges);
  CHECK(a.metrics.rounds == b.metrics.rounds);
  CHECK(a.metrics.messages_total == b.metrics.messages_total);
}
