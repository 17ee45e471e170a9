#pragma once

#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "cmst/graph.hpp"
#include "cmst/sim.hpp"

namespace cmst {

// Spanning-forest snapshot: per-node fragment labels plus the selected tree
// edges. Fragment ids are node ids of fragment leaders.
struct MstForest {
  std::vector<std::uint64_t> fragment;   // by node index
  std::vector<std::size_t> parent_port;  // by node index; 0 = fragment root
  std::vector<std::size_t> tree_edges;   // sorted edge indices
  std::size_t fragment_count() const;
};

struct ControlledGhsResult {
  MstForest forest;
  RunMetrics metrics;
  // fragment count after each growth iteration (index 0 = after iteration 0)
  std::vector<std::size_t> fragments_per_iteration;
};

// Bounded-diameter fragment growth. Iterations i = 0..ceil(log2 sqrt(n)); in
// each, every fragment measures its exact tree diameter; fragments with
// diameter <= 2^i propose their lightest outgoing edge, a maximal matching
// over the proposals is found by deterministic color reduction, matched pairs
// merge under the larger leader id, and rejected proposers are absorbed along
// their proposal edges. Ends with at most ceil(sqrt(n)) fragments whose tree
// diameters stay O(sqrt(n)).
ControlledGhsResult controlled_ghs(const WeightedGraph& g,
                                   const RunOptions& opts = {});

// Number of growth iterations for n nodes: smallest k with 4^k >= n, plus one
// (iterations are numbered 0..k).
std::size_t controlled_ghs_iterations(std::size_t n);

// bounds[i] = upper bound on any fragment's tree diameter at the start of
// iteration i (bounds[iterations] = bound on the final forest). Drives the
// round budgeting and is asserted in tests.
std::vector<std::uint64_t> fragment_diameter_bounds(std::size_t iterations);

// Minimum-weight edge with exactly one endpoint in the marked set; nullopt
// means the set spans the whole graph ("forest complete").
std::optional<std::size_t> lightest_outgoing_edge_of_component(
    const WeightedGraph& g, const std::vector<char>& in_component);

// Deterministic maximal matching on a proposal digraph (each proposer names
// one target component; targets need not propose). Resolved by the same color
// staggering the protocol runs, so sequential replays coincide with it:
// colors start from component ids, four reduction steps bring them under six,
// three shift-down/recolor rounds bring them under three, then proposals are
// processed in color order with each target accepting the smallest proposer
// id it sees first.
struct MatchingOutcome {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> matched_pairs;  // (proposer, target)
  std::vector<std::uint64_t> forced;  // proposers left unmatched
};
MatchingOutcome cv_match(const std::map<std::uint64_t, std::uint64_t>& target_of);

// One merge round applied to a component assignment: proposals maps an active
// component id to the edge index it selected. Matched pairs and forced
// absorptions merge into the pair member with the larger id (the dominator);
// every group's new id is its pair's dominator.
struct MergeStep {
  std::vector<std::uint64_t> component;  // updated assignment by node index
  std::vector<std::size_t> added_edges;  // sorted edge indices added this round
  std::vector<std::pair<std::uint64_t, std::uint64_t>> matched_pairs;
  std::vector<std::uint64_t> forced;
};
MergeStep matching_merge_step(
    const WeightedGraph& g, const std::vector<std::uint64_t>& component,
    const std::map<std::uint64_t, std::size_t>& proposals);

// Color-reduction arithmetic shared by cv_match and the protocol so the two
// cannot drift apart.
namespace cvcolor {

// Compare with the parent's color: p = lowest differing bit, keep own bit.
inline std::uint64_t reduce(std::uint64_t self, std::uint64_t parent) {
  std::uint64_t diff = self ^ parent;
  unsigned p = static_cast<unsigned>(std::countr_zero(diff));
  return 2ull * p + ((self >> p) & 1ull);
}
inline std::uint64_t reduce_root(std::uint64_t self) { return self & 1ull; }

// Shift-down: children adopt the parent's previous color; roots flip.
inline std::uint64_t shift_root(std::uint64_t self) { return self == 0 ? 1 : 0; }

// Recolor a node of an eliminated class: any color under three that clashes
// with neither the parent nor the (uniform) children color.
inline std::uint64_t elim_pick(std::uint64_t parent_now,
                               std::uint64_t children_now) {
  for (std::uint64_t c : {0ull, 1ull, 2ull})
    if (c != parent_now && c != children_now) return c;
  return 2;  // unreachable for proper colorings
}

}  // namespace cvcolor

}  // namespace cmst
