#pragma once

#include <cstdint>
#include <vector>

#include "cmst/graph.hpp"

namespace cmst {

enum class WeightMode { kUnit, kDisjointness };

// Parameters for the hard benchmark family: p parallel "slow" paths of L
// edges each, bridged to a highway path of D_target edges whose middle edge
// detours through a random d_core-regular core. In disjointness mode the
// spokes at the two terminals carry selector bits X and Y; the minimum
// spanning tree is then forced to pick a heavy edge exactly where both
// selectors are set.
struct LowerBoundParams {
  std::size_t p = 1;          // number of slow paths
  std::size_t L = 1;          // slow-path length (edges)
  std::size_t D_target = 1;   // highway length (edges)
  std::size_t d_core = 2;     // core regularity
  std::size_t core_size = 4;  // core node count
  WeightMode weight_mode = WeightMode::kUnit;
  std::vector<std::uint8_t> X;  // selector bits at s, one per slow path
  std::vector<std::uint8_t> Y;  // selector bits at t
  std::uint64_t seed = 0;       // core sampling
  std::uint64_t id_base = 0;    // first node id; lets copies use disjoint ids
};

// A built instance, keeping the removable core ("switch") edges designated.
struct HardInstance {
  WeightedGraph graph;
  std::vector<std::size_t> switch_edges;  // edge indices inside the core
  std::uint64_t s = 0;                    // selector-side terminals
  std::uint64_t t = 0;
  LowerBoundParams params;
};

// Builds the instance. The core is resampled until it is an expander-like
// graph (hop diameter logarithmic in its size) and none of its edges is a
// bridge of the assembled graph, so every switch edge stays removable.
// Throws ParamError on infeasible parameters.
HardInstance build_hard_graph(const LowerBoundParams& params);

struct OpenStub {
  std::uint64_t node = 0;
  std::size_t port = 0;  // port the removed edge used in the closed graph
};

// The instance with one switch edge removed; the two freed (node, port)
// endpoints are kept as stubs for later bridging.
struct OpenGraph {
  WeightedGraph base;
  WeightedEdge removed;
  OpenStub stub_a;  // removed.a side
  OpenStub stub_b;  // removed.b side
};

// Up to `limit` distinct single-switch-edge removals, sampled without
// replacement under `seed`.
std::vector<OpenGraph> enumerate_open_graphs(const HardInstance& inst,
                                             std::size_t limit,
                                             std::uint64_t seed);

// Joins two open graphs with two bridge edges (a-stub to a-stub, b-stub to
// b-stub). Each stub node sees its bridge on the same port number the removed
// edge used. Throws ParamError if the id spaces overlap.
WeightedGraph dumbbell(const OpenGraph& g1, const OpenGraph& g2);

}  // namespace cmst
