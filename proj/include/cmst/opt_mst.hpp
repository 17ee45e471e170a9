#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cmst/controlled_ghs.hpp"
#include "cmst/cover.hpp"
#include "cmst/graph.hpp"
#include "cmst/oracle.hpp"
#include "cmst/sim.hpp"

namespace cmst {

// Per-node message-forwarding state. Keyed by (fragment id, level), where the
// level is an epoch counter: level 1 entries are the per-fragment BFS trees,
// and the relabel flood closing growth iteration i rebuilds every surviving
// fragment's tree from scratch at level i+1 (an acknowledged first-arrival
// flood over the old trees and the merge paths, so nodes relaying between
// merged parts join the new tree without being members). Aggregations and
// unicasts in an iteration use exactly that iteration's level; older entries
// are kept but never consulted again. Entries are only ever added.
struct RoutingTable {
  using Key = std::pair<std::uint64_t, std::uint32_t>;  // (fragment id, level)
  std::map<Key, std::size_t> up;  // single port toward that fragment's leader
  // exact reverse relation: p in down_u(F,l) iff the node behind p has
  // up(F,l) pointing back at u
  std::map<Key, std::set<std::size_t>> down;
};

// Tuning knobs. The defaults satisfy the documented per-iteration fragment
// count and diameter bounds; tests assert them with these exact values.
struct AlgoConfig {
  double c1 = 1.0;    // activity threshold and cluster radius scale
  double c2 = 1.0;    // fragment-size floor documented for tests; nodes never read it
  double c_skip = 4.0;      // skip local growth when dtilde <= c_skip * ceil(sqrt n)
  double probe_slack = 4.0;  // queueing slack: probe_slack * sqrt(n) * ceil(log2 n) rounds
  std::uint64_t kappa = 0;   // cover quality knob passed through; 0 = ceil(log2 n)
  // nonzero: use this diameter bound for every scheduling decision (the
  // election stage still runs, because later stages need its tree)
  std::uint64_t dtilde_override = 0;
};

// Leader election by max-id flooding, then a BFS tree rooted at the winner and
// an eccentricity convergecast. dtilde = 2 * eccentricity(leader), so
// D <= dtilde <= 2D. All messages carry the "elect" tag.
struct DiameterResult {
  std::uint64_t dtilde = 0;
  std::uint64_t leader = 0;
  std::vector<std::size_t> bfs_parent_port;  // by node index; 0 = the root itself
  RunMetrics metrics;
};
DiameterResult estimate_diameter(const WeightedGraph& g,
                                 const RunOptions& opts = {});

// Per-fragment BFS trees over the induced member subgraphs, rooted at fragment
// leaders, recorded as level-1 routing entries. Flood messages that cross
// fragment boundaries are ignored by the receiver but still paid for.
struct Phase1Result {
  std::vector<RoutingTable> routing;  // by node index; level-1 entries only
  RunMetrics metrics;
};
Phase1Result init_phase1(const WeightedGraph& g, const MstForest& forest,
                         const RunOptions& opts = {});

// What one guarded growth iteration did, as recorded by the run wrapper.
// Everything here is re-derivable by a sequential mirror from fragment_before,
// proposal and active; tests do exactly that.
struct GrowthIteration {
  std::size_t iteration = 0;       // 1-based
  std::uint64_t cover_radius = 0;  // cluster radius of the cover built for it
  std::vector<std::uint64_t> fragment_before;  // by node index
  std::vector<std::uint64_t> fragment_after;
  std::map<std::uint64_t, std::size_t> proposal;  // fragment -> its lightest outgoing edge
  std::map<std::uint64_t, std::uint64_t> tree_diameter;  // measured in-protocol per fragment
  std::map<std::uint64_t, bool> active;  // tree_diameter <= c1 * 2^iteration * ceil(sqrt n)
  std::map<std::uint64_t, std::size_t> success_level;  // probe level that found each joint cluster
  std::vector<std::pair<std::uint64_t, std::uint64_t>> matched_pairs;  // (proposer, target)
  std::vector<std::uint64_t> forced;      // absorbed along their proposal despite no match
  std::vector<std::size_t> added_edges;   // sorted edge indices selected this iteration
  RunMetrics metrics;                     // this iteration's protocol stage only
};

struct OptTrace {
  std::uint64_t dtilde = 0;
  std::uint64_t leader = 0;
  bool phase2_skipped = false;            // dtilde small: straight to global merging
  std::vector<std::uint64_t> base_fragment;  // by node index, after bounded growth
  std::vector<Cover> covers;              // covers[k-1] serves probe level k
  std::vector<std::size_t> cover_attempts;
  std::vector<GrowthIteration> growth;
  // distinct labels entering each global-merge iteration; last entry is 1
  std::vector<std::size_t> label_counts;
  std::size_t phase3_iterations = 0;
};

struct OptMstResult {
  MstResult mst;
  RunMetrics metrics;  // accumulated across all stages
  OptTrace trace;
  std::vector<RoutingTable> routing;  // final per-node tables, by node index
};

// The full pipeline: bounded fragment growth, diameter estimate, per-fragment
// BFS trees, cover-guided local merging while fragments are small, then global
// merging over the BFS tree of the elected leader. Output always equals the
// sequential MST; randomness (cover carving) only affects cost.
OptMstResult run_opt_mst(const WeightedGraph& g, const AlgoConfig& cfg = {},
                         std::uint64_t seed = 0, const RunOptions& opts = {});

// Sequential mirror of one guarded growth step. proposals maps fragment id to
// its chosen outgoing edge; only fragments flagged active participate in the
// matching (edges whose two sides are both active), and every active proposer
// left unmatched is absorbed along its proposal edge regardless of the
// target's flag. Matched pairs take the larger leader id; a forced proposer
// adopts its target's post-merge id.
struct GrowthStep {
  std::vector<std::uint64_t> fragment;   // updated assignment by node index
  std::vector<std::size_t> added_edges;  // sorted edge indices
  std::vector<std::pair<std::uint64_t, std::uint64_t>> matched_pairs;
  std::vector<std::uint64_t> forced;
};
GrowthStep guarded_merge_step(const WeightedGraph& g,
                              const std::vector<std::uint64_t>& fragment,
                              const std::map<std::uint64_t, std::size_t>& proposals,
                              const std::map<std::uint64_t, bool>& active);

// Smallest 1-based level whose cover has a single cluster containing both
// nodes; nullopt if none does. Offline mirror of the probe escalation.
std::optional<std::size_t> smallest_joint_cover_level(
    const std::vector<Cover>& covers, std::uint64_t a, std::uint64_t b);

// Cluster radius used by growth iteration (or probe level) k: the doubling
// schedule 6 * c1 * 2^(k+1) * ceil(sqrt n), clamped at dtilde because a cover
// of radius >= diameter already holds the whole graph in one cluster.
std::uint64_t growth_cluster_radius(std::uint64_t level, std::uint64_t sqrt_ceil,
                                    std::uint64_t dtilde, double c1);

// Number of guarded growth iterations: ceil(log2(dtilde / sqrt n)), at least 1.
std::size_t growth_iterations(std::uint64_t dtilde, std::size_t n);

// FNV-1a fingerprint over the edge set, the metric totals and the growth
// trace. Two runs of the same (graph, config, seed) produce equal digests.
std::string replay_digest(const OptMstResult& result);

}  // namespace cmst
