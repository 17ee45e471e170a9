#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cmst/graph.hpp"
#include "cmst/sim.hpp"

namespace cmst {

// One cluster of a neighborhood cover: a rooted tree stored as per-node
// parent ports (root maps to 0), with child ports as the exact inverse.
struct ClusterTree {
  std::uint64_t id = 0;    // unique within the cover
  std::uint64_t root = 0;  // node id of the cluster root
  std::map<std::uint64_t, std::size_t> parent_port;
  std::map<std::uint64_t, std::vector<std::size_t>> child_ports;
  std::uint64_t depth = 0;  // deepest member's hop count from the root
};

// Radius-W cover: every node's W-hop ball lies inside at least one cluster,
// each node appears in few clusters, and cluster trees are shallow.
struct Cover {
  std::uint64_t radius = 0;  // W
  std::uint64_t kappa = 0;   // sparsity parameter
  std::vector<ClusterTree> clusters;
  // node index -> indices into `clusters`
  std::vector<std::vector<std::size_t>> memberships;
};

struct CoverResult {
  Cover cover;
  RunMetrics metrics;       // accumulated over construction attempts
  std::size_t attempts = 0;
};

// Randomized distributed construction: repeated shifted-start ball carving.
// Per partition every node draws a truncated geometric head start; candidacy
// waves expand one hop per round, so the first wave reaching a node is its
// cluster. Retries with a derived seed until verify_cover passes, hence the
// result always satisfies all three cover properties. kappa 0 means
// ceil(log2 n), clamped to at least 1.
CoverResult compute_cover(const WeightedGraph& g, std::uint64_t radius,
                          std::uint64_t seed, std::uint64_t kappa = 0,
                          const RunOptions& opts = {});

struct CoverPropertyReport {
  bool ok = true;
  std::string detail;  // worst witness when failing, summary when passing
};

struct CoverReport {
  CoverPropertyReport depth;
  CoverPropertyReport sparsity;
  CoverPropertyReport neighborhood;
  bool all_ok() const { return depth.ok && sparsity.ok && neighborhood.ok; }
};

// Pure check of the three cover properties (tree depth within budget,
// bounded memberships per node, every W-ball inside some cluster).
// Malformed cluster trees surface as depth failures.
CoverReport verify_cover(const Cover& cover, const WeightedGraph& g);

// Debug dump: clusters with their parent-port maps.
std::string cover_to_json(const Cover& cover);

// Budget helpers shared by construction, verification and tests.
std::uint64_t cover_depth_budget(std::uint64_t radius, std::uint64_t kappa);
double cover_membership_budget(std::size_t n, std::uint64_t kappa);

}  // namespace cmst
