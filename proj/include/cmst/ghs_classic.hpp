#pragma once

#include <cstdint>

#include "cmst/oracle.hpp"
#include "cmst/sim.hpp"

namespace cmst {

struct GhsClassicResult {
  MstResult mst;
  RunMetrics metrics;
  std::size_t phases = 0;  // fixed schedule: ceil(log2 n)
};

// Baseline distributed MST: synchronous uncontrolled merging, run inside the
// simulator. Every phase, each fragment finds its lightest outgoing edge and
// the whole proposal component merges at once; fragment trees are flooded
// with the new id after each merge. O(n)-round windows per phase, so rounds
// are O(n log n) and messages O(m log n) -- this is the comparison baseline,
// not the optimized algorithm. All traffic carries the metric tag "ghs".
GhsClassicResult ghs_classic(const WeightedGraph& g, std::uint64_t seed,
                             const RunOptions& opts = {});

}  // namespace cmst
