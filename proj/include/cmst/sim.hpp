#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmst/graph.hpp"
#include "cmst/rng.hpp"

namespace cmst {

// One message on one edge direction. Payload words are opaque to the engine;
// the per-message word budget models the O(log n)-bit message size limit.
struct Message {
  std::vector<std::uint64_t> words;
};

struct RunMetrics {
  // Index of the last communication-active round: a round counts if a message
  // is sent in it or delivered into it. Trailing silent cleanup rounds do not.
  std::uint64_t rounds = 0;
  std::uint64_t messages_total = 0;
  std::uint64_t words_total = 0;
  // Per procedure-tag counts, and the peak number of same-tag messages sent
  // in any single round (a congestion gauge).
  std::map<std::string, std::uint64_t> messages_by_tag;
  std::map<std::string, std::uint64_t> peak_round_by_tag;
};

// Fold one run's metrics into a running total. Tagged counts add up; the
// per-round peaks keep the max (stages never share a round).
void accumulate_metrics(RunMetrics& into, const RunMetrics& part);

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A node broke an engine rule (oversized message, bad port, send after halt,
// message to a halted node, or a stall with no pending events).
struct ProtocolViolation : SimError {
  ProtocolViolation(std::uint64_t node, std::uint64_t round, const std::string& what)
      : SimError("protocol violation at node " + std::to_string(node) +
                 ", round " + std::to_string(round) + ": " + what),
        node(node),
        round(round) {}
  std::uint64_t node;
  std::uint64_t round;
};

// round_limit exhausted before global termination.
struct TimeoutError : SimError {
  explicit TimeoutError(RunMetrics partial)
      : SimError("round limit exhausted after " +
                 std::to_string(partial.rounds) + " rounds"),
        partial(std::move(partial)) {}
  RunMetrics partial;
};

class Engine;

// What a node may see and do. Deliberately excludes neighbor identities:
// at start a node knows its own id, its ports, the incident weight keys and
// the network size; everything else must arrive in messages.
class NodeContext {
 public:
  std::uint64_t node_id() const { return id_; }
  std::size_t degree() const { return degree_; }
  std::size_t network_size() const { return n_; }
  std::uint64_t round() const;
  WeightKey weight_at(std::size_t port) const;

  // Messages delivered this round, sorted by port (stable per sender order).
  const std::vector<std::pair<std::size_t, Message>>& inbox() const {
    return inbox_;
  }

  void send(std::size_t port, std::vector<std::uint64_t> words);
  // Charge subsequent sends to this accounting tag.
  void set_tag(const char* tag);
  // Arm an alarm: the node is stepped at the given absolute round even if no
  // message arrives. The alarm survives earlier mail-driven steps and is
  // consumed when it fires; re-arm or halt from the step handler.
  void wake_at(std::uint64_t round);
  void halt();
  [[noreturn]] void fail(const std::string& reason);

  SplitMix64& rng() { return rng_; }

 private:
  friend class Engine;
  Engine* engine_ = nullptr;
  std::uint64_t id_ = 0;
  std::size_t index_ = 0;
  std::size_t degree_ = 0;
  std::size_t n_ = 0;
  std::vector<std::pair<std::size_t, Message>> inbox_;
  SplitMix64 rng_;
};

// Per-node protocol state machine. on_round fires at round 0, whenever a
// message arrives, and at requested wake rounds.
class NodeBehavior {
 public:
  virtual ~NodeBehavior() = default;
  virtual void on_round(NodeContext& ctx) = 0;
  // Stable per-node result words folded into the replay digest.
  virtual std::vector<std::uint64_t> output() const { return {}; }
};

struct NodeInit {
  std::uint64_t id = 0;
  std::size_t index = 0;   // position in sorted id order
  std::size_t degree = 0;
  std::size_t n = 0;
  std::vector<WeightKey> port_weights;  // index p-1 = port p
};

using BehaviorFactory =
    std::function<std::unique_ptr<NodeBehavior>(const NodeInit&)>;

struct RunOptions {
  std::uint64_t seed = 0;
  std::uint64_t round_limit = 50'000'000;
  std::size_t word_budget = 8;  // max words per message
};

struct RunResult {
  RunMetrics metrics;
  std::vector<std::unique_ptr<NodeBehavior>> nodes;  // sorted by node id
  std::vector<std::uint64_t> node_ids;
};

// Synchronous lockstep execution until every node halted and no message is in
// flight. Rounds with no scheduled activity are skipped in one step; the
// round counter still advances as if they were played out.
RunResult run_protocol(const WeightedGraph& g, const BehaviorFactory& factory,
                       const RunOptions& opts = {});

// Stable fingerprint of (rounds, messages_total, per-node outputs).
std::string replay_digest(const RunResult& result);

}  // namespace cmst
