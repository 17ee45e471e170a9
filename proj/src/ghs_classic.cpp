#include "cmst/ghs_classic.hpp"

#include <array>
#include <bit>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <tuple>
#include <vector>

namespace cmst {
namespace {

using u64 = std::uint64_t;

u64 phases_for(std::size_t n) {
  if (n <= 1) return 1;
  return static_cast<u64>(std::bit_width(n - 1));  // ceil(log2 n)
}

// One phase = id exchange, lightest-edge convergecast, grant walk back to the
// edge owner, connect handshake, then a new-id flood over the merged tree.
// Everything inside a phase is event-driven; the phase length only has to
// dominate the worst chain of tree walks, each at most n hops.
class GhsNode : public NodeBehavior {
  enum Op : u64 { kExch = 1, kCand, kGrant, kConnect, kNew };

 public:
  explicit GhsNode(const NodeInit& init)
      : id_(init.id),
        n_(init.n),
        deg_(init.degree),
        frag_(init.id),
        leader_(true) {
    phase_len_ = 3 * static_cast<u64>(n_) + 12;
    phases_ = phases_for(n_);
    nfrag_.assign(deg_ + 1, 0);
    got_.assign(deg_ + 1, 0);
  }

  void on_round(NodeContext& ctx) override {
    const u64 r = ctx.round();
    for (const auto& [p, m] : ctx.inbox()) handle(ctx, p, m.words);
    if (r == phases_ * phase_len_) {
      for (const auto& [port, dq] : q_)
        if (!dq.empty()) ctx.fail("unsent traffic at the stage boundary");
      ctx.halt();
      return;
    }
    if (r % phase_len_ == 0) phase_begin(ctx);
    if (r % phase_len_ == 3) conv_begin(ctx);
    flush(ctx);
    const u64 base = r - r % phase_len_;
    for (u64 m : {base, base + 3, base + phase_len_}) {
      if (m > r) {
        ctx.wake_at(m);
        break;
      }
    }
  }

  std::vector<u64> output() const override {
    return {frag_, leader_ ? 1u : 0u, tree_ports_.size()};
  }

  u64 frag() const { return frag_; }
  const std::set<std::size_t>& tree_ports() const { return tree_ports_; }

 private:
  void phase_begin(NodeContext&) {
    std::fill(nfrag_.begin(), nfrag_.end(), 0);
    std::fill(got_.begin(), got_.end(), 0);
    reports_.clear();
    conv_children_.clear();
    has_cand_ = false;
    sent_up_ = false;
    decided_ = false;
    win_self_ = false;
    win_port_ = 0;
    cand_port_ = 0;
    connect_sent_ = 0;
    connect_recv_.clear();
    adopted_ = false;
    for (std::size_t p = 1; p <= deg_; ++p) push(p, {pack(kExch), frag_});
  }

  void conv_begin(NodeContext& ctx) {
    for (std::size_t p = 1; p <= deg_; ++p)
      if (!got_[p]) ctx.fail("fragment exchange incomplete");
    conv_children_ = tree_ports_;
    if (!leader_) conv_children_.erase(parent_);
    has_cand_ = false;
    for (std::size_t p = 1; p <= deg_; ++p) {
      if (nfrag_[p] == frag_) continue;
      const WeightKey k = ctx.weight_at(p);
      const std::array<u64, 3> c{k.numeric, k.lo, k.hi};
      if (!has_cand_ || c < best_) {
        has_cand_ = true;
        best_ = c;
        win_self_ = true;
        win_port_ = 0;
        cand_port_ = p;
      }
    }
    conv_started_ = true;
    pump(ctx);
  }

  void pump(NodeContext& ctx) {
    if (!conv_started_ || sent_up_ || decided_) return;
    for (std::size_t c : conv_children_)
      if (!reports_.count(c)) return;
    if (leader_) {
      decided_ = true;
      if (has_cand_) grant(ctx);
    } else {
      sent_up_ = true;
      push(parent_, {pack(kCand, has_cand_ ? 0 : 1), best_[0], best_[1],
                     best_[2]});
    }
  }

  // walk the breadcrumbs back toward whichever node owns the winning edge
  void grant(NodeContext& ctx) {
    if (win_self_)
      mark_and_connect(ctx);
    else
      push(win_port_, {pack(kGrant)});
  }

  void mark_and_connect(NodeContext& ctx) {
    tree_ports_.insert(cand_port_);
    connect_sent_ = cand_port_;
    push(cand_port_, {pack(kConnect)});
    maybe_initiate(ctx, cand_port_);
  }

  // the proposal graph's unique mutual edge decides the new leader: the
  // endpoint whose old fragment id is larger floods its own node id
  void maybe_initiate(NodeContext& ctx, std::size_t p) {
    if (connect_sent_ != p || !connect_recv_.count(p)) return;
    if (frag_ > nfrag_[p]) {
      adopted_ = true;
      frag_ = id_;
      leader_ = true;
      parent_ = 0;
      for (std::size_t q : tree_ports_) push(q, {pack(kNew), frag_});
    }
  }

  void handle(NodeContext& ctx, std::size_t p, const std::vector<u64>& w) {
    if (w.empty()) ctx.fail("malformed message");
    switch (op_of(w[0])) {
      case kExch:
        if (w.size() < 2) ctx.fail("malformed message");
        nfrag_[p] = w[1];
        got_[p] = 1;
        break;
      case kCand: {
        if (w.size() < 4) ctx.fail("malformed message");
        if (!conv_children_.count(p))
          ctx.fail("report from outside the fragment tree");
        if (!reports_.insert(p).second) ctx.fail("duplicate report");
        if ((flags_of(w[0]) & 1) == 0) {
          const std::array<u64, 3> c{w[1], w[2], w[3]};
          if (!has_cand_ || c < best_) {
            has_cand_ = true;
            best_ = c;
            win_self_ = false;
            win_port_ = p;
          }
        }
        pump(ctx);
        break;
      }
      case kGrant:
        grant(ctx);
        break;
      case kConnect:
        tree_ports_.insert(p);
        connect_recv_.insert(p);
        maybe_initiate(ctx, p);
        // a proposal that lands after the rename flood passed this node:
        // hand the new id straight to the late fragment
        if (adopted_ && connect_sent_ != p) push(p, {pack(kNew), frag_});
        break;
      case kNew:
        if (w.size() < 2) ctx.fail("malformed message");
        if (adopted_) ctx.fail("fragment flood revisited a node");
        adopted_ = true;
        frag_ = w[1];
        leader_ = id_ == frag_;
        parent_ = p;
        for (std::size_t q : tree_ports_)
          if (q != p) push(q, {pack(kNew), frag_});
        break;
      default:
        ctx.fail("unrecognized message");
    }
  }

  static constexpr u64 pack(u64 op, u64 flags = 0) { return op | flags << 16; }
  static constexpr u64 op_of(u64 h) { return h & 0xff; }
  static constexpr u64 flags_of(u64 h) { return h >> 16 & 0xff; }

  void push(std::size_t port, std::vector<u64> words) {
    q_[port].push_back(std::move(words));
  }
  void flush(NodeContext& ctx) {
    bool backlog = false;
    for (auto& [port, dq] : q_) {
      if (dq.empty()) continue;
      ctx.set_tag("ghs");
      ctx.send(port, std::move(dq.front()));
      dq.pop_front();
      if (!dq.empty()) backlog = true;
    }
    if (backlog) ctx.wake_at(ctx.round() + 1);
  }

  u64 id_;
  std::size_t n_;
  std::size_t deg_;
  u64 frag_;
  bool leader_;
  std::size_t parent_ = 0;
  std::set<std::size_t> tree_ports_;
  u64 phase_len_;
  u64 phases_;
  std::map<std::size_t, std::deque<std::vector<u64>>> q_;

  std::vector<u64> nfrag_;
  std::vector<char> got_;
  bool conv_started_ = false;
  std::set<std::size_t> conv_children_;
  std::set<std::size_t> reports_;
  bool has_cand_ = false;
  std::array<u64, 3> best_{};
  bool win_self_ = false;
  std::size_t win_port_ = 0;
  std::size_t cand_port_ = 0;
  bool sent_up_ = false;
  bool decided_ = false;
  std::size_t connect_sent_ = 0;
  std::set<std::size_t> connect_recv_;
  bool adopted_ = false;
};

}  // namespace

GhsClassicResult ghs_classic(const WeightedGraph& g, std::uint64_t seed,
                             const RunOptions& opts) {
  GhsClassicResult out;
  out.mst.source = "ghs";
  if (g.n() == 0) throw ParamError("graph has no nodes");
  out.phases = phases_for(g.n());
  if (g.n() == 1) return out;

  RunOptions ro = opts;
  ro.seed = seed;
  auto res = run_protocol(
      g, [](const NodeInit& init) { return std::make_unique<GhsNode>(init); },
      ro);
  out.metrics = res.metrics;

  std::set<std::size_t> edges;
  u64 frag = 0;
  for (std::size_t i = 0; i < g.n(); ++i) {
    auto* node = static_cast<const GhsNode*>(res.nodes[i].get());
    if (i == 0) frag = node->frag();
    if (node->frag() != frag)
      throw StructureError("fragments failed to merge into one");
    for (std::size_t p : node->tree_ports()) edges.insert(g.port_edge(i, p));
  }
  out.mst.edge_indices.assign(edges.begin(), edges.end());
  for (std::size_t e : out.mst.edge_indices)
    out.mst.total_weight += g.edge(e).w;
  const SpanningTreeCheck chk = verify_spanning_tree(g, out.mst.edge_indices);
  if (!chk.ok) throw StructureError(chk.reason);
  return out;
}

}  // namespace cmst
