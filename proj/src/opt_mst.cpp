#include "cmst/opt_mst.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <deque>
#include <memory>
#include <optional>
#include <set>
#include <tuple>

#include "cmst/calibration.hpp"
#include "cmst/controlled_ghs.hpp"
#include "cmst/cover.hpp"
#include "cmst/oracle.hpp"
#include "cmst/rng.hpp"

namespace cmst {
namespace {

using u64 = std::uint64_t;
using u32 = std::uint32_t;

u64 isqrt_ceil(u64 n) {
  if (n == 0) return 0;
  u64 r = static_cast<u64>(std::sqrt(static_cast<double>(n)));
  while (r > 1 && (r - 1) * (r - 1) >= n) --r;
  while (r * r < n) ++r;
  return r;
}

u64 ilog2_ceil(u64 n) {
  if (n <= 1) return 0;
  return static_cast<u64>(std::bit_width(n - 1));
}

// Every message starts with one packed header word.
constexpr u64 pack(u64 op, u64 level, u64 flags, u64 ttl) {
  return op | level << 8 | flags << 16 | ttl << 24;
}
constexpr u64 op_of(u64 h) { return h & 0xff; }
constexpr u64 level_of(u64 h) { return h >> 8 & 0xff; }
constexpr u64 flags_of(u64 h) { return h >> 16 & 0xff; }
constexpr u64 ttl_of(u64 h) { return h >> 24; }

// Per-port FIFO send queue. The engine delivers at most the messages we hand
// it, but the analysis wants one message per port per round, so boundary
// bursts drain one round apart in order.
class OutBox {
 public:
  void push(std::size_t port, std::vector<u64> words, const char* tag) {
    q_[port].push_back(Pending{std::move(words), tag});
  }
  void flush(NodeContext& ctx) {
    bool backlog = false;
    for (auto& [port, dq] : q_) {
      if (dq.empty()) continue;
      ctx.set_tag(dq.front().tag);
      ctx.send(port, std::move(dq.front().words));
      dq.pop_front();
      if (!dq.empty()) backlog = true;
    }
    if (backlog) ctx.wake_at(ctx.round() + 1);
  }
  bool empty() const {
    for (const auto& [port, dq] : q_)
      if (!dq.empty()) return false;
    return true;
  }

 private:
  struct Pending {
    std::vector<u64> words;
    const char* tag;
  };
  std::map<std::size_t, std::deque<Pending>> q_;
};

// Scheduling constants shared by all stages of one run. Window lengths come
// from n, the diameter estimate and the measured cover depths; nodes never
// look at global state at runtime, only at this precomputed table.
struct GrowthParams {
  std::size_t n = 0;
  u64 s = 0;       // ceil(sqrt n)
  u64 lg = 0;      // ceil(log2 n), at least 1
  u64 dtilde = 0;  // diameter upper bound used for scheduling
  u64 slack = 0;   // queueing allowance added to every congested window
  double c1 = 1.0;
  std::vector<u64> depth;  // max cluster depth of the level-k cover

  // Hop bound of one merge walk through a level-k cluster: up to the root and
  // back down, plus the endpoints.
  u64 pathlen(std::size_t k) const { return 2 * depth.at(k - 1) + 2; }
  u64 maxpath(std::size_t t) const {
    u64 m = 0;
    for (std::size_t k = 1; k <= t; ++k) m = std::max(m, pathlen(k));
    return m;
  }
  // Overlay-tree eccentricity bound entering iteration 1 (fresh per-fragment
  // BFS trees over the bounded-growth forest).
  u64 h1() const {
    return static_cast<u64>(
               std::ceil(cal::kGhsDiameter * static_cast<double>(s))) +
           2;
  }
  // Entering iteration t: each relabel flood stretches routes by at most one
  // merge walk on either side.
  u64 route(std::size_t t) const {
    u64 r = h1();
    for (std::size_t j = 1; j < t; ++j) r += 2 * pathlen(j) + 6;
    return r;
  }
  u64 climb(std::size_t t) const { return route(t) + slack + 4; }
  u64 active_threshold(std::size_t t) const {
    return static_cast<u64>(c1 * static_cast<double>(u64(1) << t) *
                            static_cast<double>(s));
  }
  // Fragment-tree diameter bound at the end of iteration t (t = 0: after the
  // bounded-growth stage).
  u64 diam_bound(std::size_t t) const {
    return 6 * static_cast<u64>(std::ceil(
                   c1 * static_cast<double>(u64(1) << t) *
                   static_cast<double>(s))) +
           2;
  }
};

// Count-exact convergecast over the routing entries of one level: every key
// aggregates a fixed-width word tuple toward its leader. Children that hold
// nothing still report (flagged empty), so parents can wait for an exact set
// of down-ports instead of a timeout.
struct Climber {
  struct Via {
    bool self = false;
    std::size_t port = 0;
  };
  struct Agg {
    bool has = false;
    std::array<u64, 5> best{};
    Via via;
    bool sent = false;
    Via sent_via;
    std::set<std::size_t> got;
  };

  u64 opcode = 0;
  std::size_t width = 1;
  bool maximize = false;
  u64 lvl = 0;
  const RoutingTable* rt = nullptr;
  const char* tag = "";
  std::map<u64, Agg> agg;

  std::size_t need(u64 key) const {
    auto it = rt->down.find({key, static_cast<u32>(lvl)});
    return it == rt->down.end() ? 0 : it->second.size();
  }
  bool has_up(u64 key) const {
    return rt->up.count({key, static_cast<u32>(lvl)}) != 0;
  }
  std::size_t up_port(u64 key) const {
    return rt->up.at({key, static_cast<u32>(lvl)});
  }
  bool better(const std::array<u64, 5>& c, const std::array<u64, 5>& b) const {
    for (std::size_t i = 0; i < width; ++i) {
      if (c[i] != b[i]) return maximize ? c[i] > b[i] : c[i] < b[i];
    }
    return false;
  }

  void start(u64 key, const std::optional<std::array<u64, 5>>& own,
             OutBox& out) {
    Agg& a = agg[key];
    if (own) {
      a.has = true;
      a.best = *own;
      a.via = Via{true, 0};
    }
    pump(key, out);
  }

  // false: malformed, duplicate, or off-route arrival.
  bool on_msg(std::size_t port, const std::vector<u64>& w, OutBox& out) {
    if (w.size() != 2 + width) return false;
    if (op_of(w[0]) != opcode || level_of(w[0]) != lvl) return false;
    const u64 key = w[1];
    auto dn = rt->down.find({key, static_cast<u32>(lvl)});
    if (dn == rt->down.end() || dn->second.count(port) == 0) return false;
    Agg& a = agg[key];
    if (!a.got.insert(port).second) return false;
    if ((flags_of(w[0]) & 1) == 0) {
      std::array<u64, 5> cand{};
      for (std::size_t i = 0; i < width; ++i) cand[i] = w[2 + i];
      if (!a.has || better(cand, a.best)) {
        a.has = true;
        a.best = cand;
        a.via = Via{false, port};
      }
    }
    pump(key, out);
    return true;
  }

  void pump(u64 key, OutBox& out) {
    Agg& a = agg[key];
    if (a.sent || !has_up(key)) return;
    if (a.got.size() != need(key)) return;
    std::vector<u64> w;
    w.reserve(2 + width);
    w.push_back(pack(opcode, lvl, a.has ? 0 : 1, 0));
    w.push_back(key);
    for (std::size_t i = 0; i < width; ++i) w.push_back(a.best[i]);
    out.push(up_port(key), std::move(w), tag);
    a.sent = true;
    a.sent_via = a.via;
  }

  bool settled(u64 key, bool leader) const {
    auto it = agg.find(key);
    if (it == agg.end()) return false;
    if (leader) return it->second.got.size() == need(key);
    if (has_up(key)) return it->second.sent;
    return it->second.got.size() == need(key);
  }
};

// Durable per-node position carried from stage to stage.
struct OptState {
  u64 id = 0;
  std::size_t index = 0;
  u64 frag = 0;
  bool leader = false;
  std::set<std::size_t> tree_ports;  // ports of my selected tree edges
  RoutingTable rt;
  std::size_t bfs_parent = 0;  // global BFS tree; 0 = the elected root
  std::set<std::size_t> bfs_children;
};

// One node's view of one cluster it belongs to at some probe level.
struct ClusterStop {
  u64 ckey = 0;  // (level << 32) | cluster index
  std::size_t parent_port = 0;  // 0 = this node is the cluster root
};

// ---------------------------------------------------------------------------
// Leader election + BFS + eccentricity + diameter broadcast ("elect").
// ---------------------------------------------------------------------------
class ElectNode : public NodeBehavior {
  enum Op : u64 { kMaxId = 1, kTree, kChild, kEcc, kDiam };

 public:
  explicit ElectNode(const NodeInit& init)
      : id_(init.id), n_(init.n), deg_(init.degree), best_(init.id) {
    m1_ = static_cast<u64>(n_) + 2;
    m2_ = 2 * static_cast<u64>(n_) + 4;
    m3_ = 3 * static_cast<u64>(n_) + 6;
    m4_ = 4 * static_cast<u64>(n_) + 8;
  }

  void on_round(NodeContext& ctx) override {
    const u64 r = ctx.round();
    if (r == 0) {
      for (std::size_t p = 1; p <= deg_; ++p)
        out_.push(p, {pack(kMaxId, 0, 0, 0), best_}, "elect");
    }
    for (const auto& [p, m] : ctx.inbox()) handle(ctx, p, m.words);
    if (r == m1_ && best_ == id_) {
      root_ = true;
      seen_tree_ = true;
      dist_ = 0;
      for (std::size_t p = 1; p <= deg_; ++p)
        out_.push(p, {pack(kTree, 0, 0, 0), 1}, "elect");
    }
    if (r == m2_) {
      ecc_phase_ = true;
      try_ecc(ctx);
    }
    if (r == m3_ && root_) {
      if (!got_diam_) ctx.fail("eccentricity sweep stalled");
      for (std::size_t c : children_)
        out_.push(c, {pack(kDiam, 0, 0, 0), dtilde_}, "elect");
    }
    if (r >= m4_) {
      if (!seen_tree_) ctx.fail("election tree never reached this node");
      if (!got_diam_) ctx.fail("diameter broadcast missing");
      if (!out_.empty()) ctx.fail("unsent traffic at the stage boundary");
      ctx.halt();
      return;
    }
    out_.flush(ctx);
    for (u64 m : {m1_, m2_, m3_, m4_}) {
      if (m > r) {
        ctx.wake_at(m);
        break;
      }
    }
  }

  std::vector<u64> output() const override {
    return {best_, dtilde_, dist_, root_ ? 0 : static_cast<u64>(parent_)};
  }

  u64 leader() const { return best_; }
  u64 dtilde() const { return dtilde_; }
  std::size_t parent_port() const { return root_ ? 0 : parent_; }

 private:
  void handle(NodeContext& ctx, std::size_t p, const std::vector<u64>& w) {
    if (w.empty()) ctx.fail("malformed message");
    switch (op_of(w[0])) {
      case kMaxId:
        if (w.size() < 2) ctx.fail("malformed message");
        if (w[1] > best_) {
          best_ = w[1];
          for (std::size_t q = 1; q <= deg_; ++q)
            if (q != p) out_.push(q, {pack(kMaxId, 0, 0, 0), best_}, "elect");
        }
        break;
      case kTree:
        if (w.size() < 2) ctx.fail("malformed message");
        if (!seen_tree_) {
          seen_tree_ = true;
          parent_ = p;
          dist_ = w[1];
          out_.push(p, {pack(kChild, 0, 0, 0)}, "elect");
          for (std::size_t q = 1; q <= deg_; ++q)
            if (q != p) out_.push(q, {pack(kTree, 0, 0, 0), dist_ + 1}, "elect");
        }
        break;
      case kChild:
        children_.insert(p);
        break;
      case kEcc:
        if (w.size() < 2) ctx.fail("malformed message");
        ecc_in_ = std::max(ecc_in_, w[1]);
        reported_.insert(p);
        try_ecc(ctx);
        break;
      case kDiam:
        if (w.size() < 2) ctx.fail("malformed message");
        if (!got_diam_) {
          got_diam_ = true;
          dtilde_ = w[1];
          for (std::size_t c : children_)
            out_.push(c, {pack(kDiam, 0, 0, 0), dtilde_}, "elect");
        }
        break;
      default:
        ctx.fail("unrecognized message");
    }
  }

  void try_ecc(NodeContext&) {
    if (!ecc_phase_ || ecc_sent_) return;
    if (reported_.size() != children_.size()) return;
    ecc_sent_ = true;
    const u64 val = std::max(dist_, ecc_in_);
    if (root_) {
      dtilde_ = 2 * val;
      got_diam_ = true;
    } else {
      out_.push(parent_, {pack(kEcc, 0, 0, 0), val}, "elect");
    }
  }

  u64 id_;
  std::size_t n_;
  std::size_t deg_;
  u64 best_;
  u64 m1_, m2_, m3_, m4_;
  bool root_ = false;
  bool seen_tree_ = false;
  std::size_t parent_ = 0;
  u64 dist_ = 0;
  std::set<std::size_t> children_;
  std::set<std::size_t> reported_;
  u64 ecc_in_ = 0;
  bool ecc_phase_ = false;
  bool ecc_sent_ = false;
  bool got_diam_ = false;
  u64 dtilde_ = 0;
  OutBox out_;
};

// ---------------------------------------------------------------------------
// Per-fragment overlay trees: leaders flood their tree edges, adopters ack,
// which installs the level-1 up/down routing entries ("phase1").
// ---------------------------------------------------------------------------
class TreeBuildNode : public NodeBehavior {
  enum Op : u64 { kGrow = 1, kAdopt };

 public:
  TreeBuildNode(OptState st, u64 window) : st_(std::move(st)), end_(window) {}

  void on_round(NodeContext& ctx) override {
    const u64 r = ctx.round();
    if (r == 0 && st_.leader) {
      joined_ = true;
      for (std::size_t q : st_.tree_ports)
        out_.push(q, {pack(kGrow, 0, 0, 0), st_.frag}, "phase1");
    }
    for (const auto& [p, m] : ctx.inbox()) handle(ctx, p, m.words);
    if (r >= end_) {
      if (!joined_) ctx.fail("fragment tree never reached this node");
      if (!out_.empty()) ctx.fail("unsent traffic at the stage boundary");
      ctx.halt();
      return;
    }
    out_.flush(ctx);
    ctx.wake_at(end_);
  }

  std::vector<u64> output() const override {
    u64 dn = 0;
    auto it = st_.rt.down.find({st_.frag, 1});
    if (it != st_.rt.down.end()) dn = it->second.size();
    return {st_.frag, st_.rt.up.size(), dn};
  }

  const OptState& state() const { return st_; }

 private:
  void handle(NodeContext& ctx, std::size_t p, const std::vector<u64>& w) {
    if (w.size() < 2) ctx.fail("malformed message");
    if (w[1] != st_.frag) ctx.fail("fragment flood crossed a fragment boundary");
    switch (op_of(w[0])) {
      case kGrow:
        if (joined_) ctx.fail("fragment tree contains a cycle");
        joined_ = true;
        st_.rt.up[{st_.frag, 1}] = p;
        out_.push(p, {pack(kAdopt, 0, 0, 0), st_.frag}, "phase1");
        for (std::size_t q : st_.tree_ports)
          if (q != p) out_.push(q, {pack(kGrow, 0, 0, 0), st_.frag}, "phase1");
        break;
      case kAdopt:
        st_.rt.down[{st_.frag, 1}].insert(p);
        break;
      default:
        ctx.fail("unrecognized message");
    }
  }

  OptState st_;
  u64 end_;
  bool joined_ = false;
  OutBox out_;
};

// ---------------------------------------------------------------------------
// One guarded growth iteration: lightest outgoing edge, activity gate,
// proposal symmetrization, cover probes, merge-walk install, the matching
// game over the walks, and the relabel flood that rebuilds every surviving
// fragment's overlay one level up.
// ---------------------------------------------------------------------------
struct ProbeWin {
  u64 probe_end = 0;
  u64 install_end = 0;
};

struct GrowthSchedule {
  std::size_t t = 1;
  u64 exch_end = 0, fl_end = 0, pulse_end = 0, gate_end = 0, symm_end = 0;
  std::vector<ProbeWin> probes;
  u64 legs_start = 0, leg_len = 0, legs_end = 0, stage_end = 0;
  std::vector<u64> marks;

  static GrowthSchedule make(std::size_t t, const GrowthParams& par) {
    GrowthSchedule sc;
    sc.t = t;
    const u64 climb = par.climb(t);
    sc.exch_end = 3;
    sc.fl_end = sc.exch_end + climb;
    sc.pulse_end = sc.fl_end + par.diam_bound(t - 1) + 6;
    sc.gate_end = sc.pulse_end + climb;
    sc.symm_end = sc.gate_end + 2 * climb + 4;
    u64 r = sc.symm_end;
    for (std::size_t k = 1; k <= t; ++k) {
      ProbeWin w;
      w.probe_end = r + 2 * (par.depth.at(k - 1) + par.slack + 4);
      w.install_end = w.probe_end + par.pathlen(k) + par.slack + 4;
      r = w.install_end;
      sc.probes.push_back(w);
    }
    sc.legs_start = r;
    sc.leg_len = par.maxpath(t) + par.slack + 4;
    sc.legs_end = sc.legs_start + 20 * sc.leg_len;
    sc.stage_end =
        sc.legs_end + par.route(t) + 2 * par.maxpath(t) + par.slack + 10;
    sc.marks = {0, sc.exch_end, sc.fl_end, sc.pulse_end, sc.gate_end,
                sc.symm_end};
    for (const auto& w : sc.probes) {
      sc.marks.push_back(w.probe_end);
      sc.marks.push_back(w.install_end);
    }
    for (u64 j = 0; j < 20; ++j) sc.marks.push_back(sc.legs_start + j * sc.leg_len);
    sc.marks.push_back(sc.legs_end);
    sc.marks.push_back(sc.stage_end);
    std::sort(sc.marks.begin(), sc.marks.end());
    sc.marks.erase(std::unique(sc.marks.begin(), sc.marks.end()),
                   sc.marks.end());
    return sc;
  }
};

class GrowthNode : public NodeBehavior {
  enum Op : u64 {
    kExch = 1,
    kFlv,
    kGp,
    kGv,
    kNtf,
    kXloe,
    kInloe,
    kPrb,
    kSuc,
    kIns,
    kTact,
    kTpro,
    kClr,
    kProp,
    kPdec,
    kMreq,
    kMdom,
    kRlb,
    kAck,
    kMrk,
    kTre,
  };
  static constexpr u64 kRelayFlag = 2;       // relabel travels a merge walk
  static constexpr u64 kNoParent = 1000;     // sentinel outside {0,1,2}

 public:
  // Everything a leader decided in this iteration, for the trace.
  struct LeaderInfo {
    bool leader = false;
    u64 frag = 0;
    bool has_loe = false;
    std::array<u64, 3> loe{};
    u64 tgt = 0;
    u64 tree_diam = 0;
    bool active = false;
    u64 succ_level = 0;  // probe level that connected my own pair; 0 = none
    bool matched = false;
    bool as_proposer = false;
    bool forced = false;
    u64 pair_other = 0;
    u64 pair_dom = 0;
  };

  GrowthNode(const NodeInit& init, OptState st,
             std::vector<std::vector<ClusterStop>> stops, GrowthSchedule sc,
             GrowthParams par)
      : st_(std::move(st)),
        stops_(std::move(stops)),
        sc_(std::move(sc)),
        par_(std::move(par)),
        deg_(init.degree) {
    nfrag_.assign(deg_ + 1, 0);
    got_nf_.assign(deg_ + 1, 0);
    for (const auto& lv : stops_)
      for (const auto& s : lv) stop_ix_[s.ckey] = &s;
  }

  void on_round(NodeContext& ctx) override {
    const u64 r = ctx.round();
    if (r == 0) {
      for (std::size_t p = 1; p <= deg_; ++p)
        out_.push(p, {pack(kExch, 0, 0, 0), st_.frag}, "findlightest");
    }
    for (const auto& [p, m] : ctx.inbox()) handle(ctx, p, m.words);
    boundaries(ctx, r);
    if (r >= sc_.stage_end) {
      finish(ctx);
      return;
    }
    out_.flush(ctx);
    while (mark_ix_ < sc_.marks.size() && sc_.marks[mark_ix_] <= r) ++mark_ix_;
    if (mark_ix_ < sc_.marks.size()) ctx.wake_at(sc_.marks[mark_ix_]);
  }

  std::vector<u64> output() const override {
    return {st_.frag, st_.leader ? 1u : 0u, info_.matched ? 1u : 0u,
            info_.forced ? 1u : 0u};
  }

  const OptState& state() const { return st_; }
  const LeaderInfo& info() const { return info_; }

 private:
  // ---- helpers ----
  static std::pair<u64, u64> ordered(u64 a, u64 b) {
    return {std::min(a, b), std::max(a, b)};
  }
  u64 other_of(const std::pair<u64, u64>& pr) const {
    return pr.first == st_.frag ? pr.second : pr.first;
  }
  std::vector<u64> level_keys() const {
    std::set<u64> ks{st_.frag};
    for (const auto& [k, v] : st_.rt.up)
      if (k.second == sc_.t) ks.insert(k.first);
    for (const auto& [k, v] : st_.rt.down)
      if (k.second == sc_.t) ks.insert(k.first);
    return {ks.begin(), ks.end()};
  }
  bool own_leader_for(u64 key) const { return st_.leader && key == st_.frag; }
  u64 rlb_ttl() const {
    return par_.route(sc_.t) + 2 * par_.maxpath(sc_.t) + par_.slack + 8;
  }

  // ---- stage boundaries ----
  void boundaries(NodeContext& ctx, u64 r) {
    if (r == sc_.exch_end) fl_start(ctx);
    if (r == sc_.fl_end) pulse_start(ctx);
    if (r == sc_.pulse_end) gate_start(ctx);
    if (r == sc_.gate_end) symm_start(ctx);
    if (r == sc_.symm_end) probe_start(ctx, 1);
    for (std::size_t k = 1; k <= sc_.t; ++k) {
      if (r == sc_.probes[k - 1].probe_end) install_start(ctx, k);
      if (r == sc_.probes[k - 1].install_end && k < sc_.t)
        probe_start(ctx, k + 1);
    }
    if (r >= sc_.legs_start && r < sc_.legs_end &&
        (r - sc_.legs_start) % sc_.leg_len == 0)
      leg(ctx, (r - sc_.legs_start) / sc_.leg_len);
    if (r == sc_.legs_end) {
      flood_start(ctx);
      if (st_.leader && ((matched_ && as_proposer_) || forced_))
        mark_descend(ctx);
    }
  }

  // ---- lightest outgoing edge ----
  void fl_start(NodeContext& ctx) {
    std::optional<std::array<u64, 5>> own;
    for (std::size_t p = 1; p <= deg_; ++p) {
      if (!got_nf_[p]) ctx.fail("neighbor exchange incomplete");
      if (nfrag_[p] == st_.frag) continue;
      const WeightKey k = ctx.weight_at(p);
      const std::array<u64, 5> c{k.numeric, k.lo, k.hi, nfrag_[p], 0};
      if (!own || std::tie(c[0], c[1], c[2]) <
                      std::tie((*own)[0], (*own)[1], (*own)[2])) {
        own = c;
        cand_port_ = p;
      }
    }
    if (own) own_cand_ = {(*own)[0], (*own)[1], (*own)[2]};
    keys_ = level_keys();
    fl_ = Climber{.opcode = kFlv,
                  .width = 4,
                  .maximize = false,
                  .lvl = sc_.t,
                  .rt = &st_.rt,
                  .tag = "findlightest",
                  .agg = {}};
    for (u64 key : keys_)
      fl_.start(key, key == st_.frag ? own : std::nullopt, out_);
  }

  // ---- fragment-tree diameter pulse ----
  void pulse_start(NodeContext& ctx) {
    for (u64 key : keys_)
      if (!fl_.settled(key, own_leader_for(key)))
        ctx.fail("lightest-edge search stalled");
    if (st_.leader) {
      const auto& a = fl_.agg[st_.frag];
      has_loe_ = a.has;
      if (a.has) {
        loe_ = {a.best[0], a.best[1], a.best[2]};
        tgt_ = a.best[3];
      }
    }
    pulse_try(ctx);
  }

  void pulse_try(NodeContext&) {
    for (std::size_t q : st_.tree_ports) {
      if (pulse_done_.count(q)) continue;
      u64 best = 0;
      bool all = true;
      for (std::size_t x : st_.tree_ports) {
        if (x == q) continue;
        auto it = pulse_in_.find(x);
        if (it == pulse_in_.end()) {
          all = false;
          break;
        }
        best = std::max(best, it->second);
      }
      if (!all) continue;
      out_.push(q, {pack(kGp, 0, 0, 0), best + 1}, "matching");
      pulse_done_.insert(q);
    }
  }

  // ---- activity gate ----
  void gate_start(NodeContext& ctx) {
    if (pulse_in_.size() != st_.tree_ports.size())
      ctx.fail("tree sweep stalled");
    u64 top1 = 0, top2 = 0;
    for (const auto& [p, v] : pulse_in_) {
      if (v >= top1) {
        top2 = top1;
        top1 = v;
      } else {
        top2 = std::max(top2, v);
      }
    }
    const u64 cand = st_.tree_ports.size() >= 2 ? top1 + top2 : top1;
    gate_ = Climber{.opcode = kGv,
                    .width = 1,
                    .maximize = true,
                    .lvl = sc_.t,
                    .rt = &st_.rt,
                    .tag = "matching",
                    .agg = {}};
    for (u64 key : keys_)
      gate_.start(key,
                  key == st_.frag
                      ? std::optional<std::array<u64, 5>>({cand, 0, 0, 0, 0})
                      : std::nullopt,
                  out_);
  }

  // ---- proposal symmetrization: tell the target fragment's leader ----
  void symm_start(NodeContext& ctx) {
    for (u64 key : keys_)
      if (!gate_.settled(key, own_leader_for(key)))
        ctx.fail("activity gate stalled");
    if (!st_.leader) return;
    const auto& a = gate_.agg[st_.frag];
    tree_diam_ = a.has ? a.best[0] : 0;
    active_ = tree_diam_ <= par_.active_threshold(sc_.t);
    if (active_ && has_loe_) {
      const auto& f = fl_.agg[st_.frag];
      if (f.via.self)
        send_xloe(ctx);
      else
        out_.push(f.via.port, {pack(kNtf, 0, 0, 0), st_.frag}, "findlightest");
    }
  }

  void send_xloe(NodeContext& ctx) {
    if (!own_cand_) ctx.fail("winner retrace lost");
    out_.push(cand_port_,
              {pack(kXloe, 0, 0, 0), st_.frag, (*own_cand_)[0], (*own_cand_)[1],
               (*own_cand_)[2]},
              "findlightest");
  }

  void record_inloe(u64 from, std::array<u64, 3> key) {
    in_.emplace(ordered(from, st_.frag), InLoe{from, key});
  }

  // ---- cover probes ----
  void probe_start(NodeContext& ctx, std::size_t k) {
    if (k == 1 && st_.leader) {
      if (active_ && has_loe_) {
        my_pair_ = ordered(st_.frag, tgt_);
        duty_[my_pair_].mine = true;
      }
      for (const auto& [pr, il] : in_) {
        duty_[pr].incoming = true;
        duty_[pr].from = il.from;
      }
    }
    for (const auto& [pr, d] : duty_) {
      if (succ_lvl_.count(pr)) continue;
      const u64 side = st_.frag == pr.first ? 0 : 1;
      for (const auto& s : stops_[k - 1]) {
        if (s.parent_port == 0)
          root_meet(ctx, s.ckey, pr, side);
        else
          out_.push(s.parent_port,
                    {pack(kPrb, 0, side, 0), s.ckey, pr.first, pr.second},
                    "findpath");
      }
    }
  }

  void root_meet(NodeContext& ctx, u64 ckey, std::pair<u64, u64> pr, u64 side) {
    auto& s = seen_[{ckey, pr.first, pr.second}];
    if (s[side]) ctx.fail("duplicate probe");
    s[side] = true;
    if (s[0] && s[1]) {
      for (u64 sd : {u64(0), u64(1)}) {
        auto c = crumb_.find({ckey, pr.first, pr.second, sd});
        if (c != crumb_.end())
          out_.push(c->second,
                    {pack(kSuc, 0, sd, 0), ckey, pr.first, pr.second, st_.id},
                    "findpath");
        else
          succ_found(pr, st_.id, ckey);  // that side's probe began here
      }
    }
  }

  void succ_found(std::pair<u64, u64> pr, u64 root, u64 ckey) {
    if (succ_lvl_.count(pr)) return;  // late duplicate from a lower level
    succ_cand_[pr].insert({root, ckey});
  }

  // ---- merge-walk install ----
  void install_start(NodeContext& ctx, std::size_t k) {
    for (auto& [pr, cands] : succ_cand_) {
      if (succ_lvl_.count(pr) || cands.empty()) continue;
      const auto pick = *cands.rbegin();  // both sides agree on the maximum
      succ_lvl_[pr] = k;
      if (st_.frag == pr.first) walk_install(ctx, pick.second, pr);
    }
    succ_cand_.clear();
  }

  void walk_install(NodeContext& ctx, u64 ckey, std::pair<u64, u64> pr) {
    auto st = stop_ix_.find(ckey);
    if (st == stop_ix_.end()) ctx.fail("joint cluster misses the walk origin");
    const u64 lvl = ckey >> 32;
    const u64 ttl = par_.pathlen(lvl) + par_.slack + 8;
    u64 desc = 0;
    std::size_t a = 0;
    auto c = crumb_.find({ckey, pr.first, pr.second, u64(1)});
    if (c != crumb_.end()) {  // already on the far side's probe trail
      desc = 1;
      a = c->second;
    } else if (st->second->parent_port != 0) {
      a = st->second->parent_port;
    } else {
      ctx.fail("broken probe trail");
    }
    pair_next_[pr].insert(a);
    out_.push(a, {pack(kIns, 0, desc, ttl), ckey, pr.first, pr.second},
              "findpath");
  }

  void ins_in(NodeContext& ctx, std::size_t p, const std::vector<u64>& w) {
    const u64 ckey = w[1];
    const std::pair<u64, u64> pr{w[2], w[3]};
    if (st_.frag == pr.second && st_.leader) {  // the walk reached its far end
      if (!pair_next_[pr].insert(p).second) ctx.fail("merge path crossed itself");
      return;
    }
    const u64 ttl = ttl_of(w[0]);
    if (ttl == 0) ctx.fail("merge path overran its budget");
    u64 desc = flags_of(w[0]) & 1;
    std::size_t a = 0;
    auto c = crumb_.find({ckey, pr.first, pr.second, u64(1)});
    if (desc == 0 && c != crumb_.end()) {  // switch downhill at the junction
      desc = 1;
      a = c->second;
    } else if (desc == 0) {
      auto st = stop_ix_.find(ckey);
      if (st == stop_ix_.end()) ctx.fail("merge path strayed off its cluster");
      if (st->second->parent_port == 0) ctx.fail("broken probe trail");
      a = st->second->parent_port;
    } else {
      if (c == crumb_.end()) ctx.fail("broken probe trail");
      a = c->second;
    }
    auto& ports = pair_next_[pr];
    if (a == p || ports.count(p) || ports.count(a))
      ctx.fail("merge path crossed itself");
    ports.insert(p);
    ports.insert(a);
    out_.push(a, {pack(kIns, 0, desc, ttl - 1), ckey, pr.first, pr.second},
              "findpath");
  }

  // ---- the matching game over the walks ----
  void pair_send(NodeContext& ctx, const std::pair<u64, u64>& pr, bool to_lo,
                 u64 op, u64 val, const char* tag) {
    auto it = pair_next_.find(pr);
    if (it == pair_next_.end() || it->second.empty())
      ctx.fail("no joint cluster for merging fragments");
    out_.push(*it->second.begin(), {pack(op, 0, to_lo ? 1 : 0, 0), pr.first,
                                    pr.second, val},
              tag);
  }

  // true when this node is the packet's destination leader.
  bool pair_route(NodeContext& ctx, std::size_t p, const std::vector<u64>& w,
                  const char* tag) {
    const std::pair<u64, u64> pr{w[1], w[2]};
    const u64 dest = (flags_of(w[0]) & 1) ? pr.first : pr.second;
    if (st_.frag == dest && st_.leader) return true;
    auto it = pair_next_.find(pr);
    if (it == pair_next_.end()) ctx.fail("merge walk lost");
    std::size_t nxt = 0;
    bool found = false;
    for (std::size_t q : it->second)
      if (q != p) {
        nxt = q;
        found = true;
      }
    if (!found) ctx.fail("merge walk dead-ends");
    out_.push(nxt, std::vector<u64>(w), tag);
    return false;
  }

  void leg(NodeContext& ctx, u64 j) {
    if (!st_.leader) return;
    if (j == 0) {  // targets announce their activity to every proposer
      for (const auto& [pr, d] : duty_)
        if (d.incoming)
          pair_send(ctx, pr, d.from == pr.first, kTact, active_ ? 1 : 0,
                    "matching");
    } else if (j == 1) {  // and whether they propose inside the game themselves
      game_ = active_ && has_loe_ && tgt_active_;
      for (const auto& [pr, d] : duty_)
        if (d.incoming && active_)
          pair_send(ctx, pr, d.from == pr.first, kTpro, game_ ? 1 : 0,
                    "matching");
    } else if (j >= 2 && j <= 11) {  // color-reduction steps 0..9
      if (game_) color_step(j - 2);
      if (game_)
        for (const auto& [pr, d] : duty_)
          if (d.incoming && active_)
            pair_send(ctx, pr, d.from == pr.first, kClr, color_, "matching");
    } else if (j == 12 || j == 14 || j == 16) {  // proposal phases 0..2
      const u64 ph = (j - 12) / 2;
      if (ph == 0 && game_) color_step(10);
      pre_matched_ = matched_;
      if (game_ && !matched_ && color_ == ph)
        pair_send(ctx, my_pair_, tgt_ == my_pair_.first, kProp, 0, "matching");
    } else if (j == 13 || j == 15 || j == 17) {  // targets decide
      if (!props_.empty()) {
        u64 winner = 0;
        bool have = false;
        if (!pre_matched_)
          for (const auto& pr : props_) {
            const u64 o = other_of(pr);
            if (!have || o < winner) {
              winner = o;
              have = true;
            }
          }
        for (const auto& pr : props_) {
          const bool acc = have && other_of(pr) == winner;
          pair_send(ctx, pr, other_of(pr) == pr.first, kPdec, acc ? 1 : 0,
                    "matching");
          if (acc) {
            matched_ = true;
            pair_other_ = winner;
            pair_dom_ = std::max(st_.frag, winner);
          }
        }
        props_.clear();
      }
    } else if (j == 18) {  // unmatched proposers request absorption
      forced_ = active_ && has_loe_ && !matched_;
      if (forced_)
        pair_send(ctx, my_pair_, tgt_ == my_pair_.first, kMreq, 0, "merge");
    } else if (j == 19) {  // targets hand out the post-merge id
      for (const auto& pr : mreqs_) {
        u64 nid = 0;
        if (matched_)
          nid = pair_dom_;
        else if (!active_)
          nid = st_.frag;
        else
          ctx.fail("matching left an augmenting edge");
        pair_send(ctx, pr, other_of(pr) == pr.first, kMdom, nid, "merge");
        used_.insert(pr);
      }
      mreqs_.clear();
    }
  }

  void color_step(u64 step) {
    if (step == 0) {
      color_ = st_.frag;
      return;
    }
    if (step <= 4) {
      color_ = parent_props_ ? cvcolor::reduce(color_, parent_clr_)
                             : cvcolor::reduce_root(color_);
      return;
    }
    if (step == 5 || step == 7 || step == 9) {
      old_self_ = color_;
      color_ = parent_props_ ? parent_clr_ : cvcolor::shift_root(color_);
      return;
    }
    const u64 cls = step == 6 ? 5 : step == 8 ? 4 : 3;
    if (color_ == cls)
      color_ = cvcolor::elim_pick(parent_props_ ? parent_clr_ : kNoParent,
                                  old_self_);
  }

  // ---- relabel flood: rebuild every surviving fragment one level up ----
  void flood_start(NodeContext& ctx) {
    if (!st_.leader) return;
    if (matched_) used_.insert(ordered(st_.frag, pair_other_));
    if (awaiting_) used_.insert(my_pair_);
    const bool dominated = matched_ && pair_dom_ != st_.frag;
    if (dominated || awaiting_) return;  // our new id arrives over the walk
    joined_.insert(st_.frag);
    adopt(st_.frag);
    flood_out(ctx, st_.frag, std::nullopt);
  }

  void adopt(u64 nid) {
    adopted_ = true;
    new_frag_ = nid;
    new_leader_ = st_.id == nid;
  }

  void join(NodeContext&, u64 nid, std::size_t p) {
    if (!joined_.insert(nid).second) return;
    st_.rt.up[{nid, static_cast<u32>(sc_.t + 1)}] = p;
    out_.push(p, {pack(kAck, 0, 0, 0), nid}, "merge");
  }

  void flood_out(NodeContext& ctx, u64 nid,
                 std::optional<std::pair<u64, u64>> skip) {
    const u64 ttl = rlb_ttl();
    tree_fwd_.insert(st_.frag);
    auto dn = st_.rt.down.find({st_.frag, static_cast<u32>(sc_.t)});
    if (dn != st_.rt.down.end())
      for (std::size_t q : dn->second)
        out_.push(q, {pack(kRlb, 0, 0, ttl), nid, st_.frag}, "merge");
    for (const auto& pr : used_) {
      if (skip && *skip == pr) continue;
      if (pr.first != st_.frag && pr.second != st_.frag) continue;
      if (!walk_fwd_.insert(pr).second) continue;
      auto it = pair_next_.find(pr);
      if (it == pair_next_.end() || it->second.empty())
        ctx.fail("merge walk lost");
      out_.push(*it->second.begin(),
                {pack(kRlb, 0, kRelayFlag, ttl), nid, pr.first, pr.second},
                "merge");
    }
  }

  void rlb_in(NodeContext& ctx, std::size_t p, const std::vector<u64>& w) {
    const u64 ttl = ttl_of(w[0]);
    if (ttl == 0) ctx.fail("relabel flood overran its budget");
    const u64 nid = w[1];
    if (flags_of(w[0]) & kRelayFlag) {
      if (w.size() < 4) ctx.fail("malformed message");
      const std::pair<u64, u64> pr{w[2], w[3]};
      join(ctx, nid, p);
      if ((st_.frag == pr.first || st_.frag == pr.second) && st_.leader) {
        if (adopted_) return;
        if (awaiting_ && nid != expect_newid_) ctx.fail("merge id mismatch");
        if (matched_ && nid != pair_dom_) ctx.fail("merge id mismatch");
        adopt(nid);
        flood_out(ctx, nid, pr);
      } else {
        if (!walk_fwd_.insert(pr).second) return;
        auto it = pair_next_.find(pr);
        if (it == pair_next_.end()) ctx.fail("merge walk lost");
        std::size_t nxt = 0;
        bool found = false;
        for (std::size_t q : it->second)
          if (q != p) {
            nxt = q;
            found = true;
          }
        if (!found) ctx.fail("merge walk dead-ends");
        out_.push(nxt,
                  {pack(kRlb, 0, kRelayFlag, ttl - 1), nid, pr.first, pr.second},
                  "merge");
      }
    } else {
      if (w.size() < 3) ctx.fail("malformed message");
      const u64 via = w[2];
      join(ctx, nid, p);
      if (via == st_.frag && !adopted_) adopt(nid);
      if (tree_fwd_.insert(via).second) {
        auto dn = st_.rt.down.find({via, static_cast<u32>(sc_.t)});
        if (dn != st_.rt.down.end())
          for (std::size_t q : dn->second)
            if (q != p)
              out_.push(q, {pack(kRlb, 0, 0, ttl - 1), nid, via}, "merge");
      }
    }
  }

  // ---- tree-edge marking for the selected merge edges ----
  void mark_descend(NodeContext& ctx) {
    const auto& a = fl_.agg[st_.frag];
    if (a.via.self)
      mark_here(ctx);
    else
      out_.push(a.via.port, {pack(kMrk, 0, 0, 0), st_.frag}, "merge");
  }

  void mark_here(NodeContext& ctx) {
    if (!own_cand_) ctx.fail("winner retrace lost");
    st_.tree_ports.insert(cand_port_);
    out_.push(cand_port_, {pack(kTre, 0, 0, 0)}, "merge");
  }

  // ---- inbound dispatch ----
  void handle(NodeContext& ctx, std::size_t p, const std::vector<u64>& w) {
    if (w.empty()) ctx.fail("malformed message");
    switch (op_of(w[0])) {
      case kExch:
        if (w.size() < 2) ctx.fail("malformed message");
        nfrag_[p] = w[1];
        got_nf_[p] = 1;
        break;
      case kFlv:
        if (!fl_.on_msg(p, w, out_)) ctx.fail("unexpected lightest-edge report");
        break;
      case kGp:
        if (w.size() < 2) ctx.fail("malformed message");
        if (!st_.tree_ports.count(p)) ctx.fail("tree sweep off the tree");
        if (!pulse_in_.emplace(p, w[1]).second)
          ctx.fail("duplicate tree sweep");
        pulse_try(ctx);
        break;
      case kGv:
        if (!gate_.on_msg(p, w, out_)) ctx.fail("unexpected gate report");
        break;
      case kNtf: {
        if (w.size() < 2) ctx.fail("malformed message");
        auto it = fl_.agg.find(w[1]);
        if (it == fl_.agg.end() || !it->second.sent)
          ctx.fail("winner retrace lost");
        if (it->second.sent_via.self)
          send_xloe(ctx);
        else
          out_.push(it->second.sent_via.port, {pack(kNtf, 0, 0, 0), w[1]},
                    "findlightest");
        break;
      }
      case kXloe: {
        if (w.size() < 5) ctx.fail("malformed message");
        const u64 from = w[1];
        if (st_.leader) {
          record_inloe(from, {w[2], w[3], w[4]});
        } else {
          auto up = st_.rt.up.find({st_.frag, static_cast<u32>(sc_.t)});
          if (up == st_.rt.up.end())
            ctx.fail("no route toward the fragment leader");
          out_.push(up->second,
                    {pack(kInloe, 0, 0, par_.climb(sc_.t)), st_.frag, from,
                     w[2], w[3], w[4]},
                    "findlightest");
        }
        break;
      }
      case kInloe: {
        if (w.size() < 6) ctx.fail("malformed message");
        const u64 target = w[1];
        if (st_.frag == target && st_.leader) {
          record_inloe(w[2], {w[3], w[4], w[5]});
          break;
        }
        if (ttl_of(w[0]) == 0) ctx.fail("leader route overran its budget");
        auto up = st_.rt.up.find({target, static_cast<u32>(sc_.t)});
        if (up == st_.rt.up.end())
          ctx.fail("no route toward the fragment leader");
        out_.push(up->second,
                  {pack(kInloe, 0, 0, ttl_of(w[0]) - 1), target, w[2], w[3],
                   w[4], w[5]},
                  "findlightest");
        break;
      }
      case kPrb: {
        if (w.size() < 4) ctx.fail("malformed message");
        const u64 ckey = w[1];
        const std::pair<u64, u64> pr{w[2], w[3]};
        const u64 side = flags_of(w[0]) & 1;
        auto st = stop_ix_.find(ckey);
        if (st == stop_ix_.end()) ctx.fail("probe strayed off its cluster");
        if (!crumb_.emplace(std::tuple{ckey, pr.first, pr.second, side}, p)
                 .second)
          ctx.fail("duplicate probe");
        if (st->second->parent_port == 0)
          root_meet(ctx, ckey, pr, side);
        else
          out_.push(st->second->parent_port, std::vector<u64>(w), "findpath");
        break;
      }
      case kSuc: {
        if (w.size() < 5) ctx.fail("malformed message");
        const u64 ckey = w[1];
        const std::pair<u64, u64> pr{w[2], w[3]};
        const u64 sd = flags_of(w[0]) & 1;
        auto c = crumb_.find({ckey, pr.first, pr.second, sd});
        if (c != crumb_.end()) {
          out_.push(c->second, std::vector<u64>(w), "findpath");
          break;
        }
        if ((sd == 0 && st_.frag != pr.first) ||
            (sd == 1 && st_.frag != pr.second))
          ctx.fail("misdelivered success notice");
        succ_found(pr, w[4], ckey);
        break;
      }
      case kIns:
        if (w.size() < 4) ctx.fail("malformed message");
        ins_in(ctx, p, w);
        break;
      case kTact:
        if (w.size() < 4) ctx.fail("malformed message");
        if (pair_route(ctx, p, w, "matching")) tgt_active_ = w[3] & 1;
        break;
      case kTpro:
        if (w.size() < 4) ctx.fail("malformed message");
        if (pair_route(ctx, p, w, "matching")) parent_props_ = w[3] & 1;
        break;
      case kClr:
        if (w.size() < 4) ctx.fail("malformed message");
        if (pair_route(ctx, p, w, "matching")) parent_clr_ = w[3];
        break;
      case kProp:
        if (w.size() < 4) ctx.fail("malformed message");
        if (pair_route(ctx, p, w, "matching")) props_.push_back({w[1], w[2]});
        break;
      case kPdec:
        if (w.size() < 4) ctx.fail("malformed message");
        if (pair_route(ctx, p, w, "matching") && (w[3] & 1)) {
          matched_ = true;
          as_proposer_ = true;
          pair_other_ = tgt_;
          pair_dom_ = std::max(st_.frag, tgt_);
        }
        break;
      case kMreq:
        if (w.size() < 4) ctx.fail("malformed message");
        if (pair_route(ctx, p, w, "merge")) mreqs_.push_back({w[1], w[2]});
        break;
      case kMdom:
        if (w.size() < 4) ctx.fail("malformed message");
        if (pair_route(ctx, p, w, "merge")) {
          expect_newid_ = w[3];
          awaiting_ = true;
        }
        break;
      case kRlb:
        if (w.size() < 3) ctx.fail("malformed message");
        rlb_in(ctx, p, w);
        break;
      case kAck:
        if (w.size() < 2) ctx.fail("malformed message");
        st_.rt.down[{w[1], static_cast<u32>(sc_.t + 1)}].insert(p);
        break;
      case kMrk: {
        if (w.size() < 2) ctx.fail("malformed message");
        auto it = fl_.agg.find(w[1]);
        if (it == fl_.agg.end() || !it->second.sent)
          ctx.fail("winner retrace lost");
        if (it->second.sent_via.self)
          mark_here(ctx);
        else
          out_.push(it->second.sent_via.port, {pack(kMrk, 0, 0, 0), w[1]},
                    "merge");
        break;
      }
      case kTre:
        st_.tree_ports.insert(p);
        break;
      default:
        ctx.fail("unrecognized message");
    }
  }

  void finish(NodeContext& ctx) {
    if (!adopted_) ctx.fail("merge flood never arrived");
    if (st_.leader && awaiting_ && new_frag_ != expect_newid_)
      ctx.fail("merge id mismatch");
    if (!out_.empty()) ctx.fail("unsent traffic at the stage boundary");
    info_.leader = st_.leader;
    info_.frag = st_.frag;
    info_.has_loe = has_loe_;
    info_.loe = loe_;
    info_.tgt = tgt_;
    info_.tree_diam = tree_diam_;
    info_.active = active_;
    if (st_.leader && active_ && has_loe_) {
      auto it = succ_lvl_.find(my_pair_);
      if (it != succ_lvl_.end()) info_.succ_level = it->second;
    }
    info_.matched = matched_;
    info_.as_proposer = as_proposer_;
    info_.forced = forced_;
    info_.pair_other = pair_other_;
    info_.pair_dom = pair_dom_;
    st_.frag = new_frag_;
    st_.leader = new_leader_;
    ctx.halt();
  }

  // ---- members ----
  OptState st_;
  std::vector<std::vector<ClusterStop>> stops_;
  std::map<u64, const ClusterStop*> stop_ix_;
  GrowthSchedule sc_;
  GrowthParams par_;
  std::size_t deg_;
  OutBox out_;
  std::size_t mark_ix_ = 0;

  std::vector<u64> nfrag_;
  std::vector<char> got_nf_;
  std::vector<u64> keys_;
  Climber fl_;
  std::optional<std::array<u64, 3>> own_cand_;
  std::size_t cand_port_ = 0;
  bool has_loe_ = false;
  std::array<u64, 3> loe_{};
  u64 tgt_ = 0;

  std::map<std::size_t, u64> pulse_in_;
  std::set<std::size_t> pulse_done_;
  Climber gate_;
  u64 tree_diam_ = 0;
  bool active_ = false;

  struct InLoe {
    u64 from = 0;
    std::array<u64, 3> key{};
  };
  std::map<std::pair<u64, u64>, InLoe> in_;

  struct Duty {
    bool mine = false;
    bool incoming = false;
    u64 from = 0;
  };
  std::map<std::pair<u64, u64>, Duty> duty_;
  std::map<std::tuple<u64, u64, u64, u64>, std::size_t> crumb_;
  std::map<std::tuple<u64, u64, u64>, std::array<bool, 2>> seen_;
  std::map<std::pair<u64, u64>, std::set<std::pair<u64, u64>>> succ_cand_;
  std::map<std::pair<u64, u64>, std::size_t> succ_lvl_;
  std::map<std::pair<u64, u64>, std::set<std::size_t>> pair_next_;

  bool game_ = false;
  bool tgt_active_ = false;
  bool parent_props_ = false;
  u64 color_ = 0, old_self_ = 0, parent_clr_ = 0;
  bool matched_ = false, pre_matched_ = false, as_proposer_ = false,
       forced_ = false;
  u64 pair_other_ = 0, pair_dom_ = 0;
  std::pair<u64, u64> my_pair_{};
  std::vector<std::pair<u64, u64>> props_;
  std::vector<std::pair<u64, u64>> mreqs_;
  std::set<std::pair<u64, u64>> used_;
  bool awaiting_ = false;
  u64 expect_newid_ = 0;

  std::set<u64> joined_;
  std::set<u64> tree_fwd_;
  std::set<std::pair<u64, u64>> walk_fwd_;
  bool adopted_ = false;
  u64 new_frag_ = 0;
  bool new_leader_ = false;

  LeaderInfo info_;
};

// ---------------------------------------------------------------------------
// Global merging over the elected BFS tree ("phase3"): per iteration every
// fragment leader reports its class label and lightest inter-class edge up
// the tree; the root unions classes, renames them, and the new labels flow
// back down and across every fragment overlay.
// ---------------------------------------------------------------------------
struct P3Sched {
  std::size_t lvl = 1;
  u64 a0 = 0, u0 = 0, d0 = 0, b0 = 0, f0 = 0, len = 0;
  std::size_t cap = 0;
  u64 stage_end = 0;
  std::vector<u64> marks;

  static P3Sched make(const GrowthParams& par, std::size_t lvl) {
    P3Sched sc;
    sc.lvl = lvl;
    const u64 climb = par.climb(lvl);
    const u64 upwin = par.dtilde + par.slack + 6;
    sc.a0 = 3;
    sc.u0 = sc.a0 + climb;
    sc.d0 = sc.u0 + upwin;
    sc.b0 = sc.d0 + upwin;
    sc.f0 = sc.b0 + climb;
    sc.len = sc.f0 + par.dtilde + 6;
    sc.cap = par.lg + 2;
    for (std::size_t i = 0; i < sc.cap; ++i) {
      const u64 base = i * sc.len;
      for (u64 off : {u64(0), sc.a0, sc.u0, sc.d0, sc.b0, sc.f0})
        sc.marks.push_back(base + off);
    }
    sc.stage_end = sc.cap * sc.len;
    sc.marks.push_back(sc.stage_end);
    return sc;
  }
};

class FinalMergeNode : public NodeBehavior {
  enum Op : u64 { kPxch = 1, kPfl, kUpl, kDnl, kPlb, kFin };

 public:
  FinalMergeNode(const NodeInit& init, OptState st, GrowthParams par,
                 P3Sched sc)
      : st_(std::move(st)),
        par_(std::move(par)),
        sc_(std::move(sc)),
        deg_(init.degree),
        label_(st_.frag) {
    nlab_.assign(deg_ + 1, 0);
    got_nl_.assign(deg_ + 1, 0);
    std::set<u64> ks{st_.frag};
    for (const auto& [k, v] : st_.rt.up)
      if (k.second == sc_.lvl) ks.insert(k.first);
    for (const auto& [k, v] : st_.rt.down)
      if (k.second == sc_.lvl) ks.insert(k.first);
    keys_.assign(ks.begin(), ks.end());
  }

  void on_round(NodeContext& ctx) override {
    const u64 r = ctx.round();
    for (const auto& [p, m] : ctx.inbox()) handle(ctx, p, m.words);
    boundaries(ctx, r);
    if (halted_) return;
    out_.flush(ctx);
    while (mark_ix_ < sc_.marks.size() && sc_.marks[mark_ix_] <= r) ++mark_ix_;
    if (mark_ix_ < sc_.marks.size()) ctx.wake_at(sc_.marks[mark_ix_]);
  }

  std::vector<u64> output() const override { return {label_, st_.frag}; }

  const std::vector<std::size_t>& label_counts() const { return label_counts_; }
  const std::vector<std::array<u64, 3>>& mst_keys() const { return mst_keys_; }

 private:
  bool is_root() const { return st_.bfs_parent == 0; }

  void boundaries(NodeContext& ctx, u64 r) {
    if (r % sc_.len == 0 || r == sc_.stage_end) {
      // iteration boundary
      if (fin_received_) {
        if (!out_.empty()) ctx.fail("unsent traffic at the stage boundary");
        halted_ = true;
        ctx.halt();
        return;
      }
      if (r >= sc_.stage_end) ctx.fail("label count failed to reach 1");
      if (r > 0 && !plb_got_) ctx.fail("label broadcast missing");
      std::fill(got_nl_.begin(), got_nl_.end(), 0);
      crumb3_.clear();
      plb_fwd_.clear();
      plb_got_ = false;
      for (std::size_t p = 1; p <= deg_; ++p)
        out_.push(p, {pack(kPxch, 0, 0, 0), label_}, "phase3");
      return;
    }
    const u64 off = r % sc_.len;
    if (off == sc_.a0) climb_start(ctx);
    if (off == sc_.u0) report_up(ctx);
    if (off == sc_.d0 && is_root()) root_decide(ctx);
    if (off == sc_.b0 && st_.leader) {
      plb_got_ = true;
      auto dn = st_.rt.down.find({st_.frag, static_cast<u32>(sc_.lvl)});
      if (dn != st_.rt.down.end())
        for (std::size_t q : dn->second)
          out_.push(q, {pack(kPlb, 0, 0, 0), st_.frag, label_}, "phase3");
    }
    if (off == sc_.f0 && is_root() && fin_pending_) {
      fin_received_ = true;
      for (std::size_t q : st_.bfs_children)
        out_.push(q, {pack(kFin, 0, 0, 0)}, "phase3");
    }
  }

  void climb_start(NodeContext& ctx) {
    std::optional<std::array<u64, 5>> own;
    for (std::size_t p = 1; p <= deg_; ++p) {
      if (!got_nl_[p]) ctx.fail("label exchange incomplete");
      if (nlab_[p] == label_) continue;
      const WeightKey k = ctx.weight_at(p);
      const std::array<u64, 5> c{k.numeric, k.lo, k.hi, label_, nlab_[p]};
      if (!own || std::tie(c[0], c[1], c[2]) <
                      std::tie((*own)[0], (*own)[1], (*own)[2]))
        own = c;
    }
    cl_ = Climber{.opcode = kPfl,
                  .width = 5,
                  .maximize = false,
                  .lvl = sc_.lvl,
                  .rt = &st_.rt,
                  .tag = "phase3",
                  .agg = {}};
    for (u64 key : keys_)
      cl_.start(key, key == st_.frag ? own : std::nullopt, out_);
  }

  void report_up(NodeContext& ctx) {
    for (u64 key : keys_)
      if (!cl_.settled(key, st_.leader && key == st_.frag))
        ctx.fail("final-merge aggregation stalled");
    if (!st_.leader) return;
    const auto& a = cl_.agg[st_.frag];
    std::vector<u64> w{pack(kUpl, 0, a.has ? 0 : 1, 0), label_, 0, 0, 0, 0};
    if (a.has) {
      w[2] = a.best[0];
      w[3] = a.best[1];
      w[4] = a.best[2];
      w[5] = a.best[4];  // the label on the far side
    }
    if (is_root())
      row_in(flags_of(w[0]) & 1, w);
    else
      out_.push(st_.bfs_parent, std::move(w), "phase3");
  }

  struct Row {
    u64 label = 0;
    bool has = false;
    std::array<u64, 3> key{};
    u64 far = 0;
  };

  void row_in(bool empty, const std::vector<u64>& w) {
    Row row;
    row.label = w[1];
    row.has = !empty;
    row.key = {w[2], w[3], w[4]};
    row.far = w[5];
    rows_.push_back(row);
  }

  u64 find3(u64 x) {
    auto it = par3_.find(x);
    if (it == par3_.end() || it->second == x) return x;
    const u64 r = find3(it->second);
    it->second = r;
    return r;
  }

  void root_decide(NodeContext&) {
    std::map<u64, std::optional<Row>> groups;
    for (const auto& row : rows_) {
      auto& slot = groups[row.label];
      if (!row.has) {
        if (!slot.has_value()) slot = std::nullopt;
        continue;
      }
      if (!slot.has_value() || !(*slot).has ||
          std::tie(row.key[0], row.key[1], row.key[2]) <
              std::tie((*slot).key[0], (*slot).key[1], (*slot).key[2]))
        slot = row;
    }
    rows_.clear();
    label_counts_.push_back(groups.size());
    if (groups.size() <= 1) {
      fin_pending_ = true;
      return;
    }
    for (const auto& [la, slot] : groups) {
      if (!slot.has_value() || !(*slot).has) continue;
      const u64 a = find3(la);
      const u64 b = find3((*slot).far);
      if (a == b) continue;
      par3_[std::min(a, b)] = std::max(a, b);
      mst_keys_.push_back((*slot).key);
    }
    for (const auto& [la, slot] : groups) {
      const u64 nl = find3(la);
      if (nl == la) continue;
      if (st_.leader && label_ == la) label_ = nl;
      auto c = crumb3_.find(la);
      if (c != crumb3_.end())
        for (std::size_t q : c->second)
          out_.push(q, {pack(kDnl, 0, 0, 0), la, nl}, "phase3");
    }
  }

  void handle(NodeContext& ctx, std::size_t p, const std::vector<u64>& w) {
    if (w.empty()) ctx.fail("malformed message");
    switch (op_of(w[0])) {
      case kPxch:
        if (w.size() < 2) ctx.fail("malformed message");
        nlab_[p] = w[1];
        got_nl_[p] = 1;
        break;
      case kPfl:
        if (!cl_.on_msg(p, w, out_))
          ctx.fail("unexpected final-merge report");
        break;
      case kUpl:
        if (w.size() < 6) ctx.fail("malformed message");
        crumb3_[w[1]].insert(p);
        if (is_root())
          row_in(flags_of(w[0]) & 1, w);
        else
          out_.push(st_.bfs_parent, std::vector<u64>(w), "phase3");
        break;
      case kDnl: {
        if (w.size() < 3) ctx.fail("malformed message");
        const u64 la = w[1], nl = w[2];
        if (st_.leader && label_ == la) label_ = nl;
        auto c = crumb3_.find(la);
        if (c != crumb3_.end())
          for (std::size_t q : c->second)
            out_.push(q, {pack(kDnl, 0, 0, 0), la, nl}, "phase3");
        break;
      }
      case kPlb: {
        if (w.size() < 3) ctx.fail("malformed message");
        const u64 via = w[1];
        if (!plb_fwd_.insert(via).second) break;
        if (via == st_.frag) {
          label_ = w[2];
          plb_got_ = true;
        }
        auto dn = st_.rt.down.find({via, static_cast<u32>(sc_.lvl)});
        if (dn != st_.rt.down.end())
          for (std::size_t q : dn->second)
            if (q != p) out_.push(q, std::vector<u64>(w), "phase3");
        break;
      }
      case kFin:
        fin_received_ = true;
        for (std::size_t q : st_.bfs_children)
          out_.push(q, {pack(kFin, 0, 0, 0)}, "phase3");
        break;
      default:
        ctx.fail("unrecognized message");
    }
  }

  OptState st_;
  GrowthParams par_;
  P3Sched sc_;
  std::size_t deg_;
  u64 label_;
  OutBox out_;
  std::size_t mark_ix_ = 0;
  bool halted_ = false;

  std::vector<u64> nlab_;
  std::vector<char> got_nl_;
  std::vector<u64> keys_;
  Climber cl_;
  std::map<u64, std::set<std::size_t>> crumb3_;
  std::set<u64> plb_fwd_;
  bool plb_got_ = false;
  std::vector<Row> rows_;
  std::map<u64, u64> par3_;
  std::vector<std::size_t> label_counts_;
  std::vector<std::array<u64, 3>> mst_keys_;
  bool fin_pending_ = false;
  bool fin_received_ = false;
};

std::size_t fragment_count_of(const std::vector<OptState>& st) {
  std::set<u64> f;
  for (const auto& s : st) f.insert(s.frag);
  return f.size();
}

}  // namespace

// ---------------------------------------------------------------------------
// Public entry points.
// ---------------------------------------------------------------------------

DiameterResult estimate_diameter(const WeightedGraph& g,
                                 const RunOptions& opts) {
  DiameterResult out;
  if (g.n() == 0) throw ParamError("graph has no nodes");
  if (g.n() == 1) {
    out.leader = g.node_ids()[0];
    out.bfs_parent_port = {0};
    return out;
  }
  auto res = run_protocol(
      g, [](const NodeInit& init) { return std::make_unique<ElectNode>(init); },
      opts);
  out.metrics = res.metrics;
  out.bfs_parent_port.resize(g.n());
  for (std::size_t i = 0; i < g.n(); ++i) {
    auto* e = static_cast<const ElectNode*>(res.nodes[i].get());
    out.leader = e->leader();
    out.dtilde = e->dtilde();
    out.bfs_parent_port[i] = e->parent_port();
  }
  return out;
}

Phase1Result init_phase1(const WeightedGraph& g, const MstForest& forest,
                         const RunOptions& opts) {
  if (forest.fragment.size() != g.n() || forest.parent_port.size() != g.n())
    throw ParamError("forest does not match the graph");
  Phase1Result out;
  std::vector<std::set<std::size_t>> tp(g.n());
  for (std::size_t e : forest.tree_edges) {
    if (e >= g.m()) throw ParamError("forest references a missing edge");
    const auto& ed = g.edge(e);
    const std::size_t ia = g.index_of(ed.a), ib = g.index_of(ed.b);
    tp[ia].insert(g.port_of_edge(ia, e));
    tp[ib].insert(g.port_of_edge(ib, e));
  }
  std::vector<OptState> st(g.n());
  for (std::size_t i = 0; i < g.n(); ++i) {
    st[i].id = g.id_of(i);
    st[i].index = i;
    st[i].frag = forest.fragment[i];
    st[i].leader = forest.fragment[i] == g.id_of(i);
    st[i].tree_ports = std::move(tp[i]);
  }
  // any tree floods within n rounds; trailing silence costs nothing
  const u64 window = static_cast<u64>(g.n()) + 2;
  auto res = run_protocol(
      g,
      [&](const NodeInit& init) {
        return std::make_unique<TreeBuildNode>(st[init.index], window);
      },
      opts);
  out.metrics = res.metrics;
  out.routing.resize(g.n());
  for (std::size_t i = 0; i < g.n(); ++i)
    out.routing[i] =
        static_cast<const TreeBuildNode*>(res.nodes[i].get())->state().rt;
  return out;
}

GrowthStep guarded_merge_step(
    const WeightedGraph& g, const std::vector<std::uint64_t>& fragment,
    const std::map<std::uint64_t, std::size_t>& proposals,
    const std::map<std::uint64_t, bool>& active) {
  if (fragment.size() != g.n())
    throw ParamError("fragment assignment size must equal node count");
  std::map<u64, u64> target_of;
  for (const auto& [c, e] : proposals) {
    if (e >= g.m()) throw ParamError("proposal references a missing edge");
    const auto& ed = g.edge(e);
    const u64 ca = fragment[g.index_of(ed.a)];
    const u64 cb = fragment[g.index_of(ed.b)];
    if ((ca == c) == (cb == c))
      throw ParamError("proposed edge must have exactly one endpoint inside");
    target_of[c] = ca == c ? cb : ca;
  }
  auto is_active = [&](u64 f) {
    auto it = active.find(f);
    return it != active.end() && it->second;
  };
  std::map<u64, u64> mt;
  for (const auto& [c, t] : target_of)
    if (is_active(c) && is_active(t)) mt[c] = t;
  const MatchingOutcome mo = cv_match(mt);

  std::map<u64, u64> newid;
  std::set<u64> in_pair;
  for (const auto& [p, t] : mo.matched_pairs) {
    const u64 dom = std::max(p, t);
    newid[p] = dom;
    newid[t] = dom;
    in_pair.insert(p);
    in_pair.insert(t);
  }
  std::vector<u64> forced;
  for (const auto& [c, t] : target_of)
    if (is_active(c) && !in_pair.count(c)) forced.push_back(c);
  for (u64 f : forced) {
    const u64 t = target_of.at(f);
    newid[f] = newid.count(t) ? newid.at(t) : t;
  }

  GrowthStep out;
  out.fragment.resize(g.n());
  for (std::size_t i = 0; i < g.n(); ++i) {
    auto it = newid.find(fragment[i]);
    out.fragment[i] = it == newid.end() ? fragment[i] : it->second;
  }
  out.matched_pairs = mo.matched_pairs;
  std::sort(out.matched_pairs.begin(), out.matched_pairs.end());
  out.forced = std::move(forced);
  for (const auto& [p, t] : out.matched_pairs)
    out.added_edges.push_back(proposals.at(p));
  for (u64 f : out.forced) out.added_edges.push_back(proposals.at(f));
  std::sort(out.added_edges.begin(), out.added_edges.end());
  return out;
}

std::optional<std::size_t> smallest_joint_cover_level(
    const std::vector<Cover>& covers, std::uint64_t a, std::uint64_t b) {
  for (std::size_t k = 1; k <= covers.size(); ++k)
    for (const auto& cl : covers[k - 1].clusters)
      if (cl.parent_port.count(a) && cl.parent_port.count(b)) return k;
  return std::nullopt;
}

std::uint64_t growth_cluster_radius(std::uint64_t level,
                                    std::uint64_t sqrt_ceil,
                                    std::uint64_t dtilde, double c1) {
  const double raw = 6.0 * c1 * static_cast<double>(u64(1) << (level + 1)) *
                     static_cast<double>(sqrt_ceil);
  const u64 w = static_cast<u64>(std::ceil(raw - 1e-9));
  return std::min(w, std::max<u64>(dtilde, 1));
}

std::size_t growth_iterations(std::uint64_t dtilde, std::size_t n) {
  if (n == 0) throw ParamError("graph has no nodes");
  const double r =
      static_cast<double>(dtilde) / std::sqrt(static_cast<double>(n));
  if (!(r > 1.0)) return 1;
  const double l = std::ceil(std::log2(r) - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(l));
}

OptMstResult run_opt_mst(const WeightedGraph& g, const AlgoConfig& cfg,
                         std::uint64_t seed, const RunOptions& opts) {
  if (cfg.c1 < 1.0 || cfg.c2 < 1.0)
    throw ParamError("growth constants must be at least 1");
  if (g.n() == 0) throw ParamError("graph has no nodes");

  OptMstResult out;
  out.mst.source = "opt";
  const std::size_t n = g.n();
  if (n == 1) {
    out.trace.leader = g.node_ids()[0];
    out.trace.base_fragment = {g.node_ids()[0]};
    out.trace.label_counts = {1};
    out.trace.phase3_iterations = 1;
    out.routing.resize(1);
    return out;
  }

  std::map<std::array<u64, 3>, std::size_t> by_key;
  for (std::size_t e = 0; e < g.m(); ++e) {
    const WeightKey k = g.edge(e).key();
    by_key[{k.numeric, k.lo, k.hi}] = e;
  }

  RunOptions ro = opts;

  // Stage 1: bounded fragment growth.
  ro.seed = derive_stream(seed, 1).next();
  auto ghs = controlled_ghs(g, ro);
  accumulate_metrics(out.metrics, ghs.metrics);
  out.trace.base_fragment = ghs.forest.fragment;

  // Stage 2: leader election and diameter estimate.
  ro.seed = derive_stream(seed, 2).next();
  const DiameterResult dia = estimate_diameter(g, ro);
  accumulate_metrics(out.metrics, dia.metrics);
  out.trace.dtilde = dia.dtilde;
  out.trace.leader = dia.leader;
  const u64 dt =
      std::max<u64>(cfg.dtilde_override ? cfg.dtilde_override : dia.dtilde, 1);

  // Stage 3: per-fragment overlay trees (routing level 1).
  ro.seed = derive_stream(seed, 3).next();
  const Phase1Result p1 = init_phase1(g, ghs.forest, ro);
  accumulate_metrics(out.metrics, p1.metrics);

  const u64 s = isqrt_ceil(n);
  GrowthParams par;
  par.n = n;
  par.s = s;
  par.lg = std::max<u64>(1, ilog2_ceil(n));
  par.dtilde = dt;
  par.slack = static_cast<u64>(
      std::ceil(cfg.probe_slack * std::sqrt(static_cast<double>(n)) *
                static_cast<double>(par.lg)));
  par.c1 = cfg.c1;

  std::vector<OptState> st(n);
  for (std::size_t i = 0; i < n; ++i) {
    st[i].id = g.id_of(i);
    st[i].index = i;
    st[i].frag = ghs.forest.fragment[i];
    st[i].leader = ghs.forest.fragment[i] == g.id_of(i);
    st[i].rt = p1.routing[i];
    st[i].bfs_parent = dia.bfs_parent_port[i];
  }
  for (std::size_t e : ghs.forest.tree_edges) {
    const auto& ed = g.edge(e);
    const std::size_t ia = g.index_of(ed.a), ib = g.index_of(ed.b);
    st[ia].tree_ports.insert(g.port_of_edge(ia, e));
    st[ib].tree_ports.insert(g.port_of_edge(ib, e));
  }
  const std::size_t root_ix = g.index_of(dia.leader);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == root_ix) continue;
    const std::size_t e = g.port_edge(i, st[i].bfs_parent);
    const std::size_t pi = g.index_of(g.neighbor_via(i, st[i].bfs_parent));
    st[pi].bfs_children.insert(g.port_of_edge(pi, e));
  }

  // Stage 4: cover-guided local growth while fragments are small.
  out.trace.phase2_skipped =
      static_cast<double>(dt) <= cfg.c_skip * static_cast<double>(s);
  std::size_t maxlvl = 1;
  if (!out.trace.phase2_skipped) {
    const std::size_t iters = growth_iterations(dt, n);
    std::vector<std::vector<std::vector<ClusterStop>>> stops_by_level;
    for (std::size_t t = 1; t <= iters; ++t) {
      if (fragment_count_of(st) == 1) break;

      const u64 radius = growth_cluster_radius(t, s, dt, cfg.c1);
      ro.seed = derive_stream(seed, 100 + t).next();
      CoverResult cov = compute_cover(g, radius, ro.seed, cfg.kappa, ro);
      accumulate_metrics(out.metrics, cov.metrics);
      u64 dep = 1;
      for (const auto& cl : cov.cover.clusters) dep = std::max(dep, cl.depth);
      par.depth.push_back(dep);
      std::vector<std::vector<ClusterStop>> tbl(n);
      for (std::size_t ci = 0; ci < cov.cover.clusters.size(); ++ci) {
        const auto& cl = cov.cover.clusters[ci];
        const u64 ckey = (static_cast<u64>(t) << 32) | ci;
        for (const auto& [nid, pport] : cl.parent_port)
          tbl[g.index_of(nid)].push_back(ClusterStop{ckey, pport});
      }
      stops_by_level.push_back(std::move(tbl));
      out.trace.covers.push_back(std::move(cov.cover));
      out.trace.cover_attempts.push_back(cov.attempts);

      const GrowthSchedule sc = GrowthSchedule::make(t, par);
      GrowthIteration rec;
      rec.iteration = t;
      rec.cover_radius = radius;
      rec.fragment_before.resize(n);
      for (std::size_t i = 0; i < n; ++i) rec.fragment_before[i] = st[i].frag;

      ro.seed = derive_stream(seed, 200 + t).next();
      auto res = run_protocol(
          g,
          [&](const NodeInit& init) {
            std::vector<std::vector<ClusterStop>> mine;
            mine.reserve(stops_by_level.size());
            for (const auto& lv : stops_by_level)
              mine.push_back(lv[init.index]);
            return std::make_unique<GrowthNode>(init, st[init.index],
                                                std::move(mine), sc, par);
          },
          ro);
      accumulate_metrics(out.metrics, res.metrics);
      rec.metrics = res.metrics;

      for (std::size_t i = 0; i < n; ++i) {
        auto* gn = static_cast<const GrowthNode*>(res.nodes[i].get());
        const auto& info = gn->info();
        st[i] = gn->state();
        if (!info.leader) continue;
        if (info.has_loe)
          rec.proposal[info.frag] = by_key.at({info.loe[0], info.loe[1],
                                               info.loe[2]});
        rec.tree_diameter[info.frag] = info.tree_diam;
        rec.active[info.frag] = info.active;
        if (info.succ_level) rec.success_level[info.frag] = info.succ_level;
        if (info.matched && info.as_proposer)
          rec.matched_pairs.push_back({info.frag, info.pair_other});
        if (info.forced) rec.forced.push_back(info.frag);
      }
      rec.fragment_after.resize(n);
      for (std::size_t i = 0; i < n; ++i) rec.fragment_after[i] = st[i].frag;
      std::sort(rec.matched_pairs.begin(), rec.matched_pairs.end());
      std::sort(rec.forced.begin(), rec.forced.end());
      for (const auto& [p, t2] : rec.matched_pairs)
        rec.added_edges.push_back(rec.proposal.at(p));
      for (u64 f : rec.forced) rec.added_edges.push_back(rec.proposal.at(f));
      std::sort(rec.added_edges.begin(), rec.added_edges.end());

      const GrowthStep mirror = guarded_merge_step(g, rec.fragment_before,
                                                   rec.proposal, rec.active);
      if (mirror.fragment != rec.fragment_after ||
          mirror.added_edges != rec.added_edges ||
          mirror.matched_pairs != rec.matched_pairs ||
          mirror.forced != rec.forced)
        throw StructureError("merge stage diverged from its sequential mirror");

      out.trace.growth.push_back(std::move(rec));
      maxlvl = t + 1;
    }
  }

  // Stage 5: global merging over the elected BFS tree.
  const P3Sched sc3 = P3Sched::make(par, maxlvl);
  ro.seed = derive_stream(seed, 4).next();
  auto res3 = run_protocol(
      g,
      [&](const NodeInit& init) {
        return std::make_unique<FinalMergeNode>(init, st[init.index], par, sc3);
      },
      ro);
  accumulate_metrics(out.metrics, res3.metrics);
  auto* rootn = static_cast<const FinalMergeNode*>(res3.nodes[root_ix].get());
  out.trace.label_counts = rootn->label_counts();
  out.trace.phase3_iterations = out.trace.label_counts.size();

  // Assemble the tree: bounded-growth forest + local merges + global merges.
  std::set<std::size_t> chosen(ghs.forest.tree_edges.begin(),
                               ghs.forest.tree_edges.end());
  for (const auto& rec : out.trace.growth)
    for (std::size_t e : rec.added_edges) chosen.insert(e);
  for (const auto& key : rootn->mst_keys()) chosen.insert(by_key.at(key));
  if (chosen.size() != n - 1)
    throw StructureError("selected edges do not form a spanning tree");
  out.mst.edge_indices.assign(chosen.begin(), chosen.end());
  out.mst.source = "opt";
  for (std::size_t e : out.mst.edge_indices)
    out.mst.total_weight += g.edge(e).w;
  const SpanningTreeCheck chk = verify_spanning_tree(g, out.mst.edge_indices);
  if (!chk.ok) throw StructureError(chk.reason);

  out.routing.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.routing[i] = st[i].rt;
  return out;
}

std::string replay_digest(const OptMstResult& result) {
  u64 h = 1469598103934665603ull;
  auto mix = [&h](u64 v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  auto mix_str = [&](const std::string& s) {
    mix(s.size());
    for (char c : s) mix(static_cast<unsigned char>(c));
  };
  mix(result.mst.edge_indices.size());
  for (std::size_t e : result.mst.edge_indices) mix(e);
  mix(result.mst.total_weight);
  mix(result.metrics.rounds);
  mix(result.metrics.messages_total);
  mix(result.metrics.words_total);
  for (const auto& [tag, c] : result.metrics.messages_by_tag) {
    mix_str(tag);
    mix(c);
  }
  const OptTrace& tr = result.trace;
  mix(tr.dtilde);
  mix(tr.leader);
  mix(tr.phase2_skipped ? 1 : 0);
  for (u64 f : tr.base_fragment) mix(f);
  mix(tr.growth.size());
  for (const auto& rec : tr.growth) {
    mix(rec.iteration);
    mix(rec.cover_radius);
    for (const auto& [p, t] : rec.matched_pairs) {
      mix(p);
      mix(t);
    }
    for (u64 f : rec.forced) mix(f);
    for (std::size_t e : rec.added_edges) mix(e);
    for (u64 f : rec.fragment_after) mix(f);
  }
  for (std::size_t c : tr.label_counts) mix(c);
  mix(tr.phase3_iterations);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace cmst
