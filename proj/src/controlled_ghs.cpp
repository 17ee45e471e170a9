#include "cmst/controlled_ghs.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <set>

namespace cmst {

std::size_t MstForest::fragment_count() const {
  std::set<std::uint64_t> ids(fragment.begin(), fragment.end());
  return ids.size();
}

std::size_t controlled_ghs_iterations(std::size_t n) {
  // smallest k with 4^k >= n, plus one: iterations run i = 0..k
  std::size_t k = 0;
  while ((k < 32) && ((std::size_t{1} << (2 * k)) < n)) ++k;
  return k + 1;
}

std::vector<std::uint64_t> fragment_diameter_bounds(std::size_t iterations) {
  // A merge group is one matched pair plus proposers absorbed into it: a
  // chain of at most four fragments of which at most one (a pair member) can
  // be older than this iteration. Hence bound' = bound + 3*2^i + 3.
  std::vector<std::uint64_t> b(iterations + 1);
  b[0] = 0;
  for (std::size_t i = 0; i < iterations; ++i)
    b[i + 1] = b[i] + 3 * (std::uint64_t{1} << i) + 3;
  return b;
}

std::optional<std::size_t> lightest_outgoing_edge_of_component(
    const WeightedGraph& g, const std::vector<char>& in_component) {
  if (in_component.size() != g.n())
    throw ParamError("component mask size must equal node count");
  std::optional<std::size_t> best;
  for (std::size_t e = 0; e < g.m(); ++e) {
    const auto& ed = g.edges()[e];
    bool a = in_component[g.index_of(ed.a)], b = in_component[g.index_of(ed.b)];
    if (a == b) continue;
    if (!best || ed.key() < g.edges()[*best].key()) best = e;
  }
  return best;
}

MatchingOutcome cv_match(const std::map<std::uint64_t, std::uint64_t>& target_of) {
  constexpr std::uint64_t kNoParentColor = 1000;  // outside {0,1,2}
  std::map<std::uint64_t, std::uint64_t> color;
  for (const auto& [c, t] : target_of) {
    if (t == c) throw ParamError("proposal target equals proposer");
    color[c] = c;
  }
  auto parent_color = [&](std::uint64_t c) -> std::optional<std::uint64_t> {
    std::uint64_t t = target_of.at(c);
    auto it = color.find(t);
    if (it == color.end()) return std::nullopt;  // target does not propose
    return it->second;
  };

  for (int j = 0; j < 4; ++j) {
    std::map<std::uint64_t, std::uint64_t> next;
    for (const auto& [c, col] : color) {
      auto p = parent_color(c);
      next[c] = p ? cvcolor::reduce(col, *p) : cvcolor::reduce_root(col);
    }
    color = std::move(next);
  }
  for (std::uint64_t e : {std::uint64_t{5}, std::uint64_t{4}, std::uint64_t{3}}) {
    std::map<std::uint64_t, std::uint64_t> old = color;
    std::map<std::uint64_t, std::uint64_t> next;
    for (const auto& [c, col] : color) {
      auto p = parent_color(c);
      next[c] = p ? *p : cvcolor::shift_root(col);
    }
    color = std::move(next);
    next = color;
    for (const auto& [c, col] : color) {
      if (col != e) continue;
      auto p = parent_color(c);
      next[c] = cvcolor::elim_pick(p ? *p : kNoParentColor, old.at(c));
    }
    color = std::move(next);
  }

  std::set<std::uint64_t> matched;
  MatchingOutcome out;
  for (std::uint64_t phase = 0; phase < 3; ++phase) {
    // decisions within a phase all read the matched set as it stood when the
    // phase began; a proper coloring guarantees no same-phase conflicts
    const std::set<std::uint64_t> pre = matched;
    std::map<std::uint64_t, std::vector<std::uint64_t>> incoming;
    for (const auto& [c, t] : target_of)
      if (!pre.count(c) && color.at(c) == phase) incoming[t].push_back(c);
    for (auto& [t, props] : incoming) {
      if (pre.count(t)) continue;
      std::uint64_t win = *std::min_element(props.begin(), props.end());
      matched.insert(t);
      matched.insert(win);
      out.matched_pairs.push_back({win, t});
    }
  }
  for (const auto& [c, t] : target_of)
    if (!matched.count(c)) out.forced.push_back(c);
  return out;
}

MergeStep matching_merge_step(
    const WeightedGraph& g, const std::vector<std::uint64_t>& component,
    const std::map<std::uint64_t, std::size_t>& proposals) {
  if (component.size() != g.n())
    throw ParamError("component assignment size must equal node count");
  std::map<std::uint64_t, std::uint64_t> target_of;
  for (const auto& [c, e] : proposals) {
    const auto& ed = g.edges().at(e);
    std::uint64_t ca = component[g.index_of(ed.a)];
    std::uint64_t cb = component[g.index_of(ed.b)];
    if ((ca == c) == (cb == c))
      throw ParamError("proposed edge must have exactly one endpoint inside");
    target_of[c] = (ca == c) ? cb : ca;
  }
  auto mo = cv_match(target_of);

  std::map<std::uint64_t, std::uint64_t> newid;
  for (const auto& [p, t] : mo.matched_pairs) {
    std::uint64_t dom = std::max(p, t);
    newid[p] = dom;
    newid[t] = dom;
  }
  for (std::uint64_t f : mo.forced) {
    // a forced proposer's target is always matched: were it free when the
    // proposal was examined it would have accepted
    newid[f] = newid.at(target_of.at(f));
  }

  MergeStep out;
  out.component.resize(component.size());
  for (std::size_t i = 0; i < component.size(); ++i) {
    auto it = newid.find(component[i]);
    out.component[i] = it == newid.end() ? component[i] : it->second;
  }
  for (const auto& [p, t] : mo.matched_pairs)
    out.added_edges.push_back(proposals.at(p));
  for (std::uint64_t f : mo.forced) out.added_edges.push_back(proposals.at(f));
  std::sort(out.added_edges.begin(), out.added_edges.end());
  out.matched_pairs = std::move(mo.matched_pairs);
  out.forced = std::move(mo.forced);
  return out;
}

namespace {

// ---- protocol wire format ----
enum Op : std::uint64_t {
  OP_FRAGID = 1,
  OP_CC,       // convergecast: height, diam, has, num, lo, hi, tfrag
  OP_BCAST,    // proposes, has, num, lo, hi, tfrag
  // leader-to-leader channels; _DOWN descends the proposer's winner path,
  // _ENTER crosses the proposed edge, _UP climbs to the target leader.
  // Replies retrace via per-key breadcrumbs (_T legs) and climb home (_UP).
  OP_ANN_DOWN, OP_ANN_ENTER, OP_ANN_UP,
  OP_ACK_T, OP_ACK_ENTER, OP_ACK_UP,        // key, t_proposes
  OP_PUSH_T, OP_PUSH_ENTER, OP_PUSH_UP,     // color
  OP_PROP_DOWN, OP_PROP_ENTER, OP_PROP_UP,  // key
  OP_PDEC_T, OP_PDEC_ENTER, OP_PDEC_UP,     // key, accepted, dominator
  OP_MREQ_DOWN, OP_MREQ_ENTER, OP_MREQ_UP,  // key
  OP_MINTO_T, OP_MINTO_ENTER, OP_MINTO_UP,  // key, dominator
  OP_RESTRUCT,  // newid
  OP_ADOPT,
};

enum Action : int {
  A_EXCH, A_CC, A_BC, A_ANN, A_ACK,
  A_PUSH,  // arg = push window 0..9
  A_PROP,  // arg = color
  A_PDEC,  // arg = color
  A_MREQ, A_MINTO, A_RESTR, A_DONE,
};

struct Boundary {
  std::uint64_t round;
  Action act;
  int arg;
  std::size_t iter;
};

struct Schedule {
  std::vector<Boundary> at;
  std::vector<std::uint64_t> diam_bound;
  std::size_t iterations = 0;
};

Schedule build_schedule(std::size_t n) {
  Schedule s;
  s.iterations = controlled_ghs_iterations(n);
  s.diam_bound = fragment_diameter_bounds(s.iterations);
  std::uint64_t r = 0;
  for (std::size_t i = 0; i < s.iterations; ++i) {
    std::uint64_t bi = s.diam_bound[i], bn = s.diam_bound[i + 1];
    std::uint64_t trip = 2 * bi + 4;
    auto put = [&](Action a, int arg, std::uint64_t len) {
      s.at.push_back({r, a, arg, i});
      r += len;
    };
    put(A_EXCH, 0, 2);
    put(A_CC, 0, bi + 3);
    put(A_BC, 0, bi + 3);
    put(A_ANN, 0, trip);
    put(A_ACK, 0, trip);
    for (int j = 0; j < 10; ++j) put(A_PUSH, j, trip);
    for (int c = 0; c < 3; ++c) {
      put(A_PROP, c, trip);
      put(A_PDEC, c, trip);
    }
    put(A_MREQ, 0, trip);
    put(A_MINTO, 0, trip);
    put(A_RESTR, 0, bn + 4);
  }
  s.at.push_back({r, A_DONE, 0, s.iterations});
  return s;
}

struct Crumb {
  std::size_t port = 0;
  bool cross = false;
};

class CghsNode : public NodeBehavior {
 public:
  CghsNode(const NodeInit& init, std::shared_ptr<const Schedule> sched)
      : sched_(std::move(sched)), id_(init.id), deg_(init.degree) {
    frag_ = id_;
    weights_ = init.port_weights;
    tree_port_.assign(deg_ + 1, false);
    reset_iteration_state();
  }

  void on_round(NodeContext& ctx) override {
    ctx.set_tag("cghs");
    for (const auto& [port, msg] : ctx.inbox()) handle(ctx, port, msg.words);
    const auto& bs = sched_->at;
    while (next_b_ < bs.size() && bs[next_b_].round == ctx.round()) {
      boundary(ctx, bs[next_b_]);
      ++next_b_;
    }
    if (next_b_ < bs.size())
      ctx.wake_at(bs[next_b_].round);
    else
      ctx.halt();
  }

  std::vector<std::uint64_t> output() const override {
    std::vector<std::uint64_t> out{frag_, parent_port_};
    std::vector<std::uint64_t> ports;
    for (std::size_t p = 1; p <= deg_; ++p)
      if (tree_port_[p]) ports.push_back(p);
    out.push_back(ports.size());
    out.insert(out.end(), ports.begin(), ports.end());
    out.push_back(frag_history_.size());
    out.insert(out.end(), frag_history_.begin(), frag_history_.end());
    return out;
  }

 private:
  bool leader() const { return parent_port_ == 0; }
  std::uint64_t gate() const { return std::uint64_t{1} << iter_; }

  void reset_iteration_state() {
    neighbor_frag_.assign(deg_ + 1, 0);
    has_neighbor_frag_.assign(deg_ + 1, false);
    cc_got_ = 0;
    top1_ = top2_ = 0;
    child_count_ = children_.size();
    diam_agg_ = 0;
    cand_has_ = false;
    cand_key_ = {};
    cand_target_ = 0;
    best_child_port_ = 0;
    local_out_port_ = 0;
    proposes_ = false;
    has_loe_ = false;
    loe_key_ = {};
    loe_target_ = 0;
    color_ = frag_;
    old_self_ = 0;
    push_val_ = 0;
    push_has_ = false;
    parent_proposes_ = false;
    ack_got_ = false;
    ann_crumbs_.clear();
    prop_crumbs_.clear();
    mreq_crumbs_.clear();
    prop_inbox_.clear();
    mreq_inbox_.clear();
    matched_ = false;
    proposed_ = false;
    dominator_ = 0;
    adopted_ = false;
  }

  // -- winner-path descent used by announce/propose/merge requests --
  void route_down(NodeContext& ctx, Op down, Op enter,
                  std::vector<std::uint64_t> words) {
    if (best_child_port_ == 0) {
      words[0] = enter;
      ctx.send(local_out_port_, std::move(words));
    } else {
      words[0] = down;
      ctx.send(best_child_port_, std::move(words));
    }
  }

  void route_back(NodeContext& ctx, const std::map<std::uint64_t, Crumb>& crumbs,
                  Op stay, Op enter, std::uint64_t key,
                  std::vector<std::uint64_t> words) {
    auto it = crumbs.find(key);
    if (it == crumbs.end()) ctx.fail("reply with no breadcrumb");
    words[0] = it->second.cross ? enter : stay;
    ctx.send(it->second.port, std::move(words));
  }

  void climb(NodeContext& ctx, Op up, std::vector<std::uint64_t> words) {
    words[0] = up;
    ctx.send(parent_port_, std::move(words));
  }

  void handle(NodeContext& ctx, std::size_t port,
              const std::vector<std::uint64_t>& w) {
    switch (static_cast<Op>(w[0])) {
      case OP_FRAGID:
        neighbor_frag_[port] = w[1];
        has_neighbor_frag_[port] = true;
        break;
      case OP_CC: {
        // track the two longest downward path lengths (child height + 1)
        std::uint64_t v = w[1] + 1;
        if (v >= top1_) {
          top2_ = top1_;
          top1_ = v;
        } else if (v > top2_) {
          top2_ = v;
        }
        diam_agg_ = std::max(diam_agg_, w[2]);
        if (w[3] != 0) {
          WeightKey k{w[4], w[5], w[6]};
          if (!cand_has_ || k < cand_key_) {
            cand_has_ = true;
            cand_key_ = k;
            cand_target_ = w[7];
            best_child_port_ = port;
          }
        }
        if (++cc_got_ == child_count_) finish_cc(ctx);
        break;
      }
      case OP_BCAST:
        on_bcast(ctx, w);
        for (std::size_t p : children_)
          ctx.send(p, std::vector<std::uint64_t>(w.begin(), w.end()));
        break;
      case OP_ANN_DOWN:
        route_down(ctx, OP_ANN_DOWN, OP_ANN_ENTER, {w.begin(), w.end()});
        break;
      case OP_ANN_ENTER:
        ann_crumbs_[w[1]] = {port, true};
        if (!leader()) climb(ctx, OP_ANN_UP, {w.begin(), w.end()});
        break;
      case OP_ANN_UP:
        ann_crumbs_[w[1]] = {port, false};
        if (!leader()) climb(ctx, OP_ANN_UP, {w.begin(), w.end()});
        break;
      case OP_ACK_T:
        route_back(ctx, ann_crumbs_, OP_ACK_T, OP_ACK_ENTER, w[1],
                   {w.begin(), w.end()});
        break;
      case OP_ACK_ENTER:
      case OP_ACK_UP:
        if (!leader()) {
          climb(ctx, OP_ACK_UP, {w.begin(), w.end()});
        } else {
          parent_proposes_ = w[2] != 0;
          ack_got_ = true;
        }
        break;
      case OP_PUSH_T:
        forward_push(ctx, w);
        break;
      case OP_PUSH_ENTER:
      case OP_PUSH_UP:
        if (!leader()) {
          climb(ctx, OP_PUSH_UP, {w.begin(), w.end()});
        } else {
          push_val_ = w[1];
          push_has_ = true;
        }
        break;
      case OP_PROP_DOWN:
        route_down(ctx, OP_PROP_DOWN, OP_PROP_ENTER, {w.begin(), w.end()});
        break;
      case OP_PROP_ENTER:
        prop_crumbs_[w[1]] = {port, true};
        if (leader())
          prop_inbox_.push_back(w[1]);
        else
          climb(ctx, OP_PROP_UP, {w.begin(), w.end()});
        break;
      case OP_PROP_UP:
        prop_crumbs_[w[1]] = {port, false};
        if (leader())
          prop_inbox_.push_back(w[1]);
        else
          climb(ctx, OP_PROP_UP, {w.begin(), w.end()});
        break;
      case OP_PDEC_T:
        relay_decision(ctx, w[1], w[2] != 0, w[3]);
        break;
      case OP_PDEC_ENTER:
        if (w[2] != 0) tree_port_[port] = true;
        [[fallthrough]];
      case OP_PDEC_UP:
        if (!leader()) {
          climb(ctx, OP_PDEC_UP, {w.begin(), w.end()});
        } else {
          if (w[2] != 0) {
            if (matched_) ctx.fail("proposer accepted while already matched");
            matched_ = true;
            dominator_ = w[3];
          }
        }
        break;
      case OP_MREQ_DOWN:
        route_down(ctx, OP_MREQ_DOWN, OP_MREQ_ENTER, {w.begin(), w.end()});
        break;
      case OP_MREQ_ENTER:
        mreq_crumbs_[w[1]] = {port, true};
        if (leader())
          mreq_inbox_.push_back(w[1]);
        else
          climb(ctx, OP_MREQ_UP, {w.begin(), w.end()});
        break;
      case OP_MREQ_UP:
        mreq_crumbs_[w[1]] = {port, false};
        if (leader())
          mreq_inbox_.push_back(w[1]);
        else
          climb(ctx, OP_MREQ_UP, {w.begin(), w.end()});
        break;
      case OP_MINTO_T:
        relay_absorb(ctx, w[1], w[2]);
        break;
      case OP_MINTO_ENTER:
        tree_port_[port] = true;
        [[fallthrough]];
      case OP_MINTO_UP:
        if (!leader()) climb(ctx, OP_MINTO_UP, {w.begin(), w.end()});
        // the leader learns its new fragment id from the restructure flood
        break;
      case OP_RESTRUCT:
        if (adopted_) ctx.fail("restructure flood revisited a node");
        adopted_ = true;
        frag_ = w[1];
        parent_port_ = port;
        children_.clear();
        ctx.send(port, {OP_ADOPT});
        for (std::size_t p = 1; p <= deg_; ++p)
          if (tree_port_[p] && p != port) ctx.send(p, {OP_RESTRUCT, w[1]});
        break;
      case OP_ADOPT:
        children_.push_back(port);
        break;
      default:
        ctx.fail("unknown opcode");
    }
  }

  // Reply legs share one path with the boundary-time originators so that the
  // tree-edge activation at a crossing happens in exactly one place.
  void relay_decision(NodeContext& ctx, std::uint64_t key, bool acc,
                      std::uint64_t dom) {
    auto it = prop_crumbs_.find(key);
    if (it == prop_crumbs_.end()) ctx.fail("decision with no breadcrumb");
    if (it->second.cross && acc) tree_port_[it->second.port] = true;
    route_back(ctx, prop_crumbs_, OP_PDEC_T, OP_PDEC_ENTER, key,
               {0, key, acc ? 1u : 0u, dom});
  }

  void relay_absorb(NodeContext& ctx, std::uint64_t key, std::uint64_t dom) {
    auto it = mreq_crumbs_.find(key);
    if (it == mreq_crumbs_.end()) ctx.fail("merge reply with no breadcrumb");
    if (it->second.cross) tree_port_[it->second.port] = true;
    route_back(ctx, mreq_crumbs_, OP_MINTO_T, OP_MINTO_ENTER, key,
               {0, key, dom});
  }

  void forward_push(NodeContext& ctx, const std::vector<std::uint64_t>& w) {
    std::set<std::size_t> tree_ports;
    for (const auto& [key, crumb] : ann_crumbs_) {
      if (crumb.cross)
        ctx.send(crumb.port, {OP_PUSH_ENTER, w[1]});
      else
        tree_ports.insert(crumb.port);
    }
    for (std::size_t p : tree_ports) ctx.send(p, {OP_PUSH_T, w[1]});
  }

  void finish_cc(NodeContext& ctx) {
    std::uint64_t through;
    if (child_count_ >= 2)
      through = top1_ + top2_;
    else if (child_count_ == 1)
      through = top1_;
    else
      through = 0;
    std::uint64_t height = child_count_ ? top1_ : 0;
    std::uint64_t diam = std::max(diam_agg_, through);
    if (leader()) {
      frag_diam_ = diam;
      has_loe_ = cand_has_;
      loe_key_ = cand_key_;
      loe_target_ = cand_target_;
    } else {
      climb(ctx, OP_CC,
            {OP_CC, height, diam, cand_has_ ? 1u : 0u, cand_key_.numeric,
             cand_key_.lo, cand_key_.hi, cand_target_});
    }
  }

  void on_bcast(NodeContext& ctx, const std::vector<std::uint64_t>& w) {
    (void)ctx;
    proposes_ = w[1] != 0;
    has_loe_ = w[2] != 0;
    loe_key_ = {w[3], w[4], w[5]};
    loe_target_ = w[6];
    if (has_loe_)
      for (std::size_t p = 1; p <= deg_; ++p)
        if (weights_[p - 1] == loe_key_) {
          local_out_port_ = p;
          break;
        }
  }

  void apply_color_step(NodeContext& ctx, int j) {
    if (!(leader() && proposes_)) return;
    constexpr std::uint64_t kNoParentColor = 1000;
    auto parent_push = [&]() -> std::uint64_t {
      if (!push_has_) ctx.fail("color step without parent push");
      return push_val_;
    };
    switch (j) {
      case 0:
        break;  // initial color already set
      case 1:
        if (!ack_got_) ctx.fail("no acknowledgement for announcement");
        [[fallthrough]];
      case 2: case 3: case 4:
        color_ = parent_proposes_ ? cvcolor::reduce(color_, parent_push())
                                  : cvcolor::reduce_root(color_);
        break;
      case 5: case 7: case 9:  // shift-down
        old_self_ = color_;
        color_ = parent_proposes_ ? parent_push() : cvcolor::shift_root(color_);
        break;
      case 6: case 8: case 10: {  // eliminate class 5 / 4 / 3
        std::uint64_t cls = j == 6 ? 5 : j == 8 ? 4 : 3;
        if (color_ == cls)
          color_ = cvcolor::elim_pick(
              parent_proposes_ ? parent_push() : kNoParentColor, old_self_);
        break;
      }
      default:
        break;
    }
    push_has_ = false;
  }

  void boundary(NodeContext& ctx, const Boundary& b) {
    iter_ = b.iter;
    switch (b.act) {
      case A_EXCH:
        if (b.iter > 0) frag_history_.push_back(frag_);
        reset_iteration_state();
        for (std::size_t p = 1; p <= deg_; ++p) ctx.send(p, {OP_FRAGID, frag_});
        break;
      case A_CC: {
        // local outgoing candidate (all neighbors reported their fragment)
        for (std::size_t p = 1; p <= deg_; ++p) {
          if (!has_neighbor_frag_[p]) ctx.fail("missing neighbor fragment id");
          if (neighbor_frag_[p] == frag_) continue;
          if (!cand_has_ || weights_[p - 1] < cand_key_) {
            cand_has_ = true;
            cand_key_ = weights_[p - 1];
            cand_target_ = neighbor_frag_[p];
            best_child_port_ = 0;
            local_out_port_ = p;
          }
        }
        if (child_count_ == 0) finish_cc(ctx);
        break;
      }
      case A_BC: {
        if (leader()) {
          bool proposes = frag_diam_ <= gate() && has_loe_;
          std::vector<std::uint64_t> w{OP_BCAST,
                                       proposes ? 1u : 0u,
                                       has_loe_ ? 1u : 0u,
                                       loe_key_.numeric,
                                       loe_key_.lo,
                                       loe_key_.hi,
                                       loe_target_};
          on_bcast(ctx, w);
          for (std::size_t p : children_) ctx.send(p, w);
        }
        break;
      }
      case A_ANN:
        if (leader() && proposes_) route_down(ctx, OP_ANN_DOWN, OP_ANN_ENTER, {0, frag_});
        break;
      case A_ACK:
        if (leader())
          for (const auto& [key, crumb] : ann_crumbs_)
            route_back(ctx, ann_crumbs_, OP_ACK_T, OP_ACK_ENTER, key,
                       {0, key, proposes_ ? 1u : 0u});
        break;
      case A_PUSH:
        apply_color_step(ctx, b.arg);
        if (leader() && proposes_ && !ann_crumbs_.empty())
          forward_push(ctx, {OP_PUSH_T, color_});
        break;
      case A_PROP:
        if (b.arg == 0) apply_color_step(ctx, 10);  // final recolor
        if (leader() && proposes_ && !matched_ &&
            color_ == static_cast<std::uint64_t>(b.arg)) {
          proposed_ = true;
          route_down(ctx, OP_PROP_DOWN, OP_PROP_ENTER, {0, frag_});
        }
        break;
      case A_PDEC:
        if (leader() && !prop_inbox_.empty()) {
          std::uint64_t win = 0;
          bool accept = !matched_;
          if (accept) {
            win = *std::min_element(prop_inbox_.begin(), prop_inbox_.end());
            matched_ = true;
            dominator_ = std::max(id_, win);
          }
          for (std::uint64_t key : prop_inbox_) {
            bool acc = accept && key == win;
            relay_decision(ctx, key, acc, acc ? dominator_ : 0);
          }
          prop_inbox_.clear();
        }
        break;
      case A_MREQ:
        if (leader() && proposed_ && !matched_)
          route_down(ctx, OP_MREQ_DOWN, OP_MREQ_ENTER, {0, frag_});
        break;
      case A_MINTO:
        if (leader() && !mreq_inbox_.empty()) {
          if (!matched_) ctx.fail("absorb request at an unmatched fragment");
          for (std::uint64_t key : mreq_inbox_) relay_absorb(ctx, key, dominator_);
          mreq_inbox_.clear();
        }
        break;
      case A_RESTR:
        if (leader() && matched_ && dominator_ == id_) {
          adopted_ = true;  // guard against the flood looping back
          children_.clear();
          for (std::size_t p = 1; p <= deg_; ++p)
            if (tree_port_[p]) ctx.send(p, {OP_RESTRUCT, id_});
        }
        break;
      case A_DONE:
        frag_history_.push_back(frag_);
        ctx.halt();
        break;
    }
  }

  std::shared_ptr<const Schedule> sched_;
  std::uint64_t id_;
  std::size_t deg_;
  std::vector<WeightKey> weights_;
  std::size_t next_b_ = 0;
  std::size_t iter_ = 0;

  // persistent across iterations
  std::uint64_t frag_;
  std::uint64_t parent_port_ = 0;
  std::vector<std::size_t> children_;
  std::vector<char> tree_port_;  // by port
  std::vector<std::uint64_t> frag_history_;

  // per-iteration
  std::vector<std::uint64_t> neighbor_frag_;
  std::vector<char> has_neighbor_frag_;
  std::size_t cc_got_ = 0, child_count_ = 0;
  std::uint64_t top1_ = 0, top2_ = 0, diam_agg_ = 0;
  bool cand_has_ = false;
  WeightKey cand_key_{};
  std::uint64_t cand_target_ = 0;
  std::size_t best_child_port_ = 0, local_out_port_ = 0;
  std::uint64_t frag_diam_ = 0;
  bool proposes_ = false, has_loe_ = false;
  WeightKey loe_key_{};
  std::uint64_t loe_target_ = 0;
  std::uint64_t color_ = 0, old_self_ = 0, push_val_ = 0;
  bool push_has_ = false, parent_proposes_ = false, ack_got_ = false;
  std::map<std::uint64_t, Crumb> ann_crumbs_, prop_crumbs_, mreq_crumbs_;
  std::vector<std::uint64_t> prop_inbox_, mreq_inbox_;
  bool matched_ = false, proposed_ = false, adopted_ = false;
  std::uint64_t dominator_ = 0;
};

}  // namespace

ControlledGhsResult controlled_ghs(const WeightedGraph& g,
                                   const RunOptions& opts) {
  auto sched = std::make_shared<const Schedule>(build_schedule(g.n()));
  auto res = run_protocol(
      g,
      [&](const NodeInit& init) {
        return std::make_unique<CghsNode>(init, sched);
      },
      opts);

  ControlledGhsResult out;
  out.metrics = res.metrics;
  out.forest.fragment.resize(g.n());
  out.forest.parent_port.resize(g.n());
  std::map<std::size_t, int> edge_sides;
  std::vector<std::vector<std::uint64_t>> hists(g.n());
  for (std::size_t i = 0; i < g.n(); ++i) {
    auto w = res.nodes[i]->output();
    out.forest.fragment[i] = w[0];
    out.forest.parent_port[i] = w[1];
    std::size_t k = w[2];
    for (std::size_t j = 0; j < k; ++j)
      edge_sides[g.port_edge(i, w[3 + j])] += 1;
    std::size_t h = w[3 + k];
    hists[i].assign(w.begin() + 4 + k, w.begin() + 4 + k + h);
  }
  for (const auto& [e, sides] : edge_sides) {
    if (sides != 2)
      throw StructureError("tree edge marked on one side only");
    out.forest.tree_edges.push_back(e);
  }
  std::size_t iters = hists.empty() ? 0 : hists[0].size();
  for (std::size_t it = 0; it < iters; ++it) {
    std::set<std::uint64_t> ids;
    for (std::size_t i = 0; i < g.n(); ++i) ids.insert(hists[i][it]);
    out.fragments_per_iteration.push_back(ids.size());
  }
  return out;
}

}  // namespace cmst
