#include "cmst/cover.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>

#include "cmst/calibration.hpp"
#include "cmst/rng.hpp"
#include "json.hpp"

namespace cmst {

std::uint64_t cover_depth_budget(std::uint64_t radius, std::uint64_t kappa) {
  return static_cast<std::uint64_t>(cal::kCoverDepth) * radius * kappa;
}

double cover_membership_budget(std::size_t n, std::uint64_t kappa) {
  double nd = static_cast<double>(n);
  double b = cal::kCoverSparsity * static_cast<double>(kappa) *
             std::pow(nd, 1.0 / static_cast<double>(kappa)) * std::log2(nd);
  return std::max(b, 1.0);
}

namespace {

std::uint64_t default_kappa(std::size_t n) {
  std::uint64_t k = 0;
  while ((std::size_t{1} << k) < n) ++k;  // ceil(log2 n)
  return std::max<std::uint64_t>(k, 1);
}

// Number of shifted-start partitions: enough repetitions that every ball of
// the requested radius lands inside one cluster with high probability, but
// never past the membership budget.  Each partition adds at most one
// membership per node, so capping here makes sparsity hold by construction
// and leaves only the neighborhood property to chance plus retry.
std::size_t partition_count(std::size_t n, std::uint64_t kappa) {
  double nd = static_cast<double>(n) + 1.0;
  double want = std::ceil(4.0 * std::pow(nd, 1.0 / static_cast<double>(kappa)) *
                          std::log(nd)) +
                1.0;
  double cap = std::floor(cover_membership_budget(n, kappa));
  return static_cast<std::size_t>(std::max(1.0, std::min(want, cap)));
}

enum Op : std::uint64_t { OP_WAVE = 1, OP_ADOPT = 2 };

struct PartitionRecord {
  std::uint64_t center = 0;
  std::uint64_t parent_port = 0;  // 0 on the node the wave started from
  std::uint64_t val = 0;          // remaining wave budget when settled
};

// One partition per window: every node draws a truncated-exponential head
// start delta and would start its own wave at position delta_max - delta;
// whichever wave reaches a node first claims it (same-round ties go to the
// larger center id), and claimed nodes forward the wave with one unit less
// budget.  All arrivals at a given position carry the same budget, so a
// cluster is exactly the tree of first arrivals of one wave.
class CoverNode : public NodeBehavior {
 public:
  CoverNode(const NodeInit& init, std::size_t partitions,
            std::uint64_t delta_max, double beta)
      : id_(init.id), deg_(init.degree), partitions_(partitions),
        delta_max_(delta_max), beta_(beta), window_(delta_max + 3) {
    records_.resize(partitions_);
  }

  void on_round(NodeContext& ctx) override {
    ctx.set_tag("cover");
    std::uint64_t r = ctx.round();
    std::uint64_t j = r / window_, pos = r % window_;
    if (pos == 0) {
      if (j >= partitions_) {
        ctx.halt();
        return;
      }
      settled_ = false;
      double u = ctx.rng().unit();
      delta_ = std::min(delta_max_,
                        static_cast<std::uint64_t>(-std::log(1.0 - u) / beta_));
    }

    std::uint64_t expect_val = delta_max_ - pos;
    bool have = false;
    std::uint64_t best_center = 0;
    std::size_t best_port = 0;
    for (const auto& [port, msg] : ctx.inbox()) {
      const auto& w = msg.words;
      if (w[0] == OP_ADOPT) {
        child_ports_.emplace_back(j, port);
        continue;
      }
      if (w[0] != OP_WAVE) ctx.fail("unknown opcode");
      if (settled_) continue;  // late waves lose; nothing to do
      if (w[2] != expect_val) ctx.fail("wave value out of schedule");
      if (!have || w[1] > best_center) {
        have = true;
        best_center = w[1];
        best_port = port;
      }
    }
    if (!settled_ && pos == delta_max_ - delta_ &&
        (!have || id_ > best_center)) {
      have = true;
      best_center = id_;
      best_port = 0;
    }
    if (!settled_ && have) {
      settled_ = true;
      records_[j] = {best_center, best_port, expect_val};
      if (expect_val >= 1)
        for (std::size_t p = 1; p <= deg_; ++p)
          if (p != best_port)
            ctx.send(p, {OP_WAVE, best_center, expect_val - 1});
    }

    if (pos == delta_max_ + 1 && records_[j].parent_port != 0)
      ctx.send(records_[j].parent_port, {OP_ADOPT});

    if (!settled_)
      ctx.wake_at(r - pos + (delta_max_ - delta_));
    else if (pos < delta_max_ + 1)
      ctx.wake_at(r - pos + delta_max_ + 1);
    else
      ctx.wake_at(r - pos + window_);
  }

  std::vector<std::uint64_t> output() const override {
    std::vector<std::uint64_t> out{partitions_};
    for (const auto& rec : records_) {
      out.push_back(rec.center);
      out.push_back(rec.parent_port);
      out.push_back(rec.val);
    }
    return out;
  }

 private:
  std::uint64_t id_;
  std::size_t deg_;
  std::uint64_t partitions_;
  std::uint64_t delta_max_;
  double beta_;
  std::uint64_t window_;
  std::uint64_t delta_ = 0;
  bool settled_ = false;
  std::vector<PartitionRecord> records_;
  // ports the node learned children on, per partition; kept node-local so the
  // tree is usable for later broadcasts without another global pass
  std::vector<std::pair<std::uint64_t, std::size_t>> child_ports_;
};

Cover decode_cover(const WeightedGraph& g, const RunResult& res,
                   std::uint64_t radius, std::uint64_t kappa) {
  Cover cover;
  cover.radius = radius;
  cover.kappa = kappa;
  std::size_t n = g.n();
  std::vector<std::vector<std::uint64_t>> words(n);
  for (std::size_t i = 0; i < n; ++i) words[i] = res.nodes[i]->output();
  std::size_t partitions = static_cast<std::size_t>(words.at(0).at(0));

  // different partitions often carve the same cluster again; keep one copy
  std::set<std::pair<std::uint64_t, std::map<std::uint64_t, std::size_t>>> seen;
  for (std::size_t j = 0; j < partitions; ++j) {
    std::map<std::uint64_t, std::map<std::uint64_t, std::size_t>> parent;
    std::map<std::uint64_t, std::map<std::uint64_t, std::uint64_t>> value;
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t center = words[i][1 + 3 * j];
      parent[center][g.id_of(i)] = static_cast<std::size_t>(words[i][2 + 3 * j]);
      value[center][g.id_of(i)] = words[i][3 + 3 * j];
    }
    for (auto& [center, pmap] : parent) {
      const auto& vmap = value.at(center);
      if (!pmap.count(center) || pmap.at(center) != 0)
        throw StructureError("cluster root missing or not a root");
      std::uint64_t low = vmap.at(center);
      for (const auto& [nid, pport] : pmap) {
        low = std::min(low, vmap.at(nid));
        if (nid == center) continue;
        if (pport == 0) throw StructureError("non-root member without parent");
        std::uint64_t pid = g.neighbor_via(g.index_of(nid), pport);
        auto pv = vmap.find(pid);
        if (pv == vmap.end() || !pmap.count(pid))
          throw StructureError("cluster parent not a member");
        if (pv->second != vmap.at(nid) + 1)
          throw StructureError("parent budget does not step by one");
      }
      auto key = std::make_pair(center, pmap);
      if (!seen.insert(key).second) continue;
      ClusterTree ct;
      ct.id = cover.clusters.size();
      ct.root = center;
      ct.parent_port = pmap;
      ct.depth = vmap.at(center) - low;
      for (const auto& [nid, pport] : pmap) {
        if (nid == center) continue;
        std::uint64_t pid = g.neighbor_via(g.index_of(nid), pport);
        ct.child_ports[pid].push_back(g.port_of_edge(
            g.index_of(pid), g.port_edge(g.index_of(nid), pport)));
      }
      for (auto& [nid, ports] : ct.child_ports)
        std::sort(ports.begin(), ports.end());
      cover.clusters.push_back(std::move(ct));
    }
  }
  cover.memberships.resize(n);
  for (std::size_t c = 0; c < cover.clusters.size(); ++c)
    for (const auto& [nid, pport] : cover.clusters[c].parent_port)
      cover.memberships[g.index_of(nid)].push_back(c);
  return cover;
}

}  // namespace

CoverResult compute_cover(const WeightedGraph& g, std::uint64_t radius,
                          std::uint64_t seed, std::uint64_t kappa,
                          const RunOptions& opts) {
  if (radius < 1) throw ParamError("cover radius must be at least 1");
  std::uint64_t k = kappa ? kappa : default_kappa(g.n());
  std::uint64_t delta_max = cover_depth_budget(radius, k);
  double beta = std::log(static_cast<double>(g.n()) + 1.0) /
                static_cast<double>(delta_max);
  std::size_t partitions = partition_count(g.n(), k);

  CoverResult out;
  constexpr std::size_t kMaxAttempts = 64;
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    RunOptions ro = opts;
    ro.seed = derive_stream(seed, attempt).next();
    auto res = run_protocol(
        g,
        [&](const NodeInit& init) {
          return std::make_unique<CoverNode>(init, partitions, delta_max, beta);
        },
        ro);
    accumulate_metrics(out.metrics, res.metrics);
    out.attempts = attempt + 1;
    out.cover = decode_cover(g, res, radius, k);
    if (verify_cover(out.cover, g).all_ok()) return out;
  }
  throw StructureError("cover construction kept failing verification");
}

CoverReport verify_cover(const Cover& cover, const WeightedGraph& g) {
  CoverReport rep;
  std::uint64_t depth_budget = cover_depth_budget(cover.radius, cover.kappa);
  std::vector<std::set<std::uint64_t>> members(cover.clusters.size());
  for (std::size_t c = 0; c < cover.clusters.size(); ++c)
    for (const auto& [nid, pp] : cover.clusters[c].parent_port)
      members[c].insert(nid);

  // --- tree shape and depth ---
  std::uint64_t worst_depth = 0;
  for (std::size_t c = 0; c < cover.clusters.size() && rep.depth.ok; ++c) {
    const auto& ct = cover.clusters[c];
    auto fail = [&](const std::string& why) {
      rep.depth = {false, "cluster " + std::to_string(ct.id) + ": " + why};
    };
    if (!ct.parent_port.count(ct.root) || ct.parent_port.at(ct.root) != 0) {
      fail("root missing or has a parent");
      break;
    }
    std::map<std::uint64_t, std::uint64_t> hops{{ct.root, 0}};
    std::uint64_t deepest = 0;
    for (const auto& [nid, pp] : ct.parent_port) {
      std::vector<std::uint64_t> chain;
      std::uint64_t cur = nid;
      while (!hops.count(cur)) {
        chain.push_back(cur);
        if (!g.has_node(cur)) {
          fail("member " + std::to_string(cur) + " is not a graph node");
          break;
        }
        std::size_t port = ct.parent_port.at(cur);
        if (port == 0 || port > g.degree(cur)) {
          fail("node " + std::to_string(cur) + " has invalid parent port");
          break;
        }
        cur = g.neighbor_via(g.index_of(cur), port);
        if (!members[c].count(cur)) {
          fail("parent of " + std::to_string(chain.back()) +
               " is not a member");
          break;
        }
        if (chain.size() > ct.parent_port.size()) {
          fail("parent pointers form a cycle");
          break;
        }
      }
      if (!rep.depth.ok) break;
      std::uint64_t base = hops.at(cur);
      for (auto it = chain.rbegin(); it != chain.rend(); ++it)
        hops[*it] = ++base;
      deepest = std::max(deepest, hops.at(nid));
    }
    if (!rep.depth.ok) break;
    std::map<std::uint64_t, std::vector<std::size_t>> inv;
    for (const auto& [nid, pp] : ct.parent_port) {
      if (nid == ct.root) continue;
      std::uint64_t pid = g.neighbor_via(g.index_of(nid), pp);
      inv[pid].push_back(
          g.port_of_edge(g.index_of(pid), g.port_edge(g.index_of(nid), pp)));
    }
    for (auto& [nid, ports] : inv) std::sort(ports.begin(), ports.end());
    if (inv != ct.child_ports) {
      fail("child ports disagree with parent ports");
      break;
    }
    if (deepest != ct.depth) {
      fail("stored depth " + std::to_string(ct.depth) + " but measured " +
           std::to_string(deepest));
      break;
    }
    worst_depth = std::max(worst_depth, deepest);
    if (deepest > depth_budget) {
      fail("depth " + std::to_string(deepest) + " exceeds budget " +
           std::to_string(depth_budget));
      break;
    }
  }
  if (rep.depth.ok)
    rep.depth.detail = "max depth " + std::to_string(worst_depth) +
                       " within " + std::to_string(depth_budget);

  // --- membership sparsity ---
  double budget = cover_membership_budget(g.n(), cover.kappa);
  std::vector<std::vector<std::size_t>> expect(g.n());
  for (std::size_t c = 0; c < cover.clusters.size(); ++c)
    for (std::uint64_t nid : members[c])
      if (g.has_node(nid)) expect[g.index_of(nid)].push_back(c);
  std::size_t worst = 0, worst_node = 0;
  for (std::size_t i = 0; i < g.n(); ++i)
    if (expect[i].size() > worst) {
      worst = expect[i].size();
      worst_node = i;
    }
  if (cover.memberships.size() != g.n()) {
    rep.sparsity = {false, "membership table size mismatch"};
  } else {
    for (std::size_t i = 0; i < g.n() && rep.sparsity.ok; ++i) {
      auto got = cover.memberships[i];
      std::sort(got.begin(), got.end());
      if (got != expect[i])
        rep.sparsity = {false, "membership list of node " +
                                   std::to_string(g.id_of(i)) +
                                   " inconsistent"};
    }
  }
  if (rep.sparsity.ok && static_cast<double>(worst) > budget)
    rep.sparsity = {false, "node " + std::to_string(g.id_of(worst_node)) +
                               " is in " + std::to_string(worst) +
                               " clusters, budget " + std::to_string(budget)};
  if (rep.sparsity.ok)
    rep.sparsity.detail = "max membership " + std::to_string(worst) +
                          " within " + std::to_string(budget);

  // --- neighborhood containment ---
  std::uint64_t worst_ball = 0;
  for (std::size_t i = 0; i < g.n() && rep.neighborhood.ok; ++i) {
    auto dist = g.hop_distances_from(i);
    std::vector<std::uint64_t> ball;
    for (std::size_t u = 0; u < g.n(); ++u)
      if (dist[u] <= cover.radius) ball.push_back(g.id_of(u));
    bool covered = false;
    for (std::size_t c = 0; c < cover.clusters.size() && !covered; ++c) {
      if (!members[c].count(g.id_of(i))) continue;
      covered = std::all_of(ball.begin(), ball.end(), [&](std::uint64_t b) {
        return members[c].count(b) != 0;
      });
    }
    if (!covered)
      rep.neighborhood = {false,
                          "ball of node " + std::to_string(g.id_of(i)) + " (" +
                              std::to_string(ball.size()) +
                              " nodes) sits inside no single cluster"};
    worst_ball = std::max(worst_ball, static_cast<std::uint64_t>(ball.size()));
  }
  if (rep.neighborhood.ok)
    rep.neighborhood.detail =
        "all balls covered, largest " + std::to_string(worst_ball) + " nodes";
  return rep;
}

std::string cover_to_json(const Cover& cover) {
  nlohmann::json j;
  j["radius"] = cover.radius;
  j["kappa"] = cover.kappa;
  j["clusters"] = nlohmann::json::array();
  for (const auto& ct : cover.clusters) {
    nlohmann::json c;
    c["id"] = ct.id;
    c["root"] = ct.root;
    c["depth"] = ct.depth;
    c["nodes"] = nlohmann::json::array();
    for (const auto& [nid, pp] : ct.parent_port)
      c["nodes"].push_back({{"id", nid}, {"parent_port", pp}});
    j["clusters"].push_back(std::move(c));
  }
  return j.dump(2);
}

}  // namespace cmst
