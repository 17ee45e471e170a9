#include "cmst/sim.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>

namespace cmst {

namespace {
constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();
}

class Engine {
 public:
  Engine(const WeightedGraph& g, const BehaviorFactory& factory,
         const RunOptions& opts)
      : g_(g), opts_(opts) {
    std::size_t n = g.n();
    contexts_.resize(n);
    halted_.assign(n, 0);
    wake_.assign(n, 0);  // everyone activates at round 0
    pending_.resize(n);
    current_tag_.assign(n, intern("untagged"));

    behaviors_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      NodeInit init;
      init.id = g.id_of(i);
      init.index = i;
      init.degree = g.degree_by_index(i);
      init.n = n;
      init.port_weights.reserve(init.degree);
      for (std::size_t p = 1; p <= init.degree; ++p)
        init.port_weights.push_back(g.edge(g.port_edge(i, p)).key());

      auto& ctx = contexts_[i];
      ctx.engine_ = this;
      ctx.id_ = init.id;
      ctx.index_ = i;
      ctx.degree_ = init.degree;
      ctx.n_ = n;
      ctx.rng_ = derive_stream(opts.seed, init.id);

      behaviors_.push_back(factory(init));
    }
  }

  RunResult run() {
    round_ = 0;
    // rounds metric = last communication-active round (a send happens in it or
    // a message is delivered into it). Nodes stepping silently to clean up do
    // not extend it: local computation is free, rounds exist for communication.
    std::uint64_t last_active = 0;
    while (true) {
      round_tag_counts_.assign(tag_names_.size(), 0);
      for (std::size_t i = 0; i < behaviors_.size(); ++i) {
        bool due = !contexts_[i].inbox_.empty() || wake_[i] <= round_;
        if (!due || halted_[i]) continue;
        // A wake alarm persists across mail-driven steps and is consumed only
        // when it fires; the step handler may arm the next one.
        if (wake_[i] <= round_) wake_[i] = kNever;
        behaviors_[i]->on_round(contexts_[i]);
        contexts_[i].inbox_.clear();
      }
      for (std::size_t t = 0; t < round_tag_counts_.size(); ++t)
        if (round_tag_counts_[t] > 0) {
          auto& peak = metrics_.peak_round_by_tag[tag_names_[t]];
          peak = std::max(peak, round_tag_counts_[t]);
        }

      // Deliver sends from this round into next-round inboxes.
      bool any_mail = false;
      for (std::size_t i = 0; i < pending_.size(); ++i) {
        for (auto& [port, msg] : pending_[i]) {
          std::size_t e = g_.port_edge(i, port);
          std::uint64_t peer_id = g_.edge(e).other(g_.id_of(i));
          std::size_t peer = g_.index_of(peer_id);
          if (halted_[peer])
            throw ProtocolViolation(g_.id_of(i), round_,
                                    "message sent to halted node " +
                                        std::to_string(peer_id));
          std::size_t peer_port = g_.port_of_edge(peer, e);
          contexts_[peer].inbox_.push_back({peer_port, std::move(msg)});
          any_mail = true;
        }
        pending_[i].clear();
      }
      if (any_mail) last_active = round_ + 1;

      bool all_halted =
          std::all_of(halted_.begin(), halted_.end(), [](char h) { return h; });
      if (all_halted && !any_mail) break;

      std::uint64_t next = any_mail ? round_ + 1 : kNever;
      for (std::size_t i = 0; i < wake_.size(); ++i)
        if (!halted_[i]) next = std::min(next, std::max(wake_[i], round_ + 1));
      if (next == kNever)
        throw ProtocolViolation(0, round_,
                                "stall: nodes still running but no pending events");
      if (next > opts_.round_limit) {
        metrics_.rounds = last_active;
        throw TimeoutError(metrics_);
      }
      round_ = next;
      // Stable inbox order: sort by arrival port (senders were processed in
      // node order, so same-port sequences are already deterministic).
      for (auto& ctx : contexts_)
        std::stable_sort(ctx.inbox_.begin(), ctx.inbox_.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
    }

    metrics_.rounds = last_active;
    RunResult result;
    result.metrics = std::move(metrics_);
    result.nodes = std::move(behaviors_);
    result.node_ids = g_.node_ids();
    return result;
  }

  // -- NodeContext plumbing --

  std::uint64_t round() const { return round_; }

  WeightKey weight_at(std::size_t node, std::size_t port) const {
    return g_.edge(g_.port_edge(node, port)).key();
  }

  void send(std::size_t node, std::size_t port, std::vector<std::uint64_t> words) {
    if (halted_[node])
      throw ProtocolViolation(g_.id_of(node), round_, "send after halt");
    if (port == 0 || port > g_.degree_by_index(node))
      throw ProtocolViolation(g_.id_of(node), round_,
                              "send on invalid port " + std::to_string(port));
    if (words.size() > opts_.word_budget)
      throw ProtocolViolation(
          g_.id_of(node), round_,
          "message of " + std::to_string(words.size()) + " words exceeds budget " +
              std::to_string(opts_.word_budget));
    metrics_.messages_total += 1;
    metrics_.words_total += words.size();
    std::size_t t = current_tag_[node];
    metrics_.messages_by_tag[tag_names_[t]] += 1;
    if (t >= round_tag_counts_.size()) round_tag_counts_.resize(t + 1, 0);
    round_tag_counts_[t] += 1;
    pending_[node].push_back({port, Message{std::move(words)}});
  }

  void set_tag(std::size_t node, const char* tag) {
    current_tag_[node] = intern(tag);
  }

  void wake_at(std::size_t node, std::uint64_t r) {
    wake_[node] = std::min(wake_[node] == kNever ? r : wake_[node], r);
    if (wake_[node] < round_) wake_[node] = round_;
  }

  void halt(std::size_t node) { halted_[node] = 1; }

  [[noreturn]] void fail(std::size_t node, const std::string& reason) {
    throw ProtocolViolation(g_.id_of(node), round_, reason);
  }

 private:
  std::size_t intern(const char* tag) {
    auto it = tag_ids_.find(tag);
    if (it != tag_ids_.end()) return it->second;
    tag_names_.push_back(tag);
    tag_ids_.emplace(tag, tag_names_.size() - 1);
    return tag_names_.size() - 1;
  }

  const WeightedGraph& g_;
  RunOptions opts_;
  std::vector<NodeContext> contexts_;
  std::vector<std::unique_ptr<NodeBehavior>> behaviors_;
  std::vector<char> halted_;
  std::vector<std::uint64_t> wake_;
  std::vector<std::vector<std::pair<std::size_t, Message>>> pending_;
  std::vector<std::size_t> current_tag_;
  std::vector<std::uint64_t> round_tag_counts_;
  std::vector<std::string> tag_names_;
  std::unordered_map<std::string, std::size_t> tag_ids_;
  RunMetrics metrics_;
  std::uint64_t round_ = 0;
};

std::uint64_t NodeContext::round() const { return engine_->round(); }

WeightKey NodeContext::weight_at(std::size_t port) const {
  return engine_->weight_at(index_, port);
}

void NodeContext::send(std::size_t port, std::vector<std::uint64_t> words) {
  engine_->send(index_, port, std::move(words));
}

void NodeContext::set_tag(const char* tag) { engine_->set_tag(index_, tag); }

void NodeContext::wake_at(std::uint64_t round) { engine_->wake_at(index_, round); }

void NodeContext::halt() { engine_->halt(index_); }

void NodeContext::fail(const std::string& reason) { engine_->fail(index_, reason); }

RunResult run_protocol(const WeightedGraph& g, const BehaviorFactory& factory,
                       const RunOptions& opts) {
  Engine engine(g, factory, opts);
  return engine.run();
}

void accumulate_metrics(RunMetrics& into, const RunMetrics& part) {
  into.rounds += part.rounds;
  into.messages_total += part.messages_total;
  into.words_total += part.words_total;
  for (const auto& [tag, c] : part.messages_by_tag)
    into.messages_by_tag[tag] += c;
  for (const auto& [tag, p] : part.peak_round_by_tag)
    into.peak_round_by_tag[tag] = std::max(into.peak_round_by_tag[tag], p);
}

namespace {
void fnv(std::uint64_t& h, std::uint64_t word) {
  for (int i = 0; i < 8; ++i) {
    h ^= (word >> (8 * i)) & 0xff;
    h *= 0x100000001b3ull;
  }
}
}  // namespace

std::string replay_digest(const RunResult& result) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  fnv(h, result.metrics.rounds);
  fnv(h, result.metrics.messages_total);
  for (std::size_t i = 0; i < result.nodes.size(); ++i) {
    fnv(h, result.node_ids[i]);
    auto words = result.nodes[i]->output();
    fnv(h, words.size());
    for (auto w : words) fnv(h, w);
  }
  char buf[17];
  snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cmst
