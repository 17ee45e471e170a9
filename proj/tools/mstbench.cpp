// Experiment harness: builds instances, runs the MST algorithms, verifies
// against the sequential oracle and emits JSONL records / CSV sweep summaries.
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cmst/calibration.hpp"
#include "cmst/cover.hpp"
#include "cmst/ghs_classic.hpp"
#include "cmst/lb_graphs.hpp"
#include "cmst/opt_mst.hpp"
#include "cmst/oracle.hpp"
#include "cmst/rng.hpp"
#include "json.hpp"

namespace {

using cmst::WeightedGraph;
using json = nlohmann::ordered_json;
using u64 = std::uint64_t;

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;  // verification failure or timeout
constexpr int kExitUsage = 2;

// ---- instance sources ------------------------------------------------------

struct GenSpec {
  std::string gen;  // random | path | grid | hard; empty when loading a file
  std::string file;
  std::size_t n = 64;
  std::size_t m = 128;
  u64 gseed = 1;
  std::size_t rows = 4, cols = 4;
  std::size_t p = 4, L = 6, D = 4, d_core = 2, core_size = 6;

  cmst::LowerBoundParams hard_params() const {
    cmst::LowerBoundParams par;
    par.p = p;
    par.L = L;
    par.D_target = D;
    par.d_core = d_core;
    par.core_size = core_size;
    par.seed = gseed;
    return par;
  }
};

struct Instance {
  WeightedGraph graph;
  std::string descriptor;
  json params;
  std::vector<std::size_t> switch_edges;  // hard instances only
};

Instance build_instance(const GenSpec& spec) {
  if (!spec.file.empty()) {
    std::ifstream in(spec.file);
    if (!in) throw cmst::ParamError("cannot open " + spec.file);
    std::stringstream buf;
    buf << in.rdbuf();
    return {cmst::parse_graph(buf.str()),
            "file:" + spec.file,
            {{"source", "file"}, {"path", spec.file}},
            {}};
  }
  if (spec.gen == "random") {
    auto g = cmst::generate_random_connected(spec.n, spec.m, spec.gseed);
    std::string d = "random:n=" + std::to_string(spec.n) +
                    ",m=" + std::to_string(spec.m) +
                    ",gseed=" + std::to_string(spec.gseed);
    return {std::move(g), std::move(d),
            {{"source", "random"},
             {"n", spec.n},
             {"m", spec.m},
             {"gseed", spec.gseed}},
            {}};
  }
  if (spec.gen == "path") {
    auto g = spec.n == 1 ? WeightedGraph::single_node(0)
                         : cmst::generate_path(spec.n);
    return {std::move(g), "path:n=" + std::to_string(spec.n),
            {{"source", "path"}, {"n", spec.n}}, {}};
  }
  if (spec.gen == "grid") {
    auto g = cmst::generate_grid(spec.rows, spec.cols, spec.gseed);
    std::string d = "grid:rows=" + std::to_string(spec.rows) +
                    ",cols=" + std::to_string(spec.cols) +
                    ",gseed=" + std::to_string(spec.gseed);
    return {std::move(g), std::move(d),
            {{"source", "grid"},
             {"rows", spec.rows},
             {"cols", spec.cols},
             {"gseed", spec.gseed}},
            {}};
  }
  if (spec.gen == "hard") {
    auto inst = cmst::build_hard_graph(spec.hard_params());
    std::string d = "hard:p=" + std::to_string(spec.p) +
                    ",L=" + std::to_string(spec.L) +
                    ",D=" + std::to_string(spec.D) +
                    ",core=" + std::to_string(spec.core_size) + "/" +
                    std::to_string(spec.d_core) +
                    ",gseed=" + std::to_string(spec.gseed);
    return {std::move(inst.graph), std::move(d),
            {{"source", "hard"},
             {"p", spec.p},
             {"L", spec.L},
             {"D_target", spec.D},
             {"d_core", spec.d_core},
             {"core_size", spec.core_size},
             {"gseed", spec.gseed},
             {"s", inst.s},
             {"t", inst.t}},
            std::move(inst.switch_edges)};
  }
  throw cmst::ParamError("pick an instance with --gen or --file");
}

void add_gen_flags(CLI::App* cmd, GenSpec& spec, bool require_source) {
  auto* gen = cmd->add_option("--gen", spec.gen, "generator")
                  ->check(CLI::IsMember({"random", "path", "grid", "hard"}));
  auto* file = cmd->add_option("--file", spec.file, "graph file to load");
  gen->excludes(file);
  if (require_source) {
    // one of the two has to be present; checked after parse
  }
  cmd->add_option("--n", spec.n, "node count");
  cmd->add_option("--m", spec.m, "edge count");
  cmd->add_option("--gseed", spec.gseed, "generator seed");
  cmd->add_option("--rows", spec.rows, "grid rows");
  cmd->add_option("--cols", spec.cols, "grid cols");
  cmd->add_option("--p", spec.p, "slow path count");
  cmd->add_option("--L", spec.L, "slow path length");
  cmd->add_option("--D", spec.D, "highway length");
  cmd->add_option("--d-core", spec.d_core, "core regularity");
  cmd->add_option("--core-size", spec.core_size, "core node count");
}

std::string default_out(const std::string& name) {
  if (const char* dir = std::getenv("MSTBENCH_OUT"))
    return std::string(dir) + "/" + name;
  return name;
}

// ---- algorithm execution ---------------------------------------------------

struct RunOutcome {
  cmst::RunMetrics metrics;
  cmst::MstResult mst;
  bool verified = false;
  std::string error;
  double wall_ms = 0;
};

RunOutcome run_algorithm(const WeightedGraph& g, const std::string& algo,
                         u64 seed, u64 round_limit, bool verify) {
  RunOutcome out;
  cmst::RunOptions ro;
  ro.seed = seed;
  if (round_limit) ro.round_limit = round_limit;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (algo == "opt") {
      auto res = cmst::run_opt_mst(g, {}, seed, ro);
      out.metrics = res.metrics;
      out.mst = res.mst;
    } else if (algo == "ghs") {
      auto res = cmst::ghs_classic(g, seed, ro);
      out.metrics = res.metrics;
      out.mst = res.mst;
    } else {
      out.mst = cmst::kruskal(g);
    }
    if (verify) {
      auto truth = cmst::kruskal(g);
      out.verified = out.mst.edge_indices == truth.edge_indices;
      if (!out.verified) out.error = "edge set differs from the oracle";
    }
  } catch (const cmst::TimeoutError& e) {
    out.metrics = e.partial;
    out.error = e.what();
    out.verified = false;
  } catch (const std::exception& e) {
    out.error = e.what();
    out.verified = false;
  }
  out.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return out;
}

json record_json(const Instance& inst, const std::string& algo, u64 seed,
                 u64 diameter, const RunOutcome& out) {
  json tags = json::object();
  for (const auto& [tag, count] : out.metrics.messages_by_tag) tags[tag] = count;
  return json{{"schema_version", 1},
              {"instance", inst.descriptor},
              {"algorithm", algo},
              {"seed", seed},
              {"n", inst.graph.n()},
              {"m", inst.graph.m()},
              {"D", diameter},
              {"rounds", out.metrics.rounds},
              {"messages_total", out.metrics.messages_total},
              {"messages_by_tag", tags},
              {"mst_weight", out.mst.total_weight},
              {"verified", out.verified},
              {"wall_ms", out.wall_ms},
              {"error", out.error}};
}

// ---- subcommands -----------------------------------------------------------

struct RunArgs {
  GenSpec spec;
  std::string algo = "opt";
  std::vector<u64> seeds;
  u64 round_limit = 0;
  bool verify = false;
  std::string out;
  std::size_t jobs = 1;
};

int cmd_run(const RunArgs& a) {
  Instance inst = build_instance(a.spec);
  const u64 diameter = inst.graph.hop_diameter().value;
  std::vector<RunOutcome> outcomes(a.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < a.seeds.size(); i = next++)
      outcomes[i] = run_algorithm(inst.graph, a.algo, a.seeds[i],
                                  a.round_limit, a.verify);
  };
  if (a.jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(a.jobs, a.seeds.size()); ++t)
      pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const std::string path = a.out.empty() ? default_out("run.jsonl") : a.out;
  std::ofstream f(path);
  if (!f) {
    std::fprintf(stderr, "cannot write %s\n", path.c_str());
    return kExitUsage;
  }
  bool failed = false;
  for (std::size_t i = 0; i < a.seeds.size(); ++i) {
    const auto& out = outcomes[i];
    f << record_json(inst, a.algo, a.seeds[i], diameter, out).dump() << "\n";
    std::printf("%s seed=%llu rounds=%llu messages=%llu weight=%llu %s%s\n",
                a.algo.c_str(), static_cast<unsigned long long>(a.seeds[i]),
                static_cast<unsigned long long>(out.metrics.rounds),
                static_cast<unsigned long long>(out.metrics.messages_total),
                static_cast<unsigned long long>(out.mst.total_weight),
                a.verify ? (out.verified ? "verified" : "MISMATCH") : "unchecked",
                out.error.empty() ? "" : (" [" + out.error + "]").c_str());
    if (!out.error.empty() || (a.verify && !out.verified)) failed = true;
  }
  std::printf("%zu record(s) -> %s\n", a.seeds.size(), path.c_str());
  return failed ? kExitRunFailure : kExitOk;
}

struct SweepArgs {
  std::string family = "path";
  std::vector<std::size_t> sizes;
  std::string algo = "opt";
  std::vector<u64> seeds;
  std::size_t n = 256;  // fixed node count for the random family
  u64 gseed = 1;
  std::string out;
};

GenSpec sweep_member(const SweepArgs& a, std::size_t size) {
  GenSpec spec;
  spec.gseed = cmst::hash_combine(a.gseed, size);
  if (a.family == "path") {
    spec.gen = "path";
    spec.n = size;
  } else if (a.family == "random") {
    spec.gen = "random";
    spec.n = a.n;
    spec.m = size;
  } else if (a.family == "grid") {
    spec.gen = "grid";
    spec.rows = spec.cols = size;
  } else {  // hard
    spec.gen = "hard";
    spec.p = spec.L = spec.D = size;
    spec.d_core = 4;
    spec.core_size = 2 * size;
  }
  return spec;
}

u64 median(std::vector<u64> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  return den > 0 ? num / den : std::nan("");
}

int cmd_sweep(const SweepArgs& a) {
  const std::string path = a.out.empty() ? default_out("sweep.csv") : a.out;
  std::ofstream f(path);
  if (!f) {
    std::fprintf(stderr, "cannot write %s\n", path.c_str());
    return kExitUsage;
  }
  f << "n,m,D,median_rounds,median_messages,ratio_messages,ratio_rounds\n";
  std::vector<double> lx_m, ly_msg, lx_d, ly_rounds;
  for (std::size_t size : a.sizes) {
    try {
      Instance inst = build_instance(sweep_member(a, size));
      const u64 D = inst.graph.hop_diameter().value;
      std::vector<u64> rounds, messages;
      for (u64 seed : a.seeds) {
        auto out = run_algorithm(inst.graph, a.algo, seed, 0, false);
        if (!out.error.empty()) throw std::runtime_error(out.error);
        rounds.push_back(out.metrics.rounds);
        messages.push_back(out.metrics.messages_total);
      }
      const u64 mr = median(rounds), mm = median(messages);
      const double n = static_cast<double>(inst.graph.n());
      const double lg = std::max(1.0, std::ceil(std::log2(n)));
      const double ratio_m = static_cast<double>(mm) /
                             (static_cast<double>(inst.graph.m()) * lg * lg * lg);
      const double ratio_r = static_cast<double>(mr) /
                             ((static_cast<double>(D) + std::sqrt(n)) * lg * lg * lg);
      char line[256];
      std::snprintf(line, sizeof line, "%zu,%zu,%llu,%llu,%llu,%.6f,%.6f\n",
                    inst.graph.n(), inst.graph.m(),
                    static_cast<unsigned long long>(D),
                    static_cast<unsigned long long>(mr),
                    static_cast<unsigned long long>(mm), ratio_m, ratio_r);
      f << line;
      std::printf("%s", line);
      if (mm > 0) {
        lx_m.push_back(std::log(static_cast<double>(inst.graph.m())));
        ly_msg.push_back(std::log(static_cast<double>(mm)));
      }
      if (mr > 0) {
        lx_d.push_back(std::log(static_cast<double>(D) + std::sqrt(n)));
        ly_rounds.push_back(std::log(static_cast<double>(mr)));
      }
    } catch (const std::exception& e) {
      f << "# aborted: " << e.what() << "\n";
      std::fprintf(stderr, "sweep aborted at size %zu: %s\n", size, e.what());
      return kExitRunFailure;
    }
  }
  char s1[128], s2[128];
  std::snprintf(s1, sizeof s1, "# slope_messages_vs_m=%.4f\n",
                lx_m.size() >= 2 ? fit_slope(lx_m, ly_msg) : std::nan(""));
  std::snprintf(s2, sizeof s2, "# slope_rounds_vs_dplussqrt=%.4f\n",
                lx_d.size() >= 2 ? fit_slope(lx_d, ly_rounds) : std::nan(""));
  f << s1 << s2;
  std::printf("%s%s-> %s\n", s1, s2, path.c_str());
  return kExitOk;
}

struct GenArgs {
  GenSpec spec;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  Instance inst = build_instance(a.spec);
  const std::string path = a.out.empty() ? default_out("graph.txt") : a.out;
  std::ofstream f(path);
  if (!f) {
    std::fprintf(stderr, "cannot write %s\n", path.c_str());
    return kExitUsage;
  }
  f << cmst::serialize_graph(inst.graph);
  json meta = {{"schema_version", 1},
               {"generator", inst.params},
               {"n", inst.graph.n()},
               {"m", inst.graph.m()}};
  if (!inst.switch_edges.empty()) meta["switch_edges"] = inst.switch_edges;
  std::ofstream pf(path + ".params.json");
  pf << meta.dump(2) << "\n";
  std::printf("wrote %s (n=%zu m=%zu) and %s.params.json\n", path.c_str(),
              inst.graph.n(), inst.graph.m(), path.c_str());
  return kExitOk;
}

struct CoverArgs {
  GenSpec spec;
  u64 radius = 4;
  u64 kappa = 0;
  u64 seed = 1;
};

int cmd_verify_cover(const CoverArgs& a) {
  Instance inst = build_instance(a.spec);
  auto res = cmst::compute_cover(inst.graph, a.radius, a.seed, a.kappa);
  auto rep = cmst::verify_cover(res.cover, inst.graph);
  auto line = [](const char* name, const cmst::CoverPropertyReport& p) {
    std::printf("[%s] %s: %s\n", p.ok ? "PASS" : "FAIL", name,
                p.detail.c_str());
  };
  line("tree depth", rep.depth);
  line("membership sparsity", rep.sparsity);
  line("neighborhood coverage", rep.neighborhood);
  std::printf("clusters=%zu attempts=%zu messages=%llu\n",
              res.cover.clusters.size(), res.attempts,
              static_cast<unsigned long long>(res.metrics.messages_total));
  return rep.all_ok() ? kExitOk : kExitRunFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MST protocol experiment harness"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "run an algorithm on one instance");
  add_gen_flags(run, run_args.spec, true);
  run->add_option("--algo", run_args.algo, "algorithm")
      ->check(CLI::IsMember({"opt", "ghs", "kruskal"}));
  run->add_option("--seeds", run_args.seeds, "run seeds")
      ->delimiter(',')
      ->required();
  run->add_option("--round-limit", run_args.round_limit, "abort after N rounds");
  run->add_flag("--verify", run_args.verify, "compare against the oracle");
  run->add_option("--out", run_args.out, "output JSONL path");
  run->add_option("--jobs", run_args.jobs, "parallel seed runs");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "scaling sweep over a family");
  sweep->add_option("--family", sweep_args.family, "instance family")
      ->check(CLI::IsMember({"path", "random", "grid", "hard"}));
  sweep->add_option("--sizes", sweep_args.sizes, "family sizes")
      ->delimiter(',')
      ->required();
  sweep->add_option("--algo", sweep_args.algo, "algorithm")
      ->check(CLI::IsMember({"opt", "ghs", "kruskal"}));
  sweep->add_option("--seeds", sweep_args.seeds, "run seeds")
      ->delimiter(',')
      ->required();
  sweep->add_option("--n", sweep_args.n, "node count for the random family");
  sweep->add_option("--gseed", sweep_args.gseed, "generator seed");
  sweep->add_option("--out", sweep_args.out, "output CSV path");

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "emit an instance to a file");
  add_gen_flags(gen, gen_args.spec, true);
  gen->add_option("--out", gen_args.out, "output path");

  CoverArgs cover_args;
  auto* vc = app.add_subcommand("verify-cover",
                                "build a neighborhood cover and check it");
  add_gen_flags(vc, cover_args.spec, true);
  vc->add_option("--radius", cover_args.radius, "cover radius");
  vc->add_option("--kappa", cover_args.kappa, "sparsity knob (0 = log2 n)");
  vc->add_option("--seed", cover_args.seed, "carving seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run) {
      if (run_args.seeds.empty()) throw CLI::ValidationError("need a seed");
      return cmd_run(run_args);
    }
    if (*sweep) {
      if (sweep_args.sizes.size() < 3) {
        std::fprintf(stderr, "sweep needs at least three sizes\n");
        return kExitUsage;
      }
      if (sweep_args.seeds.empty()) {
        std::fprintf(stderr, "sweep needs at least one seed\n");
        return kExitUsage;
      }
      return cmd_sweep(sweep_args);
    }
    if (*gen) return cmd_gen(gen_args);
    if (*vc) return cmd_verify_cover(cover_args);
  } catch (const cmst::ParamError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRunFailure;
  }
  return kExitUsage;
}
