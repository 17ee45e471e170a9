#include "cmst/calibration.hpp"
#include "cmst/graph.hpp"

#include "doctest.h"
#include "json.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Binary under test: ctest exports MSTBENCH_BIN; fall back to the build dir.
std::string bench_bin() {
  if (const char* env = std::getenv("MSTBENCH_BIN")) return env;
  return "./mstbench";
}

fs::path scratch_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() /
                 ("mstbench_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args, const std::string& tag) {
  fs::path log = scratch_dir() / (tag + ".log");
  std::string cmd = bench_bin() + " " + args + " > " + log.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  CliResult res;
  res.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  res.out = ss.str();
  return res;
}

std::vector<json> read_jsonl(const fs::path& file) {
  std::vector<json> out;
  std::ifstream in(file);
  REQUIRE(in.good());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(json::parse(line));
  }
  return out;
}

std::vector<std::string> read_lines(const fs::path& file) {
  std::vector<std::string> out;
  std::ifstream in(file);
  REQUIRE(in.good());
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// Split one CSV data row into cells.
std::vector<std::string> cells_of(const std::string& row) {
  std::vector<std::string> out;
  std::stringstream ss(row);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

TEST_CASE("the bench run command writes one verified record per seed") {
  fs::path out = scratch_dir() / "run_basic.jsonl";
  auto res = run_cli("run --gen random --n 48 --m 96 --gseed 5 --algo opt "
                     "--seeds 1,2,3 --verify --out " + out.string(),
                     "run_basic");
  CHECK(res.exit_code == 0);
  auto records = read_jsonl(out);
  REQUIRE(records.size() == 3);
  std::vector<std::uint64_t> seeds;
  for (const auto& rec : records) {
    CHECK(rec.at("schema_version").get<int>() == 1);
    CHECK(rec.at("algorithm").get<std::string>() == "opt");
    CHECK(rec.at("n").get<std::size_t>() == 48);
    CHECK(rec.at("m").get<std::size_t>() == 96);
    CHECK(rec.at("verified").get<bool>());
    CHECK(rec.at("error").is_null());
    CHECK(rec.at("mst_weight").get<std::uint64_t>() > 0);
    CHECK(rec.at("rounds").get<std::uint64_t>() > 0);
    CHECK(rec.at("messages_total").get<std::uint64_t>() > 0);
    CHECK(rec.at("wall_ms").is_number());
    // per-tag counts must add up to the total
    std::uint64_t tag_sum = 0;
    for (const auto& [tag, cnt] : rec.at("messages_by_tag").items())
      tag_sum += cnt.get<std::uint64_t>();
    CHECK(tag_sum == rec.at("messages_total").get<std::uint64_t>());
    seeds.push_back(rec.at("seed").get<std::uint64_t>());
  }
  CHECK(seeds == std::vector<std::uint64_t>{1, 2, 3});
}

TEST_CASE("the bench run command accepts a graph file") {
  WeightedGraph g = generate_random_connected(30, 60, 11);
  fs::path gfile = scratch_dir() / "input_graph.txt";
  {
    std::ofstream out(gfile);
    out << serialize_graph(g);
  }
  fs::path out = scratch_dir() / "run_file.jsonl";
  auto res = run_cli("run --file " + gfile.string() +
                     " --algo kruskal --seeds 7 --verify --out " + out.string(),
                     "run_file");
  CHECK(res.exit_code == 0);
  auto records = read_jsonl(out);
  REQUIRE(records.size() == 1);
  CHECK(records[0].at("n").get<std::size_t>() == 30);
  CHECK(records[0].at("m").get<std::size_t>() == 60);
  CHECK(records[0].at("verified").get<bool>());
  CHECK(records[0].at("rounds").get<std::uint64_t>() == 0);
}

TEST_CASE("the bench run command on a single node reports a silent run") {
  fs::path out = scratch_dir() / "run_single.jsonl";
  auto res = run_cli("run --gen path --n 1 --algo opt --seeds 4 --verify "
                     "--out " + out.string(),
                     "run_single");
  CHECK(res.exit_code == 0);
  auto records = read_jsonl(out);
  REQUIRE(records.size() == 1);
  CHECK(records[0].at("rounds").get<std::uint64_t>() == 0);
  CHECK(records[0].at("messages_total").get<std::uint64_t>() == 0);
  CHECK(records[0].at("verified").get<bool>());
}

TEST_CASE("the bench run command keeps partial counts when the round limit trips") {
  fs::path out = scratch_dir() / "run_timeout.jsonl";
  auto res = run_cli("run --gen random --n 64 --m 128 --gseed 3 --algo opt "
                     "--seeds 1 --round-limit 9 --out " + out.string(),
                     "run_timeout");
  CHECK(res.exit_code == 1);
  auto records = read_jsonl(out);
  REQUIRE(records.size() == 1);
  CHECK_FALSE(records[0].at("error").is_null());
  std::string err = records[0].at("error").get<std::string>();
  CHECK(err.find("round limit") != std::string::npos);
  CHECK(records[0].at("rounds").get<std::uint64_t>() == 9);
  CHECK(records[0].at("messages_total").get<std::uint64_t>() > 0);
  CHECK_FALSE(records[0].at("verified").get<bool>());
}

TEST_CASE("the bench run command is deterministic apart from wall clock time") {
  fs::path out_a = scratch_dir() / "det_a.jsonl";
  fs::path out_b = scratch_dir() / "det_b.jsonl";
  std::string args = "run --gen grid --rows 5 --cols 6 --gseed 2 --algo ghs "
                     "--seeds 3,9 --verify --out ";
  CHECK(run_cli(args + out_a.string(), "det_a").exit_code == 0);
  CHECK(run_cli(args + out_b.string(), "det_b").exit_code == 0);
  auto recs_a = read_jsonl(out_a);
  auto recs_b = read_jsonl(out_b);
  REQUIRE(recs_a.size() == recs_b.size());
  for (std::size_t i = 0; i < recs_a.size(); ++i) {
    recs_a[i].erase("wall_ms");
    recs_b[i].erase("wall_ms");
    CHECK(recs_a[i] == recs_b[i]);
  }
}

TEST_CASE("the bench run command splits seeds across worker threads unchanged") {
  fs::path serial = scratch_dir() / "jobs_serial.jsonl";
  fs::path parallel = scratch_dir() / "jobs_parallel.jsonl";
  std::string args = "run --gen random --n 40 --m 80 --gseed 6 --algo ghs "
                     "--seeds 1,2,3,4,5,6 --verify ";
  CHECK(run_cli(args + "--out " + serial.string(), "jobs_serial").exit_code == 0);
  CHECK(run_cli(args + "--jobs 4 --out " + parallel.string(),
                "jobs_parallel").exit_code == 0);
  auto recs_s = read_jsonl(serial);
  auto recs_p = read_jsonl(parallel);
  REQUIRE(recs_s.size() == 6);
  REQUIRE(recs_p.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    recs_s[i].erase("wall_ms");
    recs_p[i].erase("wall_ms");
    CHECK(recs_s[i] == recs_p[i]);
  }
}

TEST_CASE("the bench sweep command emits medians ratios and fitted slopes") {
  fs::path out = scratch_dir() / "sweep_path.csv";
  auto res = run_cli("sweep --family path --sizes 64,128,256 --algo opt "
                     "--seeds 1,2 --out " + out.string(),
                     "sweep_path");
  CHECK(res.exit_code == 0);
  auto lines = read_lines(out);
  REQUIRE(lines.size() == 6);
  CHECK(lines[0] ==
        "n,m,D,median_rounds,median_messages,ratio_messages,ratio_rounds");
  for (std::size_t i = 1; i <= 3; ++i) {
    auto cols = cells_of(lines[i]);
    REQUIRE(cols.size() == 7);
    std::size_t n = std::stoull(cols[0]);
    CHECK(n == (std::size_t{32} << i));
    CHECK(std::stoull(cols[1]) == n - 1);   // a path has n-1 edges
    CHECK(std::stoull(cols[2]) == n - 1);   // and hop diameter n-1
    CHECK(std::stoull(cols[3]) > 0);
    CHECK(std::stoull(cols[4]) > 0);
    // normalized rounds stay under the pinned constant at these sizes
    CHECK(std::stod(cols[6]) <= cmst::cal::kOptRounds);
  }
  CHECK(lines[4].rfind("# slope_messages_vs_m=", 0) == 0);
  CHECK(lines[5].rfind("# slope_rounds_vs_dplussqrt=", 0) == 0);
  // the slope suffixes must parse as finite numbers
  CHECK_NOTHROW((void)std::stod(lines[4].substr(lines[4].find('=') + 1)));
  CHECK_NOTHROW((void)std::stod(lines[5].substr(lines[5].find('=') + 1)));
}

TEST_CASE("the bench sweep command shows shrinking message overhead as graphs densify") {
  fs::path out = scratch_dir() / "sweep_random.csv";
  auto res = run_cli("sweep --family random --n 128 --sizes 256,512,1024 "
                     "--algo opt --seeds 1,2,3 --out " + out.string(),
                     "sweep_random");
  CHECK(res.exit_code == 0);
  auto lines = read_lines(out);
  REQUIRE(lines.size() == 6);
  std::vector<double> ratio;
  for (std::size_t i = 1; i <= 3; ++i) {
    auto cols = cells_of(lines[i]);
    REQUIRE(cols.size() == 7);
    CHECK(std::stoull(cols[0]) == 128);
    ratio.push_back(std::stod(cols[5]));
  }
  // denser graphs amortize the fixed overhead: per-edge ratio must not grow
  CHECK(ratio[1] <= ratio[0] * 1.05);
  CHECK(ratio[2] <= ratio[1] * 1.05);
  // and the message count grows sublinearly in m on this family
  auto slope_line = lines[4];
  double slope = std::stod(slope_line.substr(slope_line.find('=') + 1));
  CHECK(slope < 1.0);
}

TEST_CASE("the bench sweep command is byte for byte reproducible") {
  fs::path out_a = scratch_dir() / "sweep_det_a.csv";
  fs::path out_b = scratch_dir() / "sweep_det_b.csv";
  std::string args = "sweep --family path --sizes 16,32,64 --algo ghs "
                     "--seeds 1,2 --out ";
  CHECK(run_cli(args + out_a.string(), "sweep_det_a").exit_code == 0);
  CHECK(run_cli(args + out_b.string(), "sweep_det_b").exit_code == 0);
  CHECK(read_lines(out_a) == read_lines(out_b));
}

TEST_CASE("the bench gen command writes a graph and a parameter sidecar") {
  fs::path out = scratch_dir() / "gen_hard.txt";
  auto res = run_cli("gen --gen hard --p 2 --L 4 --D 4 --d-core 2 "
                     "--core-size 4 --gseed 9 --out " + out.string(),
                     "gen_hard");
  CHECK(res.exit_code == 0);
  std::ifstream in(out);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  WeightedGraph g = parse_graph(ss.str());
  CHECK(g.node_count() > 0);
  std::ifstream meta_in(out.string() + ".params.json");
  REQUIRE(meta_in.good());
  json meta = json::parse(meta_in);
  CHECK(meta.at("schema_version").get<int>() == 1);
  CHECK(meta.at("n").get<std::size_t>() == g.node_count());
  CHECK(meta.at("m").get<std::size_t>() == g.edge_count());
  CHECK(meta.at("generator").at("kind").get<std::string>() == "hard");
  REQUIRE(meta.contains("switch_edges"));
  for (const auto& idx : meta.at("switch_edges"))
    CHECK(idx.get<std::size_t>() < g.edge_count());
}

TEST_CASE("the bench verify-cover command reports passing checks on a grid") {
  auto res = run_cli("verify-cover --gen grid --rows 6 --cols 6 --gseed 1 "
                     "--radius 3 --seed 2",
                     "verify_cover");
  CHECK(res.exit_code == 0);
  CHECK(res.out.find("[PASS]") != std::string::npos);
  CHECK(res.out.find("[FAIL]") == std::string::npos);
  CHECK(res.out.find("clusters") != std::string::npos);
}

TEST_CASE("the bench command line rejects malformed invocations") {
  CHECK(run_cli("run --gen random --n 10 --m 20 --gseed 1 --algo nosuch "
                "--seeds 1", "bad_algo").exit_code == 2);
  CHECK(run_cli("sweep --family path --sizes 16,32 --algo opt --seeds 1 "
                "--out " + (scratch_dir() / "x.csv").string(),
                "two_sizes").exit_code == 2);
  CHECK(run_cli("run --gen path --n 0 --algo opt --seeds 1 --out " +
                (scratch_dir() / "y.jsonl").string(),
                "zero_nodes").exit_code == 2);
  CHECK(run_cli("--help", "help").exit_code == 0);
}
