#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <set>

#include "../support/helpers.hpp"
#include "cuatree/analytics.hpp"
#include "cuatree/cli.hpp"
#include "cuatree/error.hpp"
#include "cuatree/pipeline.hpp"
#include "cuatree/remote_agents.hpp"

using namespace cuatree;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("cuatree-test-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cuatree");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

Json launcher_manifest() {
  Json j = read_json_file(testing::fixture("launcher_manifest.json"));
  j["sim_spec"] = testing::fixture("launcher.json").string();
  return j;
}

fs::path write_manifest(const fs::path& dir, const Json& j) {
  const fs::path p = dir / "manifest.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Node identity independent of ids: the action path from the root plus status.
std::set<std::string> node_set(const std::vector<ExplorationTree>& forest) {
  std::set<std::string> out;
  for (const auto& t : forest) {
    for (const auto& [id, n] : t.nodes) {
      std::string key = t.tree_id + ":" + std::string(to_string(n.status));
      for (const auto& a : path_to(t, id)) key += "|" + to_json(a).dump();
      out.insert(key);
    }
  }
  return out;
}

std::string config_error(const Json& j) {
  try {
    parse_manifest(j, testing::fixture(""));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("manifest parsing") {
  const RunManifest m = parse_manifest(launcher_manifest(), testing::fixture(""));
  CHECK(m.seed == 7);
  CHECK(m.trees == 5);
  CHECK(m.policy == BranchingPolicy{8, 2, 5, {3, 2, 1}});
  CHECK(m.memory.prefix_length == 3);
  CHECK(m.explorer.terminate_permille == 150);
  CHECK(m.assets.size() == 2);

  Json j = launcher_manifest();
  j.erase("seed");
  CHECK(config_error(j).find("seed") != std::string::npos);
  j = launcher_manifest();
  j["policy"]["widths"] = {1, 2, 1};
  CHECK(config_error(j).find("policy") != std::string::npos);
  j = launcher_manifest();
  j["persona"] = "reckless";
  CHECK(config_error(j).find("persona") != std::string::npos);
  j = launcher_manifest();
  j["sim_spec"] = "missing.json";
  CHECK(config_error(j).find("sim_spec") != std::string::npos);
  j = launcher_manifest();
  j["schema_version"] = 2;
  CHECK(config_error(j).find("schema_version") != std::string::npos);
  j = launcher_manifest();
  j["memory"]["threshold"] = 1.5;
  CHECK(config_error(j).find("memory.threshold") != std::string::npos);
  j = launcher_manifest();
  j["assets"][1].erase("ref");
  CHECK(config_error(j).find("assets[1].ref") != std::string::npos);
}

TEST_CASE("REMOTE_AGENT_URL overrides the manifest endpoint") {
  TempDir dir;
  Json j = launcher_manifest();
  j["agents"] = {{"mode", "remote"}, {"endpoint", "http://127.0.0.1:1"}};
  const fs::path p = write_manifest(dir.path, j);
  ::setenv("REMOTE_AGENT_URL", "http://127.0.0.1:2", 1);
  CHECK(load_manifest(p).remote.endpoint == "http://127.0.0.1:2");
  ::unsetenv("REMOTE_AGENT_URL");
  CHECK(load_manifest(p).remote.endpoint == "http://127.0.0.1:1");
}

TEST_CASE("remote agents reproduce the scripted forest") {
  TempDir dir;
  Json j = launcher_manifest();
  j["trees"] = 2;
  const RunManifest scripted = parse_manifest(j, dir.path);
  const RunResult local = explore_to_dir(scripted, dir.path / "local");

  const auto spec = testing::load_fixture_spec("launcher.json");
  AgentGatewayServer server(scripted_suite(spec, scripted.explorer, scripted.min_span));
  server.start();
  j["agents"] = {{"mode", "remote"}, {"endpoint", server.endpoint()}};
  const RunManifest remote = parse_manifest(j, dir.path);
  const RunResult over_http = explore_to_dir(remote, dir.path / "remote");
  CHECK(server.requests_served() > 0);
  REQUIRE(local.forest.size() == over_http.forest.size());
  for (std::size_t i = 0; i < local.forest.size(); ++i) CHECK(local.forest[i] == over_http.forest[i]);
}

TEST_CASE("cli explore") {
  TempDir dir;
  SUBCASE("single tree, single worker") {
    const fs::path m = write_manifest(dir.path, launcher_manifest());
    CHECK(run_cli({"explore", m.string(), "--trees", "1", "--workers", "1", "--out", (dir.path / "f").string()}) == 0);
    const auto forest = load_forest(dir.path / "f");
    REQUIRE(forest.trees.size() == 1);
    CHECK(forest.warnings.empty());
    CHECK(validate(forest.trees[0]).empty());
    CHECK(forest.max_depth == 8);
    CHECK(run_cli({"validate", (dir.path / "f").string()}) == 0);
  }
  SUBCASE("worker count does not change the nodes") {
    const fs::path m = write_manifest(dir.path, launcher_manifest());
    CHECK(run_cli({"explore", m.string(), "--workers", "1", "--out", (dir.path / "one").string()}) == 0);
    CHECK(run_cli({"explore", m.string(), "--workers", "4", "--out", (dir.path / "four").string()}) == 0);
    const auto one = load_forest(dir.path / "one").trees;
    CHECK(one.size() == 5);
    CHECK(node_set(one) == node_set(load_forest(dir.path / "four").trees));
    CHECK(slurp(dir.path / "one" / "run.json") == slurp(dir.path / "four" / "run.json"));
  }
  SUBCASE("missing seed") {
    Json j = launcher_manifest();
    j.erase("seed");
    CHECK(run_cli({"explore", write_manifest(dir.path, j).string()}) == 2);
    CHECK(run_cli({"validate", (dir.path / "manifest.json").string()}) == 2);
  }
  SUBCASE("unparseable manifest and unknown flags") {
    std::ofstream(dir.path / "bad.json") << "{ nope";
    CHECK(run_cli({"explore", (dir.path / "bad.json").string()}) == 2);
    CHECK(run_cli({"explore", "--bogus"}) == 2);
  }
}

TEST_CASE("cli postprocess, extract-dpo and analyze") {
  TempDir dir;
  const fs::path forest = dir.path / "forest";
  const fs::path m = write_manifest(dir.path, launcher_manifest());
  REQUIRE(run_cli({"explore", m.string(), "--out", forest.string()}) == 0);

  SUBCASE("postprocess defaults") {
    CHECK(run_cli({"postprocess", forest.string(), "--out", (dir.path / "ds").string()}) == 0);
    const Json stats = read_json_file(dir.path / "ds" / "stats.json");
    REQUIRE(stats["tiers"].size() == 3);
    CHECK(stats["tiers"][0]["tier"] == "STEP");
    CHECK(stats["tiers"][0]["avg_steps"] == 1.0);
    CHECK(read_jsonl(dir.path / "ds" / "long_traj.jsonl").size() == stats["tiers"][2]["filtered"].get<std::size_t>());
    CHECK(slurp(dir.path / "ds" / "stats.txt").find("SUB_TRAJ") != std::string::npos);
  }
  SUBCASE("impossible dimension threshold") {
    CHECK(run_cli({"postprocess", forest.string(), "--out", (dir.path / "ds").string(), "--min-dim", "3",
                   "--min-total", "12"}) == 0);
    CHECK(run_cli({"postprocess", forest.string(), "--out", (dir.path / "ds4").string(), "--min-dim", "4"}) == 0);
    const Json stats = read_json_file(dir.path / "ds4" / "stats.json");
    CHECK(stats["tiers"][2]["filtered"] == 0);
    CHECK(stats["tiers"][2]["original"].get<int>() > 0);
    CHECK(read_jsonl(dir.path / "ds4" / "long_traj.jsonl").empty());
    CHECK(run_cli({"postprocess", forest.string(), "--out", (dir.path / "neg").string(), "--min-dim", "-1"}) == 2);
  }
  SUBCASE("empty forest directory") {
    fs::create_directories(dir.path / "empty");
    CHECK(run_cli({"postprocess", (dir.path / "empty").string(), "--out", (dir.path / "ds").string()}) == 1);
    CHECK(run_cli({"extract-dpo", (dir.path / "empty").string(), "--out", (dir.path / "dp").string()}) == 1);
  }
  SUBCASE("corrupt tree files are skipped") {
    fs::create_directories(dir.path / "mixed");
    fs::copy(forest, dir.path / "mixed", fs::copy_options::recursive);
    std::ofstream(dir.path / "mixed" / "zzz.tree.json") << "{\"tree_id\": 3}";
    const auto loaded = load_forest(dir.path / "mixed");
    CHECK(loaded.trees.size() == 5);
    CHECK(loaded.warnings.size() == 1);
    CHECK(run_cli({"postprocess", (dir.path / "mixed").string(), "--out", (dir.path / "ds").string()}) == 0);
    CHECK(run_cli({"validate", (dir.path / "mixed").string()}) == 1);
  }
  SUBCASE("extract-dpo is deterministic") {
    CHECK(run_cli({"extract-dpo", forest.string(), "--out", (dir.path / "a").string(), "--seed", "3"}) == 0);
    CHECK(run_cli({"extract-dpo", forest.string(), "--out", (dir.path / "b").string(), "--seed", "3"}) == 0);
    CHECK(slurp(dir.path / "a" / "pairs.jsonl") == slurp(dir.path / "b" / "pairs.jsonl"));
    const auto pairs = read_jsonl(dir.path / "a" / "pairs.jsonl");
    CHECK_FALSE(pairs.empty());
    for (const auto& p : pairs) {
      const auto pair = preference_pair_from_json(p);
      CHECK(pair.win != pair.lose);
      CHECK_FALSE(pair.goal.empty());
    }
  }
  SUBCASE("analyze jaccard matches the analytics oracle") {
    CHECK(run_cli({"analyze", "jaccard", forest.string(), "--out", (dir.path / "an").string()}) == 0);
    const Json report = read_json_file(dir.path / "an" / "jaccard.json");
    const auto loaded = load_forest(forest);
    const auto oracle = analytics::redundancy_matrix(loaded.trees, loaded.render.width, loaded.render.height);
    REQUIRE(report["matrix"].size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      REQUIRE(report["matrix"][i].size() == 5);
      for (std::size_t k = 0; k < 5; ++k) CHECK(report["matrix"][i][k].get<double>() == oracle.values[i][k]);
    }
    CHECK(fs::exists(dir.path / "an" / "jaccard.csv"));
    CHECK(fs::exists(dir.path / "an" / "jaccard.txt"));
  }
  SUBCASE("other analyses") {
    const std::string out = (dir.path / "an").string();
    CHECK(run_cli({"analyze", "ttr", forest.string(), "--out", out, "--sample-size", "50", "--repeats", "5"}) == 0);
    CHECK(run_cli({"analyze", "unique-tasks", forest.string(), "--out", out}) == 0);
    CHECK(run_cli({"analyze", "depth-hist", forest.string(), "--out", out}) == 0);
    CHECK(run_cli({"analyze", "efficiency", forest.string(), "--out", out}) == 0);
    CHECK(read_json_file(dir.path / "an" / "ttr.json")["values"].size() == 5);
    CHECK(read_json_file(dir.path / "an" / "unique_tasks.json").contains("cumulative"));
  }
}

TEST_CASE("cli extract-dpo on a chain-only forest") {
  TempDir dir;
  testing::TreeBuilder b;
  NodeId cur = b.root;
  for (int i = 0; i < 4; ++i) cur = b.click(cur, "step " + std::to_string(i), i);
  b.terminate(cur);
  write_forest(std::span(&b.tree, 1), dir.path / "chain");
  CHECK(run_cli({"extract-dpo", (dir.path / "chain").string(), "--out", (dir.path / "dp").string()}) == 0);
  CHECK(read_jsonl(dir.path / "dp" / "pairs.jsonl").empty());
}
