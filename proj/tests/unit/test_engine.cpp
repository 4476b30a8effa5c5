#include <doctest.h>

#include <atomic>
#include <mutex>
#include <set>

#include "../support/helpers.hpp"
#include "cuatree/error.hpp"
#include "cuatree/serialize.hpp"

using namespace cuatree;
using testing::TreeBuilder;

namespace {

EngineConfig launcher_config(const SimAppSpec& spec, int trees, int workers, BranchingPolicy policy) {
  EngineConfig c;
  c.policy = policy;
  c.stop = {policy.max_depth, 3};
  c.n_workers = workers;
  for (int i = 0; i < trees; ++i) {
    TreeJob job;
    job.tree_id = "tree-" + std::to_string(i);
    job.env.category = spec.categories[static_cast<std::size_t>(i) % spec.categories.size()].id;
    job.env.seed = 100 + static_cast<std::uint64_t>(i);
    job.env.render = spec.render;
    c.trees.push_back(job);
  }
  return c;
}

std::string dump(const std::vector<ExplorationTree>& forest) {
  std::string out;
  for (const auto& t : forest) out += to_json(t).dump() + "\n";
  return out;
}

const BranchingPolicy kSmall{8, 2, 5, {3, 2, 1}};

}  // namespace

TEST_CASE("rms_diff") {
  const Observation zeros(2, 2, 1, {0, 0, 0, 0});
  CHECK(rms_diff(zeros, zeros) == 0.0);
  CHECK(rms_diff(zeros, Observation(2, 2, 1, {10, 0, 0, 0})) == doctest::Approx(5.0));
  CHECK(rms_diff(Observation(3, 1, 1, {0, 0, 0}), Observation(3, 1, 1, {255, 255, 255})) == doctest::Approx(255.0));
  CHECK_THROWS_AS(rms_diff(zeros, Observation(4, 1, 1, {0, 0, 0, 0})), ContractError);
  const ReplayPolicy p;
  CHECK(consistent(0.0, p));
  CHECK(consistent(4.99, p));
  CHECK_FALSE(consistent(5.0, p));
}

TEST_CASE("k_max and policy validation") {
  const BranchingPolicy d;
  CHECK(k_max(d, 0) == 4);
  CHECK(k_max(d, 7) == 2);
  CHECK(k_max(d, 15) == 1);
  CHECK_THROWS_AS(k_max(d, 20), ContractError);
  CHECK_THROWS_AS(k_max(d, -1), ContractError);
  int previous = k_max(d, 0);
  for (int t = 1; t < d.max_depth; ++t) {
    CHECK(k_max(d, t) <= previous);
    previous = k_max(d, t);
  }
  CHECK_FALSE(policy_violation(d));
  CHECK(policy_violation(BranchingPolicy{20, 13, 6, {4, 2, 1}}));
  CHECK(policy_violation(BranchingPolicy{20, 6, 13, {1, 2, 1}}));
  CHECK(policy_violation(BranchingPolicy{20, 6, 13, {4, 2, 0}}));
  CHECK(policy_violation(BranchingPolicy{0, 0, 0, {1, 1, 1}}));
  CHECK_FALSE(policy_violation(linear_policy(1)));
  CHECK_FALSE(policy_violation(linear_policy(2)));
  CHECK(policy_violation(BranchingPolicy{2, 0, 0, {2, 1, 1}}));
  CHECK(linear_policy(9).widths == std::array<int, 3>{1, 1, 1});
}

TEST_CASE("novelty_check") {
  PrefixMemory memory(3);
  CHECK(novelty_check(memory, "mail", {}, "Open inbox"));
  memory.admit("mail", {"Open inbox"});
  CHECK_FALSE(novelty_check(memory, "mail", {}, "open  INBOX"));
  CHECK(novelty_check(memory, "mail", {}, "Compose draft"));
  CHECK(novelty_check(memory, "other", {}, "Open inbox"));
  CHECK(novelty_check(memory, "mail", {"x"}, "Open inbox"));
  memory.admit("mail", {"a", "b", "c", "d"});
  CHECK(novelty_check(memory, "mail", {"a", "b", "c"}, "d"));

  PrefixMemory tfidf(3, 0.8, SimilarityMode::kTfIdf);
  tfidf.admit("mail", {"Open the inbox folder"});
  CHECK(novelty_check(tfidf, "mail", {}, "Zebra quartz"));
  CHECK_FALSE(novelty_check(tfidf, "mail", {}, "open the inbox folder"));
}

TEST_CASE("expand") {
  auto spec = testing::spec_from(testing::fan_spec_json(4));
  SimEnvironment env(spec);
  const EnvironmentConfig cfg{"fan", {}, 1, 0.0, spec->render};
  ExpandOptions options;
  options.policy = BranchingPolicy{6, 2, 4, {4, 2, 1}};
  options.stop = {6, 3};
  const AgentSuite agents = scripted_suite(spec);

  ExplorationTree tree;
  tree.tree_id = "t";
  tree.category_id = "fan";
  tree.seed = 1;
  const Observation root_frame = env.reset(cfg);
  const NodeId root = tree.add_root(root_frame.digest());

  SUBCASE("four novel candidates") {
    PrefixMemory memory;
    const auto ids = expand(tree, root, root_frame, env, agents, &memory, options);
    REQUIRE(ids.size() == 4);
    int explored = 0, unexplored = 0;
    for (NodeId id : ids) {
      explored += tree.node(id).status == NodeStatus::kExplored;
      unexplored += tree.node(id).status == NodeStatus::kUnexplored;
    }
    CHECK(explored == 1);
    CHECK(unexplored == 3);
    CHECK(memory.size() == 1);
    CHECK(validate(tree).empty());
  }
  SUBCASE("all candidates already in memory") {
    PrefixMemory memory;
    const auto first = expand(tree, root, root_frame, env, agents, nullptr, options);
    NodeId executed = 0;
    for (NodeId id : first) {
      if (tree.node(id).status == NodeStatus::kExplored) executed = id;
    }
    const auto history = goal_history(tree, executed);
    memory.admit("fan", {history[0], "Inspect caption " + history[0].substr(history[0].size() - 1)});
    SimEnvironment replay(spec);
    const auto restored = restore_node(tree, executed, replay, cfg, {}, nullptr);
    REQUIRE(restored.ok());
    CHECK(expand(tree, executed, *restored.observation, replay, agents, &memory, options).empty());
    CHECK(tree.node(executed).status == NodeStatus::kPruned);
  }
  SUBCASE("terminate closes the branch") {
    auto chain = testing::spec_from(testing::chain_spec_json(1));
    SimEnvironment cenv(chain);
    ExplorationTree t;
    t.tree_id = "c";
    t.category_id = "chain";
    const Observation f0 = cenv.reset({"chain", {}, 1, 0.0, chain->render});
    const NodeId r = t.add_root(f0.digest());
    const auto a = expand(t, r, f0, cenv, scripted_suite(chain), nullptr, options);
    REQUIRE(a.size() == 1);
    const auto b = expand(t, a[0], cenv.render_clean(), cenv, scripted_suite(chain), nullptr, options);
    REQUIRE(b.size() == 1);
    CHECK(t.node(b[0]).status == NodeStatus::kTerminal);
    CHECK(t.node(b[0]).verification->feedback == kTerminateFeedback);
    CHECK(t.node(b[0]).observation_digest == t.node(a[0]).observation_digest);
  }
}

TEST_CASE("run_exploration on a linear chain") {
  // The terminal edge sits one level below the last screen, so five screens need D = 6.
  auto spec = testing::spec_from(testing::chain_spec_json(5));
  const auto result = testing::run_spec(spec, testing::single_tree_config(*spec, linear_policy(6)));
  const auto& tree = result.forest.at(0);
  CHECK(validate(tree).empty());
  CHECK(tree.nodes.size() == 7);
  const auto ls = leaves(tree);
  REQUIRE(ls.size() == 1);
  CHECK(tree.node(ls[0]).status == NodeStatus::kTerminal);
  const auto path = path_nodes(tree, ls[0]);
  REQUIRE(path.size() == 6);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(tree.node(path[i]).status == NodeStatus::kExplored);
    CHECK(tree.node(path[i]).incoming->step_goal == "Advance to step " + std::to_string(i + 1));
  }
}

TEST_CASE("dead regions are pruned after F consecutive failures") {
  auto spec = testing::spec_from(testing::fan_spec_json(1));
  const auto result = testing::run_spec(spec, testing::single_tree_config(*spec, linear_policy(10), 1, 3));
  const auto& tree = result.forest.at(0);
  const auto ls = leaves(tree);
  REQUIRE(ls.size() == 1);
  const TreeNode& leaf = tree.node(ls[0]);
  CHECK(leaf.status == NodeStatus::kPruned);
  CHECK(leaf.depth == 4);
  CHECK(trailing_failures(tree, ls[0]) == 3);
  for (NodeId id : path_nodes(tree, ls[0])) {
    if (tree.node(id).depth > 1) CHECK(tree.node(id).verification->result_type == ResultType::kNoChange);
  }
}

TEST_CASE("width table bounds the tree size") {
  auto spec = testing::load_fixture_spec("launcher.json");
  const BranchingPolicy policy{3, 1, 2, {2, 1, 1}};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto cfg = testing::single_tree_config(*spec, policy, seed);
    const auto result = testing::run_spec(spec, cfg, {Persona::kDiverse, 200});
    CHECK(result.forest[0].nodes.size() - 1 <= 7);
  }
}

TEST_CASE("exploration_stats") {
  SUBCASE("single chain") {
    TreeBuilder b;
    NodeId cur = b.root;
    for (int i = 0; i < 5; ++i) cur = b.click(cur, "g", i);
    const auto s = exploration_stats(std::span(&b.tree, 1), 5);
    CHECK(s.trajectories == 1);
    CHECK(s.avg_expansions_per_trajectory == 5.0);
  }
  SUBCASE("shared prefix") {
    TreeBuilder b;
    NodeId cur = b.root;
    for (int i = 0; i < 10; ++i) cur = b.click(cur, "g", i);
    for (int branch = 0; branch < 2; ++branch) {
      NodeId n = b.click(cur, "b", 100 + branch);
      b.click(n, "c", 200);
    }
    const auto s = exploration_stats(std::span(&b.tree, 1), 12);
    CHECK(s.trajectories == 2);
    CHECK(s.unique_expansions == 14);
    CHECK(s.avg_expansions_per_trajectory == 7.0);
    CHECK(s.mean_trajectory_length == 12.0);
    CHECK(reuse_curve(b.tree, 12) == std::vector<double>{12.0, 7.0});
  }
  SUBCASE("no trajectories") {
    TreeBuilder b;
    b.click(b.root, "g", 1, NodeStatus::kPruned, ResultType::kNoChange);
    CHECK_THROWS_AS(exploration_stats(std::span(&b.tree, 1), 5), UndefinedAverageError);
  }
  SUBCASE("linear baseline") {
    auto spec = testing::load_fixture_spec("launcher.json");
    auto cfg = launcher_config(*spec, 6, 1, linear_policy(8));
    const auto result = testing::run_spec(spec, cfg, {Persona::kDiverse, 150});
    const auto s = exploration_stats(result.forest, 8);
    CHECK(s.avg_expansions_per_trajectory == s.mean_trajectory_length);
  }
}

TEST_CASE("restore under replay noise") {
  auto spec = testing::load_fixture_spec("launcher.json");
  auto cfg = testing::single_tree_config(*spec, kSmall, 5);
  BlobStore blobs;
  PrefixMemory memory;
  const auto result = run_exploration(cfg, [spec] { return std::make_unique<SimEnvironment>(spec); },
                                      scripted_suite(spec, {Persona::kDiverse, 100}), memory, &blobs);
  const ExplorationTree& recorded = result.forest[0];
  auto restore_all = [&](double amplitude) {
    ExplorationTree tree = recorded;
    EnvironmentConfig env_cfg = cfg.trees[0].env;
    env_cfg.noise_amplitude = amplitude;
    int ok = 0, corrupted = 0;
    double max_delta = 0.0;
    SimEnvironment env(spec);
    for (const auto& [id, n] : recorded.nodes) {
      if (n.status != NodeStatus::kExplored) continue;
      const auto r = restore_node(tree, id, env, env_cfg, cfg.replay, &blobs);
      if (r.ok()) {
        ++ok;
        for (const auto& c : r.checkpoints) max_delta = std::max(max_delta, c.delta);
      } else {
        ++corrupted;
        CHECK(r.corruption->delta > 5.0);
        CHECK(r.corruption->failing_depth >= 0);
        CHECK(tree.node(id).status == NodeStatus::kCorrupted);
      }
    }
    return std::tuple{ok, corrupted, max_delta};
  };
  const auto [ok0, bad0, delta0] = restore_all(0.0);
  CHECK(ok0 > 10);
  CHECK(bad0 == 0);
  CHECK(delta0 == 0.0);
  const auto [ok3, bad3, delta3] = restore_all(3.0);
  CHECK(bad3 == 0);
  CHECK(delta3 < 5.0);
  const auto [ok8, bad8, delta8] = restore_all(8.0);
  CHECK(ok8 == 0);
  CHECK(bad8 == ok0);
}

TEST_CASE("run invariants") {
  auto spec = testing::load_fixture_spec("launcher.json");
  for (int workers : {1, 3}) {
    auto cfg = launcher_config(*spec, 4, workers, kSmall);
    const auto result = testing::run_spec(spec, cfg, {Persona::kDiverse, 150});
    CHECK(result.counters.max_expansions_per_node() <= 1);
    CHECK(result.warnings.empty());
    CHECK(result.corruptions.empty());
    for (const auto& tree : result.forest) {
      CHECK(validate(tree).empty());
      std::map<NodeId, int> children;
      for (const auto& [id, n] : tree.nodes) {
        CHECK(n.status != NodeStatus::kUnexplored);
        if (n.parent) ++children[*n.parent];
      }
      for (const auto& [id, count] : children) CHECK(count <= k_max(kSmall, tree.node(id).depth));
    }
  }
}

TEST_CASE("forests do not depend on the worker count") {
  auto spec = testing::load_fixture_spec("launcher.json");
  const std::string one = dump(testing::run_spec(spec, launcher_config(*spec, 5, 1, kSmall), {Persona::kDiverse, 150}).forest);
  CHECK(one == dump(testing::run_spec(spec, launcher_config(*spec, 5, 1, kSmall), {Persona::kDiverse, 150}).forest));
  CHECK(one == dump(testing::run_spec(spec, launcher_config(*spec, 5, 4, kSmall), {Persona::kDiverse, 150}).forest));
}

TEST_CASE("failed claims are retried") {
  auto spec = testing::load_fixture_spec("launcher.json");
  const auto clean = testing::run_spec(spec, launcher_config(*spec, 2, 2, kSmall), {Persona::kDiverse, 150});

  SUBCASE("a worker throws once per node") {
    auto cfg = launcher_config(*spec, 2, 2, kSmall);
    std::mutex mutex;
    std::set<std::pair<std::string, NodeId>> failed;
    cfg.on_claim = [&](const std::string& tree, NodeId node) {
      std::lock_guard lock(mutex);
      if (node % 3 == 1 && failed.insert({tree, node}).second) throw std::runtime_error("worker crashed");
    };
    const auto result = testing::run_spec(spec, cfg, {Persona::kDiverse, 150});
    CHECK(result.counters.failed_claims == failed.size());
    CHECK(result.counters.failed_claims > 0);
    CHECK(dump(result.forest) == dump(clean.forest));
  }
  SUBCASE("transport errors back off and retry") {
    auto cfg = launcher_config(*spec, 2, 2, kSmall);
    cfg.transport_backoff = std::chrono::milliseconds(1);
    std::atomic<int> thrown{0};
    cfg.on_claim = [&](const std::string&, NodeId node) {
      if (node == 2 && thrown.fetch_add(1) < 2) throw TransportError("connection reset");
    };
    const auto result = testing::run_spec(spec, cfg, {Persona::kDiverse, 150});
    CHECK(result.counters.failed_claims == 2);
    CHECK(dump(result.forest) == dump(clean.forest));
  }
  SUBCASE("a node that always fails is abandoned") {
    auto cfg = launcher_config(*spec, 1, 2, kSmall);
    cfg.on_claim = [](const std::string&, NodeId node) {
      if (node == 2) throw std::runtime_error("always");
    };
    const auto result = testing::run_spec(spec, cfg, {Persona::kDiverse, 150});
    CHECK(result.warnings.size() == 1);
    CHECK(result.forest[0].node(2).status == NodeStatus::kUnexplored);
    CHECK(validate(result.forest[0]).empty());
  }
}

TEST_CASE("engine config validation") {
  auto spec = testing::load_fixture_spec("launcher.json");
  auto cfg = launcher_config(*spec, 1, 1, kSmall);
  CHECK_FALSE(engine_config_violation(cfg));
  cfg.n_workers = 0;
  CHECK(engine_config_violation(cfg));
  CHECK_THROWS_AS(testing::run_spec(spec, cfg), ConfigError);
}
