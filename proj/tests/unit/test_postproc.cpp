#include <doctest.h>

#include <random>

#include "../support/helpers.hpp"
#include "cuatree/error.hpp"
#include "cuatree/postproc.hpp"

using namespace cuatree;
using testing::TreeBuilder;

namespace {

std::vector<ResultType> results_of(const Trajectory& t) {
  std::vector<ResultType> out;
  for (const auto& s : t.steps) out.push_back(s.verification.result_type);
  return out;
}

Trajectory linear(const std::vector<ResultType>& results) {
  TreeBuilder b;
  NodeId cur = b.root;
  for (std::size_t i = 0; i < results.size(); ++i) {
    cur = b.click(cur, "goal number " + std::to_string(i), static_cast<int>(i), NodeStatus::kExplored, results[i]);
  }
  return trajectory_to(b.tree, cur);
}

}  // namespace

TEST_CASE("collect_trajectories") {
  SUBCASE("three terminal leaves") {
    TreeBuilder b;
    for (int i = 0; i < 3; ++i) b.terminate(b.click(b.root, "g", i));
    CHECK(collect_trajectories(b.tree, 20).size() == 3);
  }
  SUBCASE("only leaf corrupted") {
    TreeBuilder b;
    b.click(b.root, "g", 1, NodeStatus::kCorrupted);
    CHECK(collect_trajectories(b.tree, 20).empty());
  }
  SUBCASE("two terminal and one pruned") {
    TreeBuilder b;
    b.terminate(b.click(b.root, "a", 1));
    b.terminate(b.click(b.root, "b", 2));
    b.click(b.root, "c", 3, NodeStatus::kPruned, ResultType::kNoChange);
    CHECK(collect_trajectories(b.tree, 20).size() == 2);
  }
  SUBCASE("explored leaves count only at the depth limit") {
    TreeBuilder b;
    const NodeId a = b.click(b.root, "a", 1);
    b.click(a, "b", 2);
    b.click(b.root, "c", 3);
    CHECK(collect_trajectories(b.tree, 2).size() == 1);
  }
}

TEST_CASE("extract_subtrajectories") {
  using R = ResultType;
  SUBCASE("S S U S") {
    const auto subs = extract_subtrajectories(linear({R::kSuccess, R::kSuccess, R::kUnexpectedChange, R::kSuccess}), 2);
    REQUIRE(subs.size() == 1);
    CHECK(subs[0].steps.size() == 2);
    CHECK(subs[0].steps[0].tuple.step_goal == "goal number 0");
    CHECK(subs[0].steps[1].tuple.step_goal == "goal number 1");
    CHECK(subs[0].instruction == "goal number 0 and goal number 1");
  }
  SUBCASE("all success") {
    const auto t = linear({R::kSuccess, R::kSuccess, R::kSuccess});
    const auto subs = extract_subtrajectories(t, 2);
    REQUIRE(subs.size() == 1);
    CHECK(subs[0].node_ids == t.node_ids);
  }
  SUBCASE("all no change") { CHECK(extract_subtrajectories(linear({R::kNoChange, R::kNoChange}), 1).empty()); }
  SUBCASE("summary intent is used for a matching span") {
    const TaskSummary summary{"G", {{0, 1, "Open the pair"}}};
    const auto subs = extract_subtrajectories(linear({R::kSuccess, R::kSuccess}), 2, &summary);
    REQUIRE(subs.size() == 1);
    CHECK(subs[0].instruction == "Open the pair");
  }
  SUBCASE("every step of every run succeeded") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<R> rs;
      for (std::size_t k = 0, n = 1 + rng() % 15; k < n; ++k) rs.push_back(rng() % 3 ? R::kSuccess : R::kNoChange);
      const std::size_t min_len = 1 + rng() % 3;
      for (const auto& sub : extract_subtrajectories(linear(rs), min_len)) {
        CHECK(sub.steps.size() >= min_len);
        for (auto r : results_of(sub)) CHECK(r == R::kSuccess);
      }
    }
  }
  SUBCASE("min_len zero") { CHECK_THROWS_AS(extract_subtrajectories(linear({R::kSuccess}), 0), ContractError); }
}

TEST_CASE("quality_filter") {
  const FilterPolicy d;
  CHECK(passes({3, 3, 3, 3}, d));
  CHECK_FALSE(passes({1, 3, 3, 3}, d));
  CHECK(passes({2, 2, 2, 3}, d));
  CHECK_FALSE(passes({2, 2, 2, 2}, d));
  const std::vector<QualityScore> scores{{3, 3, 3, 3}, {1, 3, 3, 3}, {2, 2, 2, 3}};
  CHECK(quality_filter(scores, d) == std::vector<std::size_t>{0, 2});
  CHECK(filter_policy_violation(FilterPolicy{-1, 9}));
  CHECK(filter_policy_violation(FilterPolicy{2, -1}));
  CHECK_FALSE(filter_policy_violation(FilterPolicy{4, 9}));
  CHECK(quality_filter(scores, {4, 0}).empty());
  CHECK(quality_filter(scores, {0, 13}).empty());
}

TEST_CASE("quality_filter is monotone in both thresholds") {
  std::mt19937_64 rng(12);
  std::vector<QualityScore> scores;
  for (int i = 0; i < 400; ++i) {
    scores.push_back({static_cast<int>(rng() % 4), static_cast<int>(rng() % 4), static_cast<int>(rng() % 4),
                      static_cast<int>(rng() % 4)});
  }
  for (int dim = 0; dim <= 3; ++dim) {
    for (int total = 0; total <= 12; ++total) {
      const auto base = quality_filter(scores, {dim, total});
      const std::set<std::size_t> kept(base.begin(), base.end());
      for (const FilterPolicy stricter : {FilterPolicy{std::min(dim + 1, 3), total}, FilterPolicy{dim, std::min(total + 1, 12)}}) {
        for (std::size_t i : quality_filter(scores, stricter)) CHECK(kept.contains(i));
      }
    }
  }
}

TEST_CASE("enrich") {
  ScriptedReasoner reasoner;
  using R = ResultType;
  SUBCASE("one step") {
    const auto chains = enrich(linear({R::kSuccess}), "Do it", reasoner);
    REQUIRE(chains.size() == 1);
    CHECK(chains[0].progress.find("first step") != std::string::npos);
    CHECK(chains[0].plan.find("completes the task") != std::string::npos);
  }
  SUBCASE("plan references a later goal") {
    const auto t = linear(std::vector<R>(10, R::kSuccess));
    const auto chains = enrich(t, "Do everything", reasoner);
    REQUIRE(chains.size() == 10);
    for (std::size_t i = 0; i + 1 < 10; ++i) {
      bool found = false;
      for (std::size_t k = i + 1; k < 10; ++k) found |= chains[i].plan.find(t.steps[k].tuple.step_goal) != std::string::npos;
      CHECK(found);
    }
    CHECK(chains[0].progress.find("first step") != std::string::npos);
    CHECK(chains[3].progress.find("first step") == std::string::npos);
  }
  SUBCASE("failed steps are not planned") {
    const auto t = linear({R::kSuccess, R::kNoChange});
    CHECK(enrich(t, "x", reasoner)[0].plan.find("goal number 1") == std::string::npos);
  }
}

TEST_CASE("export_dataset") {
  const AgentSuite agents = scripted_suite(testing::load_fixture_spec("launcher.json"));
  ExportOptions options;

  SUBCASE("long trajectories of three and five steps") {
    TreeBuilder b;
    NodeId a = b.click(b.root, "open mail", 1);
    a = b.click(a, "compose draft", 2);
    b.terminate(a);
    NodeId c = b.click(b.root, "play music", 3);
    for (int i = 0; i < 3; ++i) c = b.click(c, "raise volume " + std::to_string(i), 4 + i);
    b.terminate(c);
    const auto out = export_dataset(std::span(&b.tree, 1), agents, options);
    CHECK(out.long_traj_original.size() == 2);
    CHECK(out.stats[2].original == 2);
    CHECK(out.stats[2].avg_steps_original == 4.0);
    CHECK(out.stats[0].original == 6);
    CHECK(out.stats[0].avg_steps == 1.0);
    for (const auto& r : out.long_traj) CHECK(r.instruction != "");
    for (const auto& r : out.step) CHECK(r.steps.size() == 1);
    for (const auto& r : out.sub_traj) {
      for (const auto& s : r.steps) CHECK(s.verification.result_type == ResultType::kSuccess);
    }
  }
  SUBCASE("all edges corrupted") {
    TreeBuilder b;
    for (int i = 0; i < 3; ++i) b.click(b.root, "g", i, NodeStatus::kUnexplored);
    for (auto& [id, n] : b.tree.nodes) {
      if (n.parent) n.status = NodeStatus::kCorrupted;
    }
    const auto out = export_dataset(std::span(&b.tree, 1), agents, options);
    CHECK(out.step.empty());
    CHECK(out.sub_traj.empty());
    CHECK(out.long_traj.empty());
    for (const auto& s : out.stats) {
      CHECK(s.original == 0);
      CHECK(s.filtered == 0);
      CHECK(s.avg_steps == 0.0);
      CHECK(s.avg_steps_original == 0.0);
    }
  }
  SUBCASE("filtered tiers are subsets of the originals") {
    auto spec = testing::load_fixture_spec("launcher.json");
    auto cfg = testing::single_tree_config(*spec, BranchingPolicy{8, 2, 5, {3, 2, 1}}, 3);
    const auto forest = testing::run_spec(spec, cfg, {Persona::kDiverse, 150}).forest;
    options.max_depth = 8;
    const auto out = export_dataset(forest, agents, options);
    auto key = [](const DatasetRecord& r) { return to_json(r).dump(); };
    for (const auto& [kept, original] : {std::pair{&out.step, &out.step_original},
                                         std::pair{&out.sub_traj, &out.sub_traj_original},
                                         std::pair{&out.long_traj, &out.long_traj_original}}) {
      std::set<std::string> all;
      for (const auto& r : *original) all.insert(key(r));
      for (const auto& r : *kept) CHECK(all.contains(key(r)));
      CHECK(kept->size() <= original->size());
    }
    CHECK(out.stats[0].avg_steps == 1.0);
    CHECK(out.stats[0].original > 0);
    for (const auto& r : out.long_traj) {
      CHECK(r.instruction == ScriptedSummarizer().summarize(trajectory_to(forest[0], r.nodes.back())).global_instruction);
    }
    ExportOptions strict = options;
    strict.filter = {3, 12};
    CHECK(export_dataset(forest, agents, strict).long_traj.size() <= out.long_traj.size());
    strict.filter = {0, 0};
    CHECK(export_dataset(forest, agents, strict).long_traj.size() == out.long_traj_original.size() - out.warnings.size());
  }
}

TEST_CASE("dataset record round trip and stats table") {
  DatasetRecord r;
  r.tier = Tier::kSubTraj;
  r.instruction = "Open mail";
  r.tree_id = "t";
  r.nodes = {3, 4};
  r.steps.push_back({{"o", "p", "q", "i"}, "Open", Action::click(1, 2), {ResultType::kSuccess, "ok"}, 0xfeed});
  const DatasetRecord back = dataset_record_from_json(Json::parse(to_json(r).dump()));
  CHECK(to_json(back) == to_json(r));
  CHECK(back.steps[0].observation_digest == 0xfeed);

  const std::vector<TierStats> stats{{Tier::kStep, 10, 8, 1.0, 1.0}, {Tier::kLongTraj, 4, 2, 5.5, 4.25}};
  const std::string table = render_stats_table(stats);
  CHECK(table.find("STEP") != std::string::npos);
  CHECK(table.find("LONG_TRAJ") != std::string::npos);
  CHECK(table.find("4.25") != std::string::npos);
  CHECK(tier_from_string("SUB_TRAJ") == Tier::kSubTraj);
}
