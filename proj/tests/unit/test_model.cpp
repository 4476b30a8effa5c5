#include <doctest.h>

#include <random>
#include <set>

#include "../support/helpers.hpp"
#include "cuatree/error.hpp"
#include "cuatree/serialize.hpp"

using namespace cuatree;
using testing::TreeBuilder;

TEST_CASE("action payload rules") {
  CHECK_FALSE(action_violation(Action::click(1, 2)));
  CHECK_FALSE(action_violation(Action::key("ctrl+h")));
  CHECK_FALSE(action_violation(Action::wait(2.0)));
  CHECK_FALSE(action_violation(Action::terminate()));

  Action no_coord;
  no_coord.kind = ActionKind::kClick;
  CHECK(action_violation(no_coord));
  Action no_text;
  no_text.kind = ActionKind::kTypeText;
  CHECK(action_violation(no_text));
  Action zero_wait = Action::wait(1.0);
  zero_wait.duration = 0.0;
  CHECK(action_violation(zero_wait));
  Action loaded_terminate = Action::terminate();
  loaded_terminate.text = "x";
  CHECK(action_violation(loaded_terminate));
  CHECK_THROWS_AS(check_action(no_coord), ContractError);
}

TEST_CASE("observation digest depends only on pixels and shape") {
  const Observation a(2, 2, 1, {1, 2, 3, 4});
  const Observation b(2, 2, 1, {1, 2, 3, 4}, ScreenState{"s", {}});
  const Observation c(2, 2, 1, {1, 2, 3, 5});
  const Observation d(4, 1, 1, {1, 2, 3, 4});
  CHECK(a.digest() == b.digest());
  CHECK(a.digest() != c.digest());
  CHECK(a.digest() != d.digest());
  CHECK_THROWS_AS(Observation(2, 2, 1, {1, 2, 3}), ContractError);
}

TEST_CASE("tuple invariants") {
  CHECK_FALSE(tuple_violation(testing::tuple("Open menu", Action::click(1, 1))));
  auto empty_goal = testing::tuple("", Action::click(1, 1));
  CHECK(tuple_violation(empty_goal));
  auto no_expectation = testing::tuple("Open", Action::click(1, 1));
  no_expectation.expected_observation.text.clear();
  CHECK(tuple_violation(no_expectation));
  CHECK_FALSE(tuple_violation(testing::tuple("Finish", Action::terminate())));
}

TEST_CASE("path_to") {
  TreeBuilder b;
  SUBCASE("root has empty history") { CHECK(path_to(b.tree, b.root).empty()); }
  SUBCASE("chain returns edges in order") {
    const NodeId n1 = b.click(b.root, "a", 1);
    const NodeId n2 = b.add(n1, "b", Action::key("ctrl+b"));
    CHECK(path_to(b.tree, n2) == std::vector<Action>{Action::click(1, 5), Action::key("ctrl+b")});
  }
  SUBCASE("depth 12 gives 12 actions") {
    NodeId cur = b.root;
    for (int i = 0; i < 12; ++i) cur = b.click(cur, "g" + std::to_string(i), i);
    CHECK(path_to(b.tree, cur).size() == 12);
  }
  SUBCASE("unknown node") { CHECK_THROWS_AS(path_to(b.tree, 99), NotFoundError); }
}

TEST_CASE("leaves") {
  TreeBuilder b;
  SUBCASE("single root") { CHECK(leaves(b.tree) == std::vector<NodeId>{b.root}); }
  SUBCASE("three unexpanded children") {
    std::vector<NodeId> kids;
    for (int i = 0; i < 3; ++i) kids.push_back(b.click(b.root, "k", i, NodeStatus::kUnexplored));
    CHECK(leaves(b.tree) == kids);
  }
  SUBCASE("five leaves from a children map") {
    const NodeId a = b.click(b.root, "a", 1);
    const NodeId c = b.click(b.root, "c", 2);
    const NodeId a1 = b.click(a, "a1", 3);
    const NodeId a2 = b.click(a, "a2", 4);
    const NodeId c1 = b.click(c, "c1", 5);
    const NodeId c2 = b.click(c, "c2", 6);
    const NodeId c3 = b.terminate(c);
    // Oracle: nodes that never appear as a parent.
    std::set<NodeId> parents;
    for (const auto& [id, n] : b.tree.nodes) {
      if (n.parent) parents.insert(*n.parent);
    }
    std::vector<NodeId> expected;
    for (const auto& [id, n] : b.tree.nodes) {
      if (!parents.contains(id)) expected.push_back(id);
    }
    CHECK(expected == std::vector<NodeId>{a1, a2, c1, c2, c3});
    CHECK(leaves(b.tree) == expected);
  }
}

TEST_CASE("validate") {
  TreeBuilder b;
  SUBCASE("fresh tree") { CHECK(validate(b.tree).empty()); }
  SUBCASE("depth mismatch") {
    const NodeId n = b.click(b.root, "a", 1);
    b.tree.node(n).depth = 3;
    const auto v = validate(b.tree);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("depth") != std::string::npos);
    CHECK(v[0].find("node 1") != std::string::npos);
  }
  SUBCASE("two roots") {
    b.tree.add_root(Digest{7});
    const auto v = validate(b.tree);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("multiple ROOT") != std::string::npos);
  }
  SUBCASE("explored node without digest") {
    const NodeId n = b.click(b.root, "a", 1);
    b.tree.node(n).observation_digest.reset();
    CHECK(validate(b.tree).size() == 1);
  }
  SUBCASE("cycle") {
    const NodeId n1 = b.click(b.root, "a", 1);
    const NodeId n2 = b.click(n1, "b", 2);
    b.tree.node(n1).parent = n2;
    CHECK_FALSE(validate(b.tree).empty());
  }
  SUBCASE("duplicate action history") {
    b.click(b.root, "a", 1);
    b.click(b.root, "a again", 1);
    CHECK_FALSE(validate(b.tree).empty());
  }
}

TEST_CASE("tree serialization round trip") {
  TreeBuilder b("tree-7", "media", 42);
  const NodeId a = b.click(b.root, "Open", 3);
  b.add(a, "Type", Action::type_text("hello"), NodeStatus::kExplored, ResultType::kUnexpectedChange);
  b.add(a, "Wait", Action::wait(1.5), NodeStatus::kPruned, ResultType::kNoChange);
  b.click(b.root, "Other", 9, NodeStatus::kUnexplored);
  b.terminate(a);
  auto t = b.tree.node(a).incoming;
  t->expected_observation.predicate = StatePredicate{"inbox", {{"theme", "dark"}}};
  b.tree.node(a).incoming = t;

  const Json j = to_json(b.tree);
  CHECK(j.contains("tree_id"));
  CHECK(j.contains("category_id"));
  CHECK(j["nodes"][0].contains("observation_digest"));
  const ExplorationTree back = tree_from_json(Json::parse(j.dump()));
  CHECK(back == b.tree);
}

TEST_CASE("trajectory JSON round trip") {
  TreeBuilder b;
  const NodeId a = b.click(b.root, "Open", 3);
  const NodeId t = b.terminate(a);
  Trajectory traj = trajectory_to(b.tree, t);
  traj.instruction = "Open and finish";
  CHECK(traj.initial_digest == 0x1000);
  CHECK(traj.digest_before(1) == *b.tree.node(a).observation_digest);
  const Trajectory back = trajectory_from_json(to_json(traj));
  CHECK(back.node_ids == traj.node_ids);
  CHECK(back.instruction == traj.instruction);
  CHECK(back.initial_digest == traj.initial_digest);
  REQUIRE(back.steps.size() == 2);
  CHECK(back.steps[0].tuple == traj.steps[0].tuple);
}

TEST_CASE("path_to is injective on a valid random tree") {
  std::mt19937_64 rng(5);
  TreeBuilder b;
  std::vector<NodeId> ids{b.root};
  for (int i = 0; i < 200; ++i) {
    const NodeId parent = ids[rng() % ids.size()];
    const int x = static_cast<int>(b.tree.next_id());
    ids.push_back(b.click(parent, "g", x));
  }
  REQUIRE(validate(b.tree).empty());
  std::set<std::vector<std::pair<int, int>>> seen;
  for (NodeId id : ids) {
    std::vector<std::pair<int, int>> key;
    for (const auto& a : path_to(b.tree, id)) key.emplace_back(a.coordinate->x, a.coordinate->y);
    CHECK(seen.insert(key).second);
  }
}
