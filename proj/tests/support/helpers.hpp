#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cuatree/engine.hpp"
#include "cuatree/environment.hpp"
#include "cuatree/hashing.hpp"
#include "cuatree/model.hpp"
#include "cuatree/scripted_agents.hpp"

namespace testing {

using namespace cuatree;

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(CUATREE_FIXTURES) / name; }

inline std::shared_ptr<const SimAppSpec> load_fixture_spec(const std::string& name) {
  return std::make_shared<const SimAppSpec>(load_sim_spec(fixture(name)));
}

inline std::shared_ptr<const SimAppSpec> spec_from(const Json& j) {
  auto spec = std::make_shared<const SimAppSpec>(sim_spec_from_json(j));
  if (auto problems = validate(*spec); !problems.empty()) throw ConfigError(problems.front());
  return spec;
}

// Screens s0..s{n} where each s{i} has a single "next" button to s{i+1}; the last screen completes.
inline Json chain_spec_json(int n) {
  Json screens = Json::array();
  for (int i = 0; i <= n; ++i) {
    Json s{{"id", "s" + std::to_string(i)}};
    if (i < n) {
      s["widgets"] = Json::array({{{"id", "next" + std::to_string(i)},
                                   {"box", {8, 8, 40, 24}},
                                   {"label", "Next " + std::to_string(i)},
                                   {"goal", "Advance to step " + std::to_string(i + 1)},
                                   {"goto", "s" + std::to_string(i + 1)}}});
    } else {
      s["completion"] = true;
    }
    screens.push_back(std::move(s));
  }
  return {{"name", "chain"},
          {"render", {{"width", 48}, {"height", 32}, {"channels", 1}}},
          {"initial_screen", "s0"},
          {"categories", Json::array({{{"id", "chain"}, {"knowledge", "A linear wizard."}}})},
          {"screens", std::move(screens)}};
}

// One screen with `n` disjoint buttons, each leading to its own page whose only widget is dead space.
inline Json fan_spec_json(int n, bool dead_pages = true) {
  Json home{{"id", "home"}, {"widgets", Json::array()}};
  Json screens = Json::array();
  for (int i = 0; i < n; ++i) {
    home["widgets"].push_back({{"id", "b" + std::to_string(i)},
                               {"box", {4 + 12 * i, 4, 14 + 12 * i, 14}},
                               {"label", "Page " + std::to_string(i)},
                               {"goal", "Open page " + std::to_string(i)},
                               {"goto", "p" + std::to_string(i)}});
    Json page{{"id", "p" + std::to_string(i)}, {"widgets", Json::array()}};
    // Clicking the label changes nothing: a region without transitions.
    page["widgets"].push_back({{"id", "label" + std::to_string(i)},
                               {"box", {4, 20, 30, 30}},
                               {"label", "Caption " + std::to_string(i)},
                               {"goal", "Inspect caption " + std::to_string(i)}});
    if (!dead_pages) page["completion"] = true;
    screens.push_back(std::move(page));
  }
  screens.insert(screens.begin(), home);
  return {{"name", "fan"},
          {"render", {{"width", 64}, {"height", 32}, {"channels", 1}}},
          {"initial_screen", "home"},
          {"categories", Json::array({{{"id", "fan"}, {"knowledge", "Pages behind buttons."}}})},
          {"screens", std::move(screens)}};
}

inline ExplorationTuple tuple(const std::string& goal, Action action) {
  ExplorationTuple t;
  t.action = std::move(action);
  t.step_goal = goal;
  t.final_goal_hypothesis = "hypothesis";
  if (t.action.kind != ActionKind::kTerminate) t.expected_observation.text = "something happens";
  t.rationale = "because";
  return t;
}

// Hand-built trees with synthetic digests.
struct TreeBuilder {
  ExplorationTree tree;
  NodeId root = 0;

  explicit TreeBuilder(std::string id = "t", std::string category = "c", std::uint64_t seed = 1) {
    tree.tree_id = std::move(id);
    tree.category_id = std::move(category);
    tree.seed = seed;
    root = tree.add_root(Digest{0x1000});
  }

  NodeId add(NodeId parent, const std::string& goal, Action action, NodeStatus status = NodeStatus::kExplored,
             ResultType result = ResultType::kSuccess) {
    const NodeId id = tree.next_id();
    std::optional<VerificationResult> v;
    std::optional<Digest> d;
    if (status != NodeStatus::kUnexplored) {
      v = VerificationResult{result, "feedback"};
      d = hash_combine(0x2000, id);
    }
    return tree.add_child(parent, tuple(goal, std::move(action)), status, v, d);
  }

  NodeId click(NodeId parent, const std::string& goal, int x, NodeStatus status = NodeStatus::kExplored,
               ResultType result = ResultType::kSuccess) {
    return add(parent, goal, Action::click(x, 5), status, result);
  }

  NodeId terminate(NodeId parent) {
    const Digest d = *tree.node(parent).observation_digest;
    return tree.add_child(parent, tuple("Finish the task", Action::terminate()), NodeStatus::kTerminal,
                          VerificationResult{ResultType::kSuccess, kTerminateFeedback}, d);
  }
};

inline EngineConfig single_tree_config(const SimAppSpec& spec, BranchingPolicy policy, std::uint64_t seed = 1,
                                       int failures = 3) {
  EngineConfig c;
  c.policy = policy;
  c.stop = {policy.max_depth, failures};
  c.novelty = false;
  TreeJob job;
  job.tree_id = "tree";
  job.env.category = spec.categories.front().id;
  job.env.seed = seed;
  job.env.render = spec.render;
  c.trees.push_back(job);
  return c;
}

inline RunResult run_spec(std::shared_ptr<const SimAppSpec> spec, const EngineConfig& config,
                          ScriptedExplorerOptions options = {}, PrefixMemory* memory = nullptr) {
  PrefixMemory local;
  return run_exploration(config, [spec] { return std::make_unique<SimEnvironment>(spec); },
                         scripted_suite(spec, options), memory ? *memory : local);
}

}  // namespace testing
