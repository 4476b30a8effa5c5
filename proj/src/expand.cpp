#include <set>

#include "cuatree/engine.hpp"
#include "cuatree/error.hpp"
#include "cuatree/hashing.hpp"

namespace cuatree {

namespace {

std::vector<HistoryEntry> history_entries(const ExplorationTree& tree, NodeId node) {
  std::vector<HistoryEntry> out;
  for (NodeId id : path_nodes(tree, node)) {
    const TreeNode& n = tree.node(id);
    out.push_back({n.incoming->step_goal, n.incoming->action.kind,
                   n.verification ? n.verification->result_type : ResultType::kSuccess});
  }
  return out;
}

NodeStatus status_after(const ExplorationTree& tree, NodeId parent, const VerificationResult& v,
                        const StopConditions& stop) {
  const int failures = v.result_type == ResultType::kSuccess ? 0 : trailing_failures(tree, parent) + 1;
  return failures >= stop.max_consecutive_failures ? NodeStatus::kPruned : NodeStatus::kExplored;
}

ChildRecord execute(const ExplorationTree& tree, NodeId parent, const ExplorationTuple& tuple,
                    const Observation& parent_frame, Environment& env, const AgentSuite& agents,
                    const StopConditions& stop, std::optional<Observation>* frame, std::uint64_t* env_steps) {
  ChildRecord rec;
  rec.tuple = tuple;
  if (tuple.action.kind == ActionKind::kTerminate) {
    rec.status = NodeStatus::kTerminal;
    rec.verification = VerificationResult{ResultType::kSuccess, kTerminateFeedback};
    rec.digest = parent_frame.digest();
    if (frame) *frame = parent_frame;
    return rec;
  }
  Observation next = env.step(tuple.action);
  if (env_steps) ++*env_steps;
  rec.verification = agents.verifier->verify(parent_frame, tuple, next);
  rec.digest = next.digest();
  rec.status = status_after(tree, parent, *rec.verification, stop);
  if (frame) *frame = std::move(next);
  return rec;
}

}  // namespace

std::vector<std::string> goal_history(const ExplorationTree& tree, NodeId node) {
  std::vector<std::string> goals;
  for (NodeId id : path_nodes(tree, node)) goals.push_back(tree.node(id).incoming->step_goal);
  return goals;
}

int trailing_failures(const ExplorationTree& tree, NodeId node) {
  int count = 0;
  for (const TreeNode* n = &tree.node(node); n->parent; n = &tree.node(*n->parent)) {
    if (!n->verification || n->verification->result_type == ResultType::kSuccess) break;
    ++count;
  }
  return count;
}

std::size_t retained_index(std::uint64_t tree_seed, Digest current, int depth, const std::vector<std::string>& goals,
                           std::size_t candidates) {
  if (candidates == 0) throw ContractError("retained_index needs at least one candidate");
  std::uint64_t goal_hash = kFnvOffset;
  for (const auto& g : goals) goal_hash = fnv1a(g + '\n', goal_hash);
  const std::uint64_t draw =
      hash_combine(hash_combine(hash_combine(tree_seed, current), static_cast<std::uint64_t>(depth)), goal_hash);
  return draw % candidates;
}

ExpansionPlan plan_expansion(const ExplorationTree& tree, NodeId node, const Observation& current, Environment& env,
                             const AgentSuite& agents, const PrefixMemory* memory, const ExpandOptions& options) {
  const TreeNode& n = tree.node(node);
  if (n.status != NodeStatus::kRoot && n.status != NodeStatus::kExplored && n.status != NodeStatus::kUnexplored) {
    throw ContractError("node " + std::to_string(node) + " is " + std::string(to_string(n.status)) +
                        " and cannot be expanded");
  }
  const int k = k_max(options.policy, n.depth);
  const auto goals = goal_history(tree, node);

  ExplorationContext ctx;
  ctx.observation = current;
  ctx.history = history_entries(tree, node);
  ctx.world_knowledge = options.world_knowledge;
  if (memory) ctx.prefix_memory_view = memory->view(tree.category_id, goals);
  ctx.k_max = k;
  ctx.seed = tree.seed;
  ctx.category = tree.category_id;

  ExpansionPlan plan;
  std::vector<ExplorationTuple> kept;
  std::set<std::string> seen_actions;
  for (auto& t : agents.explorer->propose(ctx)) {
    if (static_cast<int>(kept.size()) == k) break;
    if (tuple_violation(t)) continue;
    if (t.action.kind == ActionKind::kTerminate && goals.empty()) continue;
    if (!seen_actions.insert(to_json(t.action).dump()).second) continue;
    if (memory && t.action.kind != ActionKind::kTerminate &&
        !novelty_check(*memory, tree.category_id, goals, t.step_goal)) {
      ++plan.dropped_by_novelty;
      continue;
    }
    kept.push_back(std::move(t));
  }
  if (kept.empty()) return plan;

  const std::size_t retained = retained_index(tree.seed, current.digest(), n.depth, goals, kept.size());

  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (i == retained) {
      plan.children.push_back(execute(tree, node, kept[i], current, env, agents, options.stop,
                                      &plan.retained_observation, &plan.env_steps));
    } else {
      plan.children.push_back({kept[i], NodeStatus::kUnexplored, std::nullopt, std::nullopt});
    }
  }
  plan.retained = retained;
  if (memory && kept[retained].action.kind != ActionKind::kTerminate &&
      goals.size() < static_cast<std::size_t>(memory->prefix_length())) {
    auto seq = goals;
    seq.push_back(kept[retained].step_goal);
    plan.admissions.push_back(std::move(seq));
  }
  return plan;
}

ChildRecord execute_edge(const ExplorationTree& tree, NodeId node, const Observation& parent_frame, Environment& env,
                         const AgentSuite& agents, const StopConditions& stop, std::optional<Observation>* frame) {
  const TreeNode& n = tree.node(node);
  if (n.status != NodeStatus::kUnexplored || !n.parent || !n.incoming) {
    throw ContractError("node " + std::to_string(node) + " has no pending edge to execute");
  }
  return execute(tree, *n.parent, *n.incoming, parent_frame, env, agents, stop, frame, nullptr);
}

std::vector<NodeId> apply_expansion(ExplorationTree& tree, NodeId node, const ExpansionPlan& plan) {
  std::vector<NodeId> ids;
  if (plan.children.empty()) {
    if (tree.node(node).status != NodeStatus::kRoot) tree.node(node).status = NodeStatus::kPruned;
    return ids;
  }
  for (const auto& c : plan.children) {
    ids.push_back(tree.add_child(node, c.tuple, c.status, c.verification, c.digest));
  }
  return ids;
}

std::vector<NodeId> expand(ExplorationTree& tree, NodeId node, const Observation& current, Environment& env,
                           const AgentSuite& agents, PrefixMemory* memory, const ExpandOptions& options,
                           BlobStore* blobs) {
  auto plan = plan_expansion(tree, node, current, env, agents, memory, options);
  if (memory) {
    for (const auto& seq : plan.admissions) memory->admit(tree.category_id, seq);
  }
  if (blobs && plan.retained_observation) blobs->put(*plan.retained_observation);
  return apply_expansion(tree, node, plan);
}

}  // namespace cuatree
