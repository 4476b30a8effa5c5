#include <set>

#include "cuatree/engine.hpp"
#include "cuatree/error.hpp"

namespace cuatree {

std::vector<NodeId> trajectory_leaves(const ExplorationTree& tree, int max_depth) {
  std::vector<NodeId> out;
  for (NodeId id : leaves(tree)) {
    const TreeNode& n = tree.node(id);
    if (n.status == NodeStatus::kTerminal || (n.status == NodeStatus::kExplored && n.depth == max_depth)) {
      out.push_back(id);
    }
  }
  return out;
}

ExplorationStats exploration_stats(std::span<const ExplorationTree> forest, int max_depth,
                                   const RunCounters* counters) {
  ExplorationStats stats;
  std::size_t total_length = 0;
  for (const auto& tree : forest) {
    std::set<NodeId> used;
    for (NodeId leaf : trajectory_leaves(tree, max_depth)) {
      const auto path = path_nodes(tree, leaf);
      used.insert(path.begin(), path.end());
      total_length += path.size();
      ++stats.trajectories;
    }
    stats.unique_expansions += used.size();
  }
  if (counters) stats.env_steps_including_replay = counters->env_steps;
  if (stats.trajectories == 0) throw UndefinedAverageError("forest has no complete trajectory");
  stats.avg_expansions_per_trajectory =
      static_cast<double>(stats.unique_expansions) / static_cast<double>(stats.trajectories);
  stats.mean_trajectory_length = static_cast<double>(total_length) / static_cast<double>(stats.trajectories);
  return stats;
}

std::vector<double> reuse_curve(const ExplorationTree& tree, int max_depth) {
  std::vector<double> curve;
  std::set<NodeId> used;
  for (NodeId leaf : trajectory_leaves(tree, max_depth)) {
    for (NodeId id : path_nodes(tree, leaf)) used.insert(id);
    curve.push_back(static_cast<double>(used.size()) / static_cast<double>(curve.size() + 1));
  }
  return curve;
}

}  // namespace cuatree
