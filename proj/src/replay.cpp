#include <cmath>
#include <limits>

#include "cuatree/engine.hpp"
#include "cuatree/error.hpp"

namespace cuatree {

std::optional<std::string> policy_violation(const BranchingPolicy& p) {
  if (p.max_depth < 1) return "max_depth must be at least 1";
  const bool uniform = p.widths[0] == p.widths[1] && p.widths[1] == p.widths[2];
  // With one width everywhere the bounds are irrelevant, which lets a linear chain be shorter than three.
  const bool ordered = 0 < p.bound1 && p.bound1 < p.bound2 && p.bound2 < p.max_depth;
  if (!ordered && !(uniform && 0 <= p.bound1 && p.bound1 <= p.bound2 && p.bound2 <= p.max_depth)) {
    return "phase bounds must satisfy 0 < bound1 < bound2 < max_depth";
  }
  for (int w : p.widths) {
    if (w < 1) return "phase widths must be positive";
  }
  if (p.widths[0] < p.widths[1] || p.widths[1] < p.widths[2]) return "phase widths must be non-increasing";
  return std::nullopt;
}

int phase_of(const BranchingPolicy& policy, int depth) {
  if (depth < 0 || depth >= policy.max_depth) {
    throw ContractError("depth " + std::to_string(depth) + " outside [0, " + std::to_string(policy.max_depth) + ")");
  }
  if (depth < policy.bound1) return 0;
  return depth < policy.bound2 ? 1 : 2;
}

int k_max(const BranchingPolicy& policy, int depth) {
  return policy.widths[static_cast<std::size_t>(phase_of(policy, depth))];
}

BranchingPolicy linear_policy(int max_depth) {
  BranchingPolicy p;
  p.max_depth = max_depth;
  p.bound1 = max_depth >= 3 ? 1 : 0;
  p.bound2 = max_depth >= 3 ? 2 : 0;
  p.widths = {1, 1, 1};
  return p;
}

double rms_diff(const Observation& a, const Observation& b) {
  if (!a.same_shape(b)) throw ContractError("rms_diff needs frames of equal shape");
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  if (pa.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(pa.size()));
}

bool consistent(double delta, const ReplayPolicy& policy) { return delta == 0.0 || delta < policy.epsilon; }

namespace {

double checkpoint_delta(const TreeNode& recorded, const Observation& replayed, const BlobStore* blobs) {
  if (!recorded.observation_digest) return 0.0;
  const Digest d = *recorded.observation_digest;
  if (auto frame = blobs ? blobs->get(d) : nullptr) {
    return frame->same_shape(replayed) ? rms_diff(*frame, replayed) : std::numeric_limits<double>::infinity();
  }
  return d == replayed.digest() ? 0.0 : std::numeric_limits<double>::infinity();
}

}  // namespace

RestoreResult replay_node(const ExplorationTree& tree, NodeId node, Environment& env, const EnvironmentConfig& config,
                          const ReplayPolicy& policy, const BlobStore* blobs) {
  const TreeNode& n = tree.node(node);
  NodeId target = node;
  switch (n.status) {
    case NodeStatus::kUnexplored:
      target = *n.parent;
      break;
    case NodeStatus::kRoot:
    case NodeStatus::kExplored:
      break;
    default:
      throw ContractError("node " + std::to_string(node) + " with status " + std::string(to_string(n.status)) +
                          " cannot be restored");
  }
  const TreeNode& t = tree.node(target);
  if (target != tree.root_id() && !t.observation_digest) {
    throw ContractError("node " + std::to_string(target) + " has no recorded frame");
  }
  const std::optional<NodeId> check_parent = t.parent;
  const auto path = path_nodes(tree, target);

  RestoreResult result;
  std::string last_error;
  for (int attempt = 0; attempt < policy.max_restore_attempts; ++attempt) {
    result.checkpoints.clear();
    try {
      Observation frame = env.reset(config);
      ++result.env_steps;
      auto check = [&](const TreeNode& recorded) {
        const double delta = checkpoint_delta(recorded, frame, blobs);
        result.checkpoints.push_back({recorded.id, recorded.depth, delta});
        if (consistent(delta, policy)) return true;
        result.corruption = CorruptionReport{tree.tree_id, node, recorded.depth, delta,
                                             "replayed frame differs from the recorded one (delta " +
                                                 std::to_string(delta) + ")"};
        return false;
      };
      const TreeNode& root = tree.node(tree.root_id());
      if ((check_parent == root.id || target == root.id) && !check(root)) return result;
      for (NodeId id : path) {
        const TreeNode& p = tree.node(id);
        if (p.incoming->action.kind == ActionKind::kTerminate) continue;
        frame = env.step(p.incoming->action);
        ++result.env_steps;
        if ((id == target || (check_parent && id == *check_parent)) && !check(p)) return result;
      }
      result.observation = std::move(frame);
      return result;
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  result.corruption = CorruptionReport{tree.tree_id, node, -1, std::numeric_limits<double>::infinity(),
                                       "environment unavailable during replay: " + last_error};
  return result;
}

RestoreResult restore_node(ExplorationTree& tree, NodeId node, Environment& env, const EnvironmentConfig& config,
                           const ReplayPolicy& policy, const BlobStore* blobs) {
  auto result = replay_node(tree, node, env, config, policy, blobs);
  if (!result.ok()) tree.node(node).status = NodeStatus::kCorrupted;
  return result;
}

}  // namespace cuatree
