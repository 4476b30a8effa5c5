#include "cuatree/dpo.hpp"

#include <algorithm>
#include <random>

#include "cuatree/analytics.hpp"
#include "cuatree/error.hpp"
#include "cuatree/hashing.hpp"

namespace cuatree {

Json to_json(const PreferencePair& p) {
  Json history = Json::array();
  for (const auto& h : p.history) history.push_back(to_json(h));
  return {{"goal", p.goal},
          {"history", std::move(history)},
          {"digest", to_hex(p.digest)},
          {"win", to_json(p.win)},
          {"lose", to_json(p.lose)},
          {"depth", p.depth},
          {"node", {{"tree_id", p.tree_id}, {"id", p.node}}}};
}

PreferencePair preference_pair_from_json(const Json& j) {
  PreferencePair p;
  p.goal = json_required<std::string>(j, "goal");
  for (const auto& h : j.at("history")) p.history.push_back(history_entry_from_json(h));
  p.digest = from_hex(json_required<std::string>(j, "digest"));
  p.win = action_from_json(j.at("win"));
  p.lose = action_from_json(j.at("lose"));
  p.depth = json_required<int>(j, "depth");
  p.tree_id = json_required<std::string>(j.at("node"), "tree_id");
  p.node = json_required<NodeId>(j.at("node"), "id");
  return p;
}

std::vector<BranchNode> find_branch_nodes(const ExplorationTree& tree, const KeptInstructions& kept) {
  const auto children = child_index(tree);
  // Lowest kept leaf id in each subtree, filled bottom-up (children always have larger depth).
  std::map<NodeId, NodeId> best_leaf;
  std::vector<NodeId> order;
  for (const auto& [id, n] : tree.nodes) order.push_back(id);
  std::sort(order.begin(), order.end(),
            [&](NodeId a, NodeId b) { return tree.node(a).depth > tree.node(b).depth; });
  for (NodeId id : order) {
    std::optional<NodeId> best;
    if (kept.contains(id)) best = id;
    if (auto it = children.find(id); it != children.end()) {
      for (NodeId c : it->second) {
        if (auto b = best_leaf.find(c); b != best_leaf.end() && (!best || b->second < *best)) best = b->second;
      }
    }
    if (best) best_leaf[id] = *best;
  }

  std::vector<BranchNode> out;
  for (const auto& [id, kids] : children) {
    BranchNode entry;
    for (NodeId c : kids) {
      const TreeNode& cn = tree.node(c);
      if (!cn.verification || cn.verification->result_type != ResultType::kSuccess) continue;
      auto b = best_leaf.find(c);
      if (b == best_leaf.end()) continue;
      entry.branches.push_back({c, cn.incoming->action, kept.at(b->second), ResultType::kSuccess});
    }
    if (entry.branches.size() < 2) continue;
    const TreeNode& n = tree.node(id);
    entry.tree_id = tree.tree_id;
    entry.node = id;
    entry.depth = n.depth;
    entry.digest = n.observation_digest.value_or(0);
    for (NodeId p : path_nodes(tree, id)) {
      const TreeNode& pn = tree.node(p);
      entry.history.push_back({pn.incoming->step_goal, pn.incoming->action.kind,
                               pn.verification ? pn.verification->result_type : ResultType::kSuccess});
    }
    out.push_back(std::move(entry));
  }
  return out;
}

std::vector<PreferencePair> build_pairs(const BranchNode& entry, const PairOptions& options) {
  std::vector<std::string> goals;
  for (const auto& b : entry.branches) goals.push_back(b.goal);
  const auto model = analytics::TfIdfModel::fit(goals);
  auto distinct = [&](std::size_t a, std::size_t b) {
    const auto& va = model.vector(a);
    const auto& vb = model.vector(b);
    if (!va || !vb) return goals[a] != goals[b];
    return !analytics::reaches(analytics::TfIdfModel::cosine(*va, *vb), options.distinct_threshold);
  };
  auto same_action = [&](const Action& a, const Action& b) {
    if (a == b) return true;
    if (!options.screen) return false;
    const auto [w, h] = *options.screen;
    return analytics::quantize(a, w, h) == analytics::quantize(b, w, h);
  };

  std::vector<PreferencePair> out;
  const auto& br = entry.branches;
  for (std::size_t a = 0; a < br.size(); ++a) {
    for (std::size_t b = a + 1; b < br.size(); ++b) {
      if (br[a].goal.empty() || br[b].goal.empty() || !distinct(a, b)) continue;
      if (same_action(br[a].action, br[b].action)) continue;
      auto emit = [&](const Branch& win, const Branch& lose) {
        if (win.result_type != ResultType::kSuccess) return;
        out.push_back({win.goal, entry.history, entry.digest, win.action, lose.action, entry.depth, entry.tree_id,
                       entry.node});
      };
      emit(br[a], br[b]);
      emit(br[b], br[a]);
    }
  }
  return out;
}

std::vector<int> phase_buckets(const BranchingPolicy& policy) {
  return {policy.bound1, policy.bound2, policy.max_depth + 1};
}

int bucket_of(const std::vector<int>& bounds, int depth) {
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (depth < bounds[i]) return static_cast<int>(i);
  }
  return static_cast<int>(bounds.size());
}

std::vector<PreferencePair> sample_pairs(std::span<const PreferencePair> pairs, int cap_per_node, int total_target,
                                         std::uint64_t seed, const std::vector<int>& bucket_bounds) {
  if (total_target <= 0) throw ContractError("total_target must be positive");
  if (cap_per_node < 1) throw ContractError("cap_per_node must be at least 1");

  auto shuffle = [](std::vector<std::size_t>& v, std::uint64_t s) {
    std::mt19937_64 rng(s);
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
  };

  std::map<std::pair<std::string, NodeId>, std::vector<std::size_t>> by_node;
  for (std::size_t i = 0; i < pairs.size(); ++i) by_node[{pairs[i].tree_id, pairs[i].node}].push_back(i);

  std::map<int, std::vector<std::size_t>> buckets;
  for (auto& [key, idx] : by_node) {
    shuffle(idx, hash_combine(hash_combine(seed, hash_string(key.first)), key.second));
    if (idx.size() > static_cast<std::size_t>(cap_per_node)) idx.resize(static_cast<std::size_t>(cap_per_node));
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) buckets[bucket_of(bucket_bounds, pairs[i].depth)].push_back(i);
  }
  for (auto& [b, idx] : buckets) shuffle(idx, hash_combine(seed, 0x6275636b00ULL + static_cast<std::uint64_t>(b)));

  std::vector<PreferencePair> out;
  std::map<int, std::size_t> cursor;
  const auto target = static_cast<std::size_t>(total_target);
  for (bool progress = true; progress && out.size() < target;) {
    progress = false;
    for (auto& [b, idx] : buckets) {
      if (out.size() == target) break;
      auto& c = cursor[b];
      if (c < idx.size()) {
        out.push_back(pairs[idx[c++]]);
        progress = true;
      }
    }
  }
  return out;
}

}  // namespace cuatree
