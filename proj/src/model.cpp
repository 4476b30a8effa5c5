#include "cuatree/model.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "cuatree/error.hpp"
#include "cuatree/hashing.hpp"

namespace cuatree {

namespace {

constexpr std::array<std::pair<ActionKind, std::string_view>, 7> kActionNames{{
    {ActionKind::kClick, "left_click"},
    {ActionKind::kDoubleClick, "double_click"},
    {ActionKind::kKey, "key"},
    {ActionKind::kTypeText, "type"},
    {ActionKind::kScroll, "scroll"},
    {ActionKind::kWait, "wait"},
    {ActionKind::kTerminate, "terminate"},
}};

constexpr std::array<std::pair<ResultType, std::string_view>, 3> kResultNames{{
    {ResultType::kSuccess, "SUCCESS"},
    {ResultType::kNoChange, "NO_CHANGE"},
    {ResultType::kUnexpectedChange, "UNEXPECTED_CHANGE"},
}};

constexpr std::array<std::pair<NodeStatus, std::string_view>, 6> kStatusNames{{
    {NodeStatus::kRoot, "ROOT"},
    {NodeStatus::kUnexplored, "UNEXPLORED"},
    {NodeStatus::kExplored, "EXPLORED"},
    {NodeStatus::kTerminal, "TERMINAL"},
    {NodeStatus::kCorrupted, "CORRUPTED"},
    {NodeStatus::kPruned, "PRUNED"},
}};

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<Enum, std::string_view>, N>& table, Enum value) {
  for (const auto& [e, name] : table) {
    if (e == value) return name;
  }
  return "?";
}

template <typename Enum, std::size_t N>
Enum parse_name(const std::array<std::pair<Enum, std::string_view>, N>& table, std::string_view name,
                std::string_view what) {
  for (const auto& [e, n] : table) {
    if (n == name) return e;
  }
  throw ParseError("unknown " + std::string(what) + " '" + std::string(name) + "'");
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

std::string_view to_string(ActionKind kind) { return name_of(kActionNames, kind); }
ActionKind action_kind_from_string(std::string_view name) {
  if (name == "click") return ActionKind::kClick;
  if (name == "type_text") return ActionKind::kTypeText;
  return parse_name(kActionNames, name, "action kind");
}
std::string_view to_string(ResultType type) { return name_of(kResultNames, type); }
ResultType result_type_from_string(std::string_view name) {
  return parse_name(kResultNames, name, "result type");
}
std::string_view to_string(NodeStatus status) { return name_of(kStatusNames, status); }
NodeStatus node_status_from_string(std::string_view name) {
  return parse_name(kStatusNames, name, "node status");
}

Action Action::click(int x, int y) { return {ActionKind::kClick, Point{x, y}, {}, {}}; }
Action Action::double_click(int x, int y) { return {ActionKind::kDoubleClick, Point{x, y}, {}, {}}; }
Action Action::key(std::string chord) { return {ActionKind::kKey, {}, std::move(chord), {}}; }
Action Action::type_text(std::string text) { return {ActionKind::kTypeText, {}, std::move(text), {}}; }
Action Action::scroll(int x, int y) { return {ActionKind::kScroll, Point{x, y}, {}, {}}; }
Action Action::wait(double seconds) { return {ActionKind::kWait, {}, {}, seconds}; }
Action Action::terminate() { return {ActionKind::kTerminate, {}, {}, {}}; }

std::optional<std::string> action_violation(const Action& action) {
  switch (action.kind) {
    case ActionKind::kClick:
    case ActionKind::kDoubleClick:
    case ActionKind::kScroll:
      if (!action.coordinate) return std::string(to_string(action.kind)) + " requires a coordinate";
      break;
    case ActionKind::kKey:
    case ActionKind::kTypeText:
      if (!action.text || action.text->empty()) {
        return std::string(to_string(action.kind)) + " requires text";
      }
      break;
    case ActionKind::kWait:
      if (!action.duration || !(*action.duration > 0.0)) return "wait requires a positive duration";
      break;
    case ActionKind::kTerminate:
      if (action.coordinate || action.text || action.duration) return "terminate carries no payload";
      break;
  }
  return std::nullopt;
}

void check_action(const Action& action) {
  if (auto v = action_violation(action)) throw ContractError("invalid action: " + *v);
}

Digest compute_digest(int width, int height, int channels, std::span<const std::uint8_t> pixels) {
  std::vector<std::uint8_t> header;
  append_u32(header, static_cast<std::uint32_t>(width));
  append_u32(header, static_cast<std::uint32_t>(height));
  append_u32(header, static_cast<std::uint32_t>(channels));
  return mix64(fnv1a(pixels, fnv1a(header)));
}

Observation::Observation(int width, int height, int channels, std::vector<std::uint8_t> pixels,
                         std::optional<ScreenState> state)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)), state_(std::move(state)) {
  if (width <= 0 || height <= 0) throw ContractError("observation dimensions must be positive");
  if (channels != 1 && channels != 3) throw ContractError("observation channels must be 1 or 3");
  const auto expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                        static_cast<std::size_t>(channels);
  if (pixels_.size() != expected) {
    throw ContractError("pixel buffer has " + std::to_string(pixels_.size()) + " values, expected " +
                        std::to_string(expected));
  }
  digest_ = compute_digest(width_, height_, channels_, pixels_);
}

bool StatePredicate::satisfied_by(const ScreenState& state) const {
  if (screen && *screen != state.screen) return false;
  for (const auto& [name, value] : vars) {
    auto it = state.vars.find(name);
    const std::string actual = it == state.vars.end() ? std::string() : it->second;
    if (actual != value) return false;
  }
  return true;
}

std::optional<std::string> tuple_violation(const ExplorationTuple& tuple) {
  if (auto v = action_violation(tuple.action)) return v;
  if (tuple.step_goal.empty()) return "step_goal is empty";
  if (tuple.action.kind != ActionKind::kTerminate && tuple.expected_observation.text.empty()) {
    return "expected_observation is empty";
  }
  return std::nullopt;
}

const TreeNode& ExplorationTree::node(NodeId id) const {
  auto it = nodes.find(id);
  if (it == nodes.end()) throw NotFoundError("node " + std::to_string(id) + " not in tree " + tree_id);
  return it->second;
}

TreeNode& ExplorationTree::node(NodeId id) {
  auto it = nodes.find(id);
  if (it == nodes.end()) throw NotFoundError("node " + std::to_string(id) + " not in tree " + tree_id);
  return it->second;
}

NodeId ExplorationTree::root_id() const {
  for (const auto& [id, n] : nodes) {
    if (n.status == NodeStatus::kRoot) return id;
  }
  throw NotFoundError("tree " + tree_id + " has no root");
}

NodeId ExplorationTree::add_root(std::optional<Digest> digest) {
  const NodeId id = next_id();
  TreeNode n;
  n.id = id;
  n.status = NodeStatus::kRoot;
  n.observation_digest = digest;
  nodes.emplace(id, std::move(n));
  return id;
}

NodeId ExplorationTree::add_child(NodeId parent, ExplorationTuple incoming, NodeStatus status,
                                  std::optional<VerificationResult> verification,
                                  std::optional<Digest> digest) {
  const int depth = node(parent).depth + 1;
  const NodeId id = next_id();
  TreeNode n;
  n.id = id;
  n.parent = parent;
  n.depth = depth;
  n.incoming = std::move(incoming);
  n.status = status;
  n.verification = std::move(verification);
  n.observation_digest = digest;
  nodes.emplace(id, std::move(n));
  return id;
}

ChildIndex child_index(const ExplorationTree& tree) {
  ChildIndex index;
  for (const auto& [id, n] : tree.nodes) {
    if (n.parent) index[*n.parent].push_back(id);
  }
  return index;
}

std::vector<NodeId> path_nodes(const ExplorationTree& tree, NodeId node) {
  std::vector<NodeId> out;
  const TreeNode* cur = &tree.node(node);
  while (cur->parent) {
    out.push_back(cur->id);
    if (out.size() > tree.nodes.size()) throw ContractError("cycle in parent links of " + tree.tree_id);
    cur = &tree.node(*cur->parent);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<Action> path_to(const ExplorationTree& tree, NodeId node) {
  std::vector<Action> actions;
  for (NodeId id : path_nodes(tree, node)) {
    const auto& incoming = tree.node(id).incoming;
    if (!incoming) throw ContractError("node " + std::to_string(id) + " has no incoming tuple");
    actions.push_back(incoming->action);
  }
  return actions;
}

std::vector<NodeId> leaves(const ExplorationTree& tree) {
  const auto index = child_index(tree);
  std::vector<NodeId> out;
  for (const auto& [id, n] : tree.nodes) {
    if (!index.contains(id)) out.push_back(id);
  }
  return out;
}

std::vector<std::string> validate(const ExplorationTree& tree) {
  std::vector<std::string> violations;
  auto report = [&](NodeId id, const std::string& rule) {
    violations.push_back("node " + std::to_string(id) + ": " + rule);
  };

  std::vector<NodeId> roots;
  for (const auto& [key, n] : tree.nodes) {
    if (key != n.id) report(key, "stored under key that differs from its id " + std::to_string(n.id));
    if (n.status == NodeStatus::kRoot) roots.push_back(key);
  }
  if (roots.empty()) {
    violations.push_back("tree " + tree.tree_id + ": no ROOT node");
  } else if (roots.size() > 1) {
    report(roots[1], "multiple ROOT nodes (" + std::to_string(roots.size()) + ")");
  }

  for (const auto& [id, n] : tree.nodes) {
    if (n.status == NodeStatus::kRoot) {
      if (n.depth != 0) report(id, "root depth must be 0");
      if (n.parent) report(id, "root must not have a parent");
      if (n.incoming) report(id, "root must not have an incoming tuple");
      continue;
    }
    if (!n.parent) {
      report(id, "non-root node has no parent");
      continue;
    }
    auto pit = tree.nodes.find(*n.parent);
    if (pit == tree.nodes.end()) {
      report(id, "parent " + std::to_string(*n.parent) + " does not exist");
      continue;
    }
    if (n.depth != pit->second.depth + 1) {
      report(id, "depth " + std::to_string(n.depth) + " != parent depth + 1 (" +
                     std::to_string(pit->second.depth + 1) + ")");
    }
    if (!n.incoming) {
      report(id, "non-root node has no incoming tuple");
    } else if (auto v = tuple_violation(*n.incoming)) {
      report(id, "incoming tuple invalid: " + *v);
    }
    if ((n.status == NodeStatus::kExplored || n.status == NodeStatus::kTerminal) &&
        (!n.verification || !n.observation_digest)) {
      report(id, std::string(to_string(n.status)) + " node lacks verification or observation digest");
    }
  }

  // Acyclicity: every parent chain must end at a parentless node within |nodes| hops.
  for (const auto& [id, n] : tree.nodes) {
    const TreeNode* cur = &n;
    std::size_t hops = 0;
    while (cur->parent && hops <= tree.nodes.size()) {
      auto pit = tree.nodes.find(*cur->parent);
      if (pit == tree.nodes.end()) break;
      cur = &pit->second;
      ++hops;
    }
    if (hops > tree.nodes.size()) report(id, "parent links form a cycle");
  }

  // Unique action histories reduce to distinct actions among siblings.
  for (const auto& [parent, kids] : child_index(tree)) {
    for (std::size_t i = 0; i < kids.size(); ++i) {
      const auto& a = tree.node(kids[i]).incoming;
      if (!a) continue;
      for (std::size_t j = i + 1; j < kids.size(); ++j) {
        const auto& b = tree.node(kids[j]).incoming;
        if (b && a->action == b->action) {
          report(kids[j], "duplicates the action history of sibling " + std::to_string(kids[i]));
        }
      }
    }
  }
  return violations;
}

Trajectory trajectory_to(const ExplorationTree& tree, NodeId leaf) {
  Trajectory traj;
  traj.tree_id = tree.tree_id;
  traj.initial_digest = tree.node(tree.root_id()).observation_digest.value_or(0);
  for (NodeId id : path_nodes(tree, leaf)) {
    const auto& n = tree.node(id);
    if (!n.incoming || !n.verification || !n.observation_digest) {
      throw ContractError("node " + std::to_string(id) + " on trajectory path was never executed");
    }
    traj.node_ids.push_back(id);
    traj.steps.push_back({*n.incoming, *n.verification, *n.observation_digest});
  }
  return traj;
}

}  // namespace cuatree
