#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cuatree {

using NodeId = std::uint64_t;
using Digest = std::uint64_t;

// ---------------------------------------------------------------------------
// Actions

enum class ActionKind { kClick, kDoubleClick, kKey, kTypeText, kScroll, kWait, kTerminate };

std::string_view to_string(ActionKind kind);
ActionKind action_kind_from_string(std::string_view name);

struct Point {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const Point&, const Point&) = default;
};

struct Action {
  ActionKind kind = ActionKind::kWait;
  std::optional<Point> coordinate;
  std::optional<std::string> text;
  std::optional<double> duration;

  static Action click(int x, int y);
  static Action double_click(int x, int y);
  static Action key(std::string chord);
  static Action type_text(std::string text);
  static Action scroll(int x, int y);
  static Action wait(double seconds);
  static Action terminate();

  friend bool operator==(const Action&, const Action&) = default;
};

// Empty when the payload matches the kind, otherwise a description of the first problem.
std::optional<std::string> action_violation(const Action& action);
void check_action(const Action& action);

// ---------------------------------------------------------------------------
// Observations

// Simulator-side annotation of what is on screen. Remote environments leave it unset.
struct ScreenState {
  std::string screen;
  std::map<std::string, std::string> vars;
  friend bool operator==(const ScreenState&, const ScreenState&) = default;
};

Digest compute_digest(int width, int height, int channels, std::span<const std::uint8_t> pixels);

class Observation {
 public:
  Observation() = default;
  Observation(int width, int height, int channels, std::vector<std::uint8_t> pixels,
              std::optional<ScreenState> state = std::nullopt);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }
  Digest digest() const { return digest_; }
  const std::optional<ScreenState>& state() const { return state_; }

  bool same_shape(const Observation& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<std::uint8_t> pixels_;
  Digest digest_ = compute_digest(0, 0, 1, {});
  std::optional<ScreenState> state_;
};

// ---------------------------------------------------------------------------
// Exploration tuples and verification

struct StatePredicate {
  std::optional<std::string> screen;
  std::map<std::string, std::string> vars;

  bool satisfied_by(const ScreenState& state) const;
  friend bool operator==(const StatePredicate&, const StatePredicate&) = default;
};

struct ExpectedObservation {
  std::string text;
  std::optional<StatePredicate> predicate;
  friend bool operator==(const ExpectedObservation&, const ExpectedObservation&) = default;
};

struct ExplorationTuple {
  Action action;
  std::string step_goal;
  std::string final_goal_hypothesis;
  ExpectedObservation expected_observation;
  std::string rationale;
  friend bool operator==(const ExplorationTuple&, const ExplorationTuple&) = default;
};

std::optional<std::string> tuple_violation(const ExplorationTuple& tuple);

enum class ResultType { kSuccess, kNoChange, kUnexpectedChange };

std::string_view to_string(ResultType type);
ResultType result_type_from_string(std::string_view name);

struct VerificationResult {
  ResultType result_type = ResultType::kSuccess;
  std::string feedback;
  friend bool operator==(const VerificationResult&, const VerificationResult&) = default;
};

// ---------------------------------------------------------------------------
// Tree

enum class NodeStatus { kRoot, kUnexplored, kExplored, kTerminal, kCorrupted, kPruned };

std::string_view to_string(NodeStatus status);
NodeStatus node_status_from_string(std::string_view name);

struct TreeNode {
  NodeId id = 0;
  std::optional<NodeId> parent;
  int depth = 0;
  std::optional<ExplorationTuple> incoming;
  NodeStatus status = NodeStatus::kUnexplored;
  std::optional<VerificationResult> verification;
  std::optional<Digest> observation_digest;
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

using ChildIndex = std::map<NodeId, std::vector<NodeId>>;

struct ExplorationTree {
  std::string tree_id;
  std::string category_id;
  std::uint64_t seed = 0;
  std::map<NodeId, TreeNode> nodes;

  bool contains(NodeId id) const { return nodes.contains(id); }
  const TreeNode& node(NodeId id) const;
  TreeNode& node(NodeId id);
  NodeId root_id() const;
  NodeId next_id() const { return nodes.empty() ? 0 : nodes.rbegin()->first + 1; }

  NodeId add_root(std::optional<Digest> digest);
  NodeId add_child(NodeId parent, ExplorationTuple incoming, NodeStatus status,
                   std::optional<VerificationResult> verification = std::nullopt,
                   std::optional<Digest> digest = std::nullopt);

  friend bool operator==(const ExplorationTree&, const ExplorationTree&) = default;
};

// Children of every node, each list sorted by id. Nodes without children have no entry.
ChildIndex child_index(const ExplorationTree& tree);

// Node ids from the first non-root node down to `node` inclusive; empty for the root.
std::vector<NodeId> path_nodes(const ExplorationTree& tree, NodeId node);

// Actions on the incoming edges from the root to `node`.
std::vector<Action> path_to(const ExplorationTree& tree, NodeId node);

std::vector<NodeId> leaves(const ExplorationTree& tree);

// Structural violations, each naming the node and the broken rule. Empty for a valid tree.
std::vector<std::string> validate(const ExplorationTree& tree);

// ---------------------------------------------------------------------------
// Trajectories

struct TrajectoryStep {
  ExplorationTuple tuple;
  VerificationResult verification;
  Digest observation_digest = 0;
};

struct Trajectory {
  std::string tree_id;
  std::vector<NodeId> node_ids;
  std::vector<TrajectoryStep> steps;
  std::optional<std::string> instruction;
  Digest initial_digest = 0;  // frame the first step acted on

  // Frame step `t` acted on.
  Digest digest_before(std::size_t t) const { return t == 0 ? initial_digest : steps.at(t - 1).observation_digest; }
};

// Root-to-`leaf` trajectory. Every node on the path must carry a verification and digest.
Trajectory trajectory_to(const ExplorationTree& tree, NodeId leaf);

}  // namespace cuatree
