#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cuatree/agents.hpp"
#include "cuatree/blob_store.hpp"
#include "cuatree/environment.hpp"
#include "cuatree/model.hpp"
#include "cuatree/prefix_memory.hpp"

namespace cuatree {

// ---------------------------------------------------------------------------
// Policies

// Depths [0, bound1) discover, [bound1, bound2) develop, [bound2, max_depth) converge.
struct BranchingPolicy {
  int max_depth = 20;
  int bound1 = 6;
  int bound2 = 13;
  std::array<int, 3> widths{4, 2, 1};
  friend bool operator==(const BranchingPolicy&, const BranchingPolicy&) = default;
};

std::optional<std::string> policy_violation(const BranchingPolicy& policy);

// Phase index 0, 1 or 2 of `depth`.
int phase_of(const BranchingPolicy& policy, int depth);

// Upper bound on the number of children of a node at `depth`.
int k_max(const BranchingPolicy& policy, int depth);

// A single-path policy: every phase has width 1.
BranchingPolicy linear_policy(int max_depth);

struct StopConditions {
  int max_depth = 20;
  int max_consecutive_failures = 3;
  friend bool operator==(const StopConditions&, const StopConditions&) = default;
};

struct ReplayPolicy {
  double epsilon = 5.0;
  int max_restore_attempts = 3;
  friend bool operator==(const ReplayPolicy&, const ReplayPolicy&) = default;
};

// ---------------------------------------------------------------------------
// Replay

// Root mean square difference over every pixel value of two equally shaped frames.
double rms_diff(const Observation& a, const Observation& b);

// The replayed frame matches the recorded one when they are identical or closer than epsilon.
bool consistent(double delta, const ReplayPolicy& policy);

struct CorruptionReport {
  std::string tree_id;
  NodeId node = 0;
  int failing_depth = -1;  // -1 when replay never reached a checkpoint
  double delta = 0.0;
  std::string reason;
};

struct Checkpoint {
  NodeId node = 0;
  int depth = 0;
  double delta = 0.0;
};

struct RestoreResult {
  // Frame of the replay target: the node itself when it was executed, its parent when UNEXPLORED.
  std::optional<Observation> observation;
  std::optional<CorruptionReport> corruption;
  std::vector<Checkpoint> checkpoints;
  std::uint64_t env_steps = 0;

  bool ok() const { return observation.has_value(); }
};

// Resets `env` and replays the path to `node` (or to its parent for an UNEXPLORED node), comparing
// the replayed frames of the target and of its parent against the recorded ones. Recorded pixels come
// from `blobs`; without a stored frame only an exact digest match counts as consistent.
RestoreResult replay_node(const ExplorationTree& tree, NodeId node, Environment& env, const EnvironmentConfig& config,
                          const ReplayPolicy& policy, const BlobStore* blobs);

// As replay_node, and marks `node` CORRUPTED when a checkpoint fails.
RestoreResult restore_node(ExplorationTree& tree, NodeId node, Environment& env, const EnvironmentConfig& config,
                           const ReplayPolicy& policy, const BlobStore* blobs);

// ---------------------------------------------------------------------------
// Expansion

struct ExpandOptions {
  BranchingPolicy policy;
  StopConditions stop;
  std::string world_knowledge;
};

inline constexpr const char* kTerminateFeedback = "Branch closed by termination action.";

struct ChildRecord {
  ExplorationTuple tuple;
  NodeStatus status = NodeStatus::kUnexplored;
  std::optional<VerificationResult> verification;
  std::optional<Digest> digest;
};

// Outcome of expanding one node, computed against a read-only view of the tree.
struct ExpansionPlan {
  std::vector<ChildRecord> children;  // proposal order; empty when nothing survived filtering
  std::optional<std::size_t> retained;
  std::optional<Observation> retained_observation;
  std::vector<PrefixMemory::Sequence> admissions;
  std::size_t dropped_by_novelty = 0;
  std::uint64_t env_steps = 0;
};

// Goals on the incoming edges from the root to `node`.
std::vector<std::string> goal_history(const ExplorationTree& tree, NodeId node);

// Non-SUCCESS verifications at the end of the path to `node`.
int trailing_failures(const ExplorationTree& tree, NodeId node);

// Index of the candidate executed at a node, a pure function of the path.
std::size_t retained_index(std::uint64_t tree_seed, Digest current, int depth, const std::vector<std::string>& goals,
                           std::size_t candidates);

// Proposes up to k_max candidates at `node`, filters them for novelty, then executes one of them
// chosen by a path-seeded draw. `env` must be in the state of `node`, whose frame is `current`.
ExpansionPlan plan_expansion(const ExplorationTree& tree, NodeId node, const Observation& current, Environment& env,
                             const AgentSuite& agents, const PrefixMemory* memory, const ExpandOptions& options);

// Executes the incoming edge of an UNEXPLORED node from its parent's frame.
ChildRecord execute_edge(const ExplorationTree& tree, NodeId node, const Observation& parent_frame, Environment& env,
                         const AgentSuite& agents, const StopConditions& stop, std::optional<Observation>* frame);

// Adds the planned children below `node` (or marks it PRUNED when there are none) and returns the new ids.
std::vector<NodeId> apply_expansion(ExplorationTree& tree, NodeId node, const ExpansionPlan& plan);

// plan_expansion + apply_expansion, admitting the planned goals into `memory` immediately.
std::vector<NodeId> expand(ExplorationTree& tree, NodeId node, const Observation& current, Environment& env,
                           const AgentSuite& agents, PrefixMemory* memory, const ExpandOptions& options,
                           BlobStore* blobs = nullptr);

// ---------------------------------------------------------------------------
// Concurrent run

struct TreeJob {
  std::string tree_id;
  EnvironmentConfig env;
  std::string world_knowledge;
};

struct EngineConfig {
  std::vector<TreeJob> trees;
  BranchingPolicy policy;
  StopConditions stop;
  ReplayPolicy replay;
  bool novelty = true;
  int n_workers = 1;
  int checkpoint_interval = 50;
  // A node whose processing fails this many times is left as it is.
  int max_node_failures = 3;
  std::chrono::milliseconds transport_backoff{10};
  // Called with the current forest after every `checkpoint_interval` expansions, on the coordinator thread.
  std::function<void(const std::vector<ExplorationTree>&)> on_checkpoint;
  // Called by a worker after it claims a node; an exception fails the claim.
  std::function<void(const std::string& tree_id, NodeId node)> on_claim;
};

struct RunCounters {
  std::uint64_t env_steps = 0;  // including replay
  std::uint64_t replay_steps = 0;
  std::uint64_t propose_calls = 0;
  std::uint64_t claims = 0;
  std::uint64_t failed_claims = 0;
  // (tree index, node id) -> number of times the node was expanded.
  std::map<std::pair<std::size_t, NodeId>, int> expansions;

  int max_expansions_per_node() const;
};

struct RunResult {
  std::vector<ExplorationTree> forest;
  RunCounters counters;
  std::vector<CorruptionReport> corruptions;
  std::vector<std::string> warnings;
};

// Explores every configured tree. Trees of one category run one after another when novelty is on, each
// seeing the prefixes committed by its predecessors; `memory` receives every tree's prefixes.
RunResult run_exploration(const EngineConfig& config, const EnvironmentFactory& factory, const AgentSuite& agents,
                          PrefixMemory& memory, BlobStore* blobs = nullptr);

// Renumbers nodes in the order a single worker would have created them, so the ids of a finished tree
// do not depend on scheduling. Returns the old -> new id map.
std::map<NodeId, NodeId> canonicalize(ExplorationTree& tree);

std::optional<std::string> engine_config_violation(const EngineConfig& config);

// ---------------------------------------------------------------------------
// Statistics

// TERMINAL leaves and EXPLORED leaves at `max_depth`, sorted by id.
std::vector<NodeId> trajectory_leaves(const ExplorationTree& tree, int max_depth);

struct ExplorationStats {
  std::size_t trajectories = 0;
  std::size_t unique_expansions = 0;  // distinct non-root nodes on counted trajectories
  std::uint64_t env_steps_including_replay = 0;
  double avg_expansions_per_trajectory = 0.0;
  double mean_trajectory_length = 0.0;
};

ExplorationStats exploration_stats(std::span<const ExplorationTree> forest, int max_depth,
                                   const RunCounters* counters = nullptr);

// Cumulative unique expansions divided by trajectory count, after each trajectory in leaf-id order.
std::vector<double> reuse_curve(const ExplorationTree& tree, int max_depth);

}  // namespace cuatree
