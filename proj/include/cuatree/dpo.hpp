#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cuatree/agents.hpp"
#include "cuatree/engine.hpp"
#include "cuatree/model.hpp"
#include "cuatree/serialize.hpp"

namespace cuatree {

struct Branch {
  NodeId child = 0;
  Action action;
  std::string goal;  // instruction of a kept long trajectory below the child
  ResultType result_type = ResultType::kSuccess;
};

struct BranchNode {
  std::string tree_id;
  NodeId node = 0;
  int depth = 0;
  Digest digest = 0;
  std::vector<HistoryEntry> history;
  std::vector<Branch> branches;
};

struct PreferencePair {
  std::string goal;
  std::vector<HistoryEntry> history;
  Digest digest = 0;
  Action win;
  Action lose;
  int depth = 0;
  std::string tree_id;
  NodeId node = 0;
  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

Json to_json(const PreferencePair& pair);
PreferencePair preference_pair_from_json(const Json& j);

// Kept long trajectories of one tree: leaf id -> instruction.
using KeptInstructions = std::map<NodeId, std::string>;

// Nodes with at least two SUCCESS children whose subtrees each hold a kept trajectory. A branch takes the
// instruction of the lowest-id kept leaf below its child.
std::vector<BranchNode> find_branch_nodes(const ExplorationTree& tree, const KeptInstructions& kept);

struct PairOptions {
  double distinct_threshold = 0.65;
  // When set, pairs whose actions quantize to the same signature on this screen are skipped.
  std::optional<std::pair<int, int>> screen;
};

// For every unordered pair of branches with distinct goals, both mirrored pairs, minus those whose
// winner was not verified SUCCESS.
std::vector<PreferencePair> build_pairs(const BranchNode& entry, const PairOptions& options = {});

// Upper bounds of the depth buckets: depth d falls in the first bucket with d < bound.
std::vector<int> phase_buckets(const BranchingPolicy& policy);

// Caps each source node at `cap_per_node` pairs (seeded choice), then draws round-robin over depth
// buckets, each shuffled by the seed, until `total_target` pairs or the pool is exhausted.
std::vector<PreferencePair> sample_pairs(std::span<const PreferencePair> pairs, int cap_per_node, int total_target,
                                         std::uint64_t seed, const std::vector<int>& bucket_bounds);

int bucket_of(const std::vector<int>& bucket_bounds, int depth);

}  // namespace cuatree
