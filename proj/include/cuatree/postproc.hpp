#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cuatree/agents.hpp"
#include "cuatree/model.hpp"
#include "cuatree/serialize.hpp"

namespace cuatree {

enum class Tier { kStep, kSubTraj, kLongTraj };

std::string_view to_string(Tier tier);
Tier tier_from_string(std::string_view name);

struct FilterPolicy {
  int min_dimension = 2;
  int min_total = 9;
  friend bool operator==(const FilterPolicy&, const FilterPolicy&) = default;
};

std::optional<std::string> filter_policy_violation(const FilterPolicy& policy);

bool passes(const QualityScore& score, const FilterPolicy& policy);

// Indices of the kept scores, in input order.
std::vector<std::size_t> quality_filter(std::span<const QualityScore> scores, const FilterPolicy& policy);

struct RecordStep {
  ReasoningChain reasoning;
  std::string goal;
  Action action;
  VerificationResult verification;
  Digest observation_digest = 0;
};

struct DatasetRecord {
  Tier tier = Tier::kStep;
  std::string instruction;
  std::vector<RecordStep> steps;
  std::string tree_id;
  std::vector<NodeId> nodes;  // source span, first to last step
};

Json to_json(const DatasetRecord& record);
DatasetRecord dataset_record_from_json(const Json& j);

// One trajectory per TERMINAL leaf and per EXPLORED leaf at `max_depth`, in leaf-id order.
std::vector<Trajectory> collect_trajectories(const ExplorationTree& tree, int max_depth);

// Maximal runs of SUCCESS steps of at least `min_len` steps. Each run takes the intent of the summary
// span covering exactly that run; without one, its non-terminate goals are enumerated. Runs without
// any goal are skipped.
std::vector<Trajectory> extract_subtrajectories(const Trajectory& trajectory, std::size_t min_len,
                                                const TaskSummary* summary = nullptr);

// One reasoning chain per step; step t sees the steps before it as history and the goals of later
// SUCCESS steps as its future.
std::vector<ReasoningChain> enrich(const Trajectory& trajectory, std::string_view instruction,
                                   const ReasoningAgent& reasoner);

struct ExportOptions {
  FilterPolicy filter;
  std::size_t min_sublen = 2;
  double redundancy_threshold = 0.65;
  int max_depth = 20;
};

struct TierStats {
  Tier tier = Tier::kStep;
  std::size_t original = 0;
  std::size_t filtered = 0;
  double avg_steps_original = 0.0;
  double avg_steps = 0.0;  // over filtered records
  friend bool operator==(const TierStats&, const TierStats&) = default;
};

struct ExportResult {
  // Filtered records of each tier; `original` keeps the records before filtering.
  std::vector<DatasetRecord> step;
  std::vector<DatasetRecord> sub_traj;
  std::vector<DatasetRecord> long_traj;
  std::vector<DatasetRecord> step_original;
  std::vector<DatasetRecord> sub_traj_original;
  std::vector<DatasetRecord> long_traj_original;
  std::vector<TierStats> stats;  // STEP, SUB_TRAJ, LONG_TRAJ
  std::vector<std::string> warnings;
};

ExportResult export_dataset(std::span<const ExplorationTree> forest, const AgentSuite& agents,
                            const ExportOptions& options);

// Recomputes tier statistics from record lists.
TierStats tier_stats(Tier tier, std::span<const DatasetRecord> original, std::span<const DatasetRecord> filtered);

Json to_json(const TierStats& stats);

// Fixed-width text table with the columns tier, original, filtered, avg steps.
std::string render_stats_table(std::span<const TierStats> stats);

}  // namespace cuatree
