#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cuatree/model.hpp"
#include "cuatree/serialize.hpp"

namespace cuatree {

// Textual part of one past step; screenshots are not carried in the history.
struct HistoryEntry {
  std::string step_goal;
  ActionKind action_kind = ActionKind::kWait;
  ResultType result_type = ResultType::kSuccess;
  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct ExplorationContext {
  Observation observation;
  std::vector<HistoryEntry> history;
  std::string world_knowledge;
  // Stored goal prefixes whose leading goals match this history; the last goal of each is taken.
  std::vector<std::vector<std::string>> prefix_memory_view;
  int k_max = 1;
  std::uint64_t seed = 0;
  std::string category;
};

struct QualityScore {
  int utility = 0;
  int efficiency = 0;
  int consistency = 0;
  int coherence = 0;

  int total() const { return utility + efficiency + consistency + coherence; }
  int min_dimension() const;
  bool in_range() const;
  friend bool operator==(const QualityScore&, const QualityScore&) = default;
};

struct ReasoningChain {
  std::string observation;
  std::string progress;
  std::string plan;
  std::string impact;
  friend bool operator==(const ReasoningChain&, const ReasoningChain&) = default;
};

struct SubSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  std::string intent;
  friend bool operator==(const SubSpan&, const SubSpan&) = default;
};

struct TaskSummary {
  std::string global_instruction;
  std::vector<SubSpan> sub_spans;
};

struct ReasoningStep {
  Digest observation_digest = 0;
  ExplorationTuple tuple;
};

class ExplorationAgent {
 public:
  virtual ~ExplorationAgent() = default;
  // Between 1 and ctx.k_max candidate tuples.
  virtual std::vector<ExplorationTuple> propose(const ExplorationContext& ctx) const = 0;
};

class VerificationAgent {
 public:
  virtual ~VerificationAgent() = default;
  virtual VerificationResult verify(const Observation& previous, const ExplorationTuple& tuple,
                                    const Observation& actual) const = 0;
};

class SummaryAgent {
 public:
  virtual ~SummaryAgent() = default;
  virtual TaskSummary summarize(const Trajectory& trajectory) const = 0;
};

class EvaluationAgent {
 public:
  virtual ~EvaluationAgent() = default;
  virtual QualityScore evaluate(const Trajectory& trajectory, std::string_view instruction) const = 0;
};

class ReasoningAgent {
 public:
  virtual ~ReasoningAgent() = default;
  virtual ReasoningChain synthesize_reasoning(std::string_view goal, const ReasoningStep& step,
                                              const std::vector<HistoryEntry>& history,
                                              const std::vector<std::string>& future) const = 0;
};

// The five roles used by a run. Implementations must be callable from several threads at once.
struct AgentSuite {
  std::shared_ptr<const ExplorationAgent> explorer;
  std::shared_ptr<const VerificationAgent> verifier;
  std::shared_ptr<const SummaryAgent> summarizer;
  std::shared_ptr<const EvaluationAgent> evaluator;
  std::shared_ptr<const ReasoningAgent> reasoner;
};

Json to_json(const HistoryEntry& entry);
HistoryEntry history_entry_from_json(const Json& j);
Json to_json(const ReasoningChain& chain);
ReasoningChain reasoning_chain_from_json(const Json& j);
Json to_json(const QualityScore& score);
QualityScore quality_score_from_json(const Json& j);
Json to_json(const TaskSummary& summary);
TaskSummary task_summary_from_json(const Json& j);

// History entries for the path that produced `trajectory`, truncated to its first `count` steps.
std::vector<HistoryEntry> history_of(const Trajectory& trajectory, std::size_t count);

// "A", "A and B", "A, B, and C".
std::string enumerate_goals(const std::vector<std::string>& goals);

}  // namespace cuatree
