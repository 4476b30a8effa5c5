#pragma once

#include <memory>

#include "cuatree/agents.hpp"
#include "cuatree/environment.hpp"

namespace cuatree {

// "biased" favours the largest widgets and ignores memory; "diverse" avoids goals already in memory.
enum class Persona { kBiased, kDiverse };

std::string_view to_string(Persona persona);
Persona persona_from_string(std::string_view name);

struct ScriptedExplorerOptions {
  Persona persona = Persona::kDiverse;
  // Chance per step, in thousandths, of offering a terminate candidate outside completion screens.
  int terminate_permille = 0;
};

// Deterministic stand-in for a vision-language explorer: reads the simulator annotation of the
// observation and enumerates the actionable widgets and shortcuts of the current screen.
class ScriptedExplorer final : public ExplorationAgent {
 public:
  ScriptedExplorer(std::shared_ptr<const SimAppSpec> spec, ScriptedExplorerOptions options = {});
  std::vector<ExplorationTuple> propose(const ExplorationContext& ctx) const override;

 private:
  std::shared_ptr<const SimAppSpec> spec_;
  ScriptedExplorerOptions options_;
};

// NO_CHANGE iff digests match; otherwise SUCCESS iff the expected predicate holds on the new state.
class ScriptedVerifier final : public VerificationAgent {
 public:
  VerificationResult verify(const Observation& previous, const ExplorationTuple& tuple,
                            const Observation& actual) const override;
};

class ScriptedSummarizer final : public SummaryAgent {
 public:
  explicit ScriptedSummarizer(std::size_t min_span_length = 2) : min_span_length_(min_span_length) {}
  TaskSummary summarize(const Trajectory& trajectory) const override;

 private:
  std::size_t min_span_length_;
};

// Rubric: each dimension starts at 3 and loses ceil(6 * fraction) for its penalty.
//   efficiency  - NO_CHANGE steps
//   consistency - UNEXPECTED_CHANGE steps
//   coherence   - steps returning to the frame seen two steps earlier
//   utility     - floor(3 * share of step-goal tokens present in the instruction)
class ScriptedEvaluator final : public EvaluationAgent {
 public:
  QualityScore evaluate(const Trajectory& trajectory, std::string_view instruction) const override;
};

class ScriptedReasoner final : public ReasoningAgent {
 public:
  ReasoningChain synthesize_reasoning(std::string_view goal, const ReasoningStep& step,
                                      const std::vector<HistoryEntry>& history,
                                      const std::vector<std::string>& future) const override;
};

AgentSuite scripted_suite(std::shared_ptr<const SimAppSpec> spec, ScriptedExplorerOptions options = {},
                          std::size_t min_span_length = 2);

}  // namespace cuatree
