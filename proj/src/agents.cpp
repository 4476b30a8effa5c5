#include "cuatree/agents.hpp"

#include <algorithm>

#include "cuatree/error.hpp"

namespace cuatree {

int QualityScore::min_dimension() const { return std::min({utility, efficiency, consistency, coherence}); }

bool QualityScore::in_range() const {
  for (int v : {utility, efficiency, consistency, coherence}) {
    if (v < 0 || v > 3) return false;
  }
  return true;
}

std::vector<HistoryEntry> history_of(const Trajectory& trajectory, std::size_t count) {
  std::vector<HistoryEntry> out;
  for (std::size_t i = 0; i < count && i < trajectory.steps.size(); ++i) {
    const auto& s = trajectory.steps[i];
    out.push_back({s.tuple.step_goal, s.tuple.action.kind, s.verification.result_type});
  }
  return out;
}

std::string enumerate_goals(const std::vector<std::string>& goals) {
  if (goals.size() <= 1) return goals.empty() ? std::string() : goals.front();
  if (goals.size() == 2) return goals[0] + " and " + goals[1];
  std::string out;
  for (std::size_t i = 0; i + 1 < goals.size(); ++i) out += goals[i] + ", ";
  return out + "and " + goals.back();
}

Json to_json(const HistoryEntry& entry) {
  return {{"step_goal", entry.step_goal},
          {"action", std::string(to_string(entry.action_kind))},
          {"result_type", std::string(to_string(entry.result_type))}};
}

HistoryEntry history_entry_from_json(const Json& j) {
  return {json_required<std::string>(j, "step_goal"), action_kind_from_string(json_required<std::string>(j, "action")),
          result_type_from_string(json_required<std::string>(j, "result_type"))};
}

Json to_json(const ReasoningChain& chain) {
  return {{"observation", chain.observation}, {"progress", chain.progress}, {"plan", chain.plan},
          {"impact", chain.impact}};
}

ReasoningChain reasoning_chain_from_json(const Json& j) {
  ReasoningChain c{json_required<std::string>(j, "observation"), json_required<std::string>(j, "progress"),
                   json_required<std::string>(j, "plan"), json_required<std::string>(j, "impact")};
  if (c.observation.empty() || c.progress.empty() || c.plan.empty() || c.impact.empty()) {
    throw ParseError("reasoning chain sections must be nonempty");
  }
  return c;
}

Json to_json(const QualityScore& score) {
  return {{"utility", score.utility}, {"efficiency", score.efficiency}, {"consistency", score.consistency},
          {"coherence", score.coherence}};
}

QualityScore quality_score_from_json(const Json& j) {
  QualityScore q{json_required<int>(j, "utility"), json_required<int>(j, "efficiency"),
                 json_required<int>(j, "consistency"), json_required<int>(j, "coherence")};
  if (!q.in_range()) throw ParseError("quality score dimensions must lie in 0..3");
  return q;
}

Json to_json(const TaskSummary& summary) {
  Json spans = Json::array();
  for (const auto& s : summary.sub_spans) spans.push_back({{"start", s.start}, {"end", s.end}, {"intent", s.intent}});
  return {{"global_instruction", summary.global_instruction}, {"sub_spans", std::move(spans)}};
}

TaskSummary task_summary_from_json(const Json& j) {
  TaskSummary s;
  s.global_instruction = json_required<std::string>(j, "global_instruction");
  for (const auto& sj : j.value("sub_spans", Json::array())) {
    s.sub_spans.push_back({json_required<std::size_t>(sj, "start"), json_required<std::size_t>(sj, "end"),
                           json_required<std::string>(sj, "intent")});
  }
  return s;
}

}  // namespace cuatree
