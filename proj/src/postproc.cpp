#include "cuatree/postproc.hpp"

#include <cstdio>
#include <set>
#include <tuple>

#include "cuatree/analytics.hpp"
#include "cuatree/engine.hpp"
#include "cuatree/error.hpp"
#include "cuatree/hashing.hpp"

namespace cuatree {

std::string_view to_string(Tier tier) {
  switch (tier) {
    case Tier::kStep: return "STEP";
    case Tier::kSubTraj: return "SUB_TRAJ";
    case Tier::kLongTraj: return "LONG_TRAJ";
  }
  return "STEP";
}

Tier tier_from_string(std::string_view name) {
  if (name == "STEP") return Tier::kStep;
  if (name == "SUB_TRAJ") return Tier::kSubTraj;
  if (name == "LONG_TRAJ") return Tier::kLongTraj;
  throw ParseError("unknown tier '" + std::string(name) + "'");
}

std::optional<std::string> filter_policy_violation(const FilterPolicy& p) {
  // Thresholds above the attainable maximum are allowed and keep nothing.
  if (p.min_dimension < 0) return "min_dimension must be non-negative";
  if (p.min_total < 0) return "min_total must be non-negative";
  return std::nullopt;
}

bool passes(const QualityScore& score, const FilterPolicy& policy) {
  return score.min_dimension() >= policy.min_dimension && score.total() >= policy.min_total;
}

std::vector<std::size_t> quality_filter(std::span<const QualityScore> scores, const FilterPolicy& policy) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (passes(scores[i], policy)) kept.push_back(i);
  }
  return kept;
}

Json to_json(const DatasetRecord& record) {
  Json steps = Json::array();
  for (const auto& s : record.steps) {
    steps.push_back({{"reasoning", to_json(s.reasoning)},
                     {"goal", s.goal},
                     {"action", to_json(s.action)},
                     {"verification", to_json(s.verification)},
                     {"digest", to_hex(s.observation_digest)}});
  }
  return {{"tier", std::string(to_string(record.tier))},
          {"instruction", record.instruction},
          {"steps", std::move(steps)},
          {"source", {{"tree_id", record.tree_id}, {"nodes", record.nodes}}}};
}

DatasetRecord dataset_record_from_json(const Json& j) {
  DatasetRecord r;
  r.tier = tier_from_string(json_required<std::string>(j, "tier"));
  r.instruction = json_required<std::string>(j, "instruction");
  for (const auto& sj : j.at("steps")) {
    r.steps.push_back({reasoning_chain_from_json(sj.at("reasoning")), json_required<std::string>(sj, "goal"),
                       action_from_json(sj.at("action")), verification_from_json(sj.at("verification")),
                       from_hex(json_required<std::string>(sj, "digest"))});
  }
  const auto& src = j.at("source");
  r.tree_id = json_required<std::string>(src, "tree_id");
  r.nodes = json_required<std::vector<NodeId>>(src, "nodes");
  return r;
}

std::vector<Trajectory> collect_trajectories(const ExplorationTree& tree, int max_depth) {
  std::vector<Trajectory> out;
  for (NodeId leaf : trajectory_leaves(tree, max_depth)) out.push_back(trajectory_to(tree, leaf));
  return out;
}

namespace {

bool is_terminate(const TrajectoryStep& s) { return s.tuple.action.kind == ActionKind::kTerminate; }

Trajectory slice(const Trajectory& t, std::size_t start, std::size_t end_inclusive) {
  Trajectory out;
  out.tree_id = t.tree_id;
  out.initial_digest = t.digest_before(start);
  for (std::size_t i = start; i <= end_inclusive; ++i) {
    out.node_ids.push_back(t.node_ids.at(i));
    out.steps.push_back(t.steps.at(i));
  }
  return out;
}

std::vector<std::string> success_goals(const Trajectory& t, std::size_t from) {
  std::vector<std::string> goals;
  for (std::size_t i = from; i < t.steps.size(); ++i) {
    const auto& s = t.steps[i];
    if (s.verification.result_type == ResultType::kSuccess && !is_terminate(s)) goals.push_back(s.tuple.step_goal);
  }
  return goals;
}

}  // namespace

std::vector<Trajectory> extract_subtrajectories(const Trajectory& trajectory, std::size_t min_len,
                                                const TaskSummary* summary) {
  if (min_len < 1) throw ContractError("min_len must be at least 1");
  std::vector<Trajectory> out;
  const auto& steps = trajectory.steps;
  std::size_t i = 0;
  while (i < steps.size()) {
    if (steps[i].verification.result_type != ResultType::kSuccess) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < steps.size() && steps[j].verification.result_type == ResultType::kSuccess) ++j;
    if (j - i >= min_len) {
      Trajectory sub = slice(trajectory, i, j - 1);
      if (summary) {
        for (const auto& span : summary->sub_spans) {
          if (span.start == i && span.end == j - 1) sub.instruction = span.intent;
        }
      }
      if (!sub.instruction) {
        auto goals = success_goals(sub, 0);
        if (!goals.empty()) sub.instruction = enumerate_goals(goals);
      }
      if (sub.instruction) out.push_back(std::move(sub));
    }
    i = j;
  }
  return out;
}

std::vector<ReasoningChain> enrich(const Trajectory& trajectory, std::string_view instruction,
                                   const ReasoningAgent& reasoner) {
  if (instruction.empty()) throw ContractError("enrich needs a nonempty instruction");
  std::vector<ReasoningChain> chains;
  for (std::size_t t = 0; t < trajectory.steps.size(); ++t) {
    const ReasoningStep step{trajectory.digest_before(t), trajectory.steps[t].tuple};
    chains.push_back(
        reasoner.synthesize_reasoning(instruction, step, history_of(trajectory, t), success_goals(trajectory, t + 1)));
  }
  return chains;
}

namespace {

DatasetRecord make_record(Tier tier, const Trajectory& t, const std::string& instruction,
                          const std::vector<ReasoningChain>& chains) {
  DatasetRecord r;
  r.tier = tier;
  r.instruction = instruction;
  r.tree_id = t.tree_id;
  r.nodes = t.node_ids;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const auto& s = t.steps[i];
    r.steps.push_back({chains.at(i), s.tuple.step_goal, s.tuple.action, s.verification, t.digest_before(i)});
  }
  return r;
}

double average_steps(std::span<const DatasetRecord> records) {
  if (records.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& r : records) n += r.steps.size();
  return static_cast<double>(n) / static_cast<double>(records.size());
}

}  // namespace

TierStats tier_stats(Tier tier, std::span<const DatasetRecord> original, std::span<const DatasetRecord> filtered) {
  return {tier, original.size(), filtered.size(), average_steps(original), average_steps(filtered)};
}

ExportResult export_dataset(std::span<const ExplorationTree> forest, const AgentSuite& agents,
                            const ExportOptions& options) {
  if (auto v = filter_policy_violation(options.filter)) throw ContractError(*v);
  if (!agents.summarizer || !agents.evaluator || !agents.reasoner) {
    throw ContractError("export needs summarizer, evaluator and reasoner agents");
  }
  ExportResult out;
  for (const auto& tree : forest) {
    // Step tier: every executed edge on its own, with the path so far as history.
    for (const auto& [id, n] : tree.nodes) {
      if (!n.parent || !n.incoming || !n.verification || n.incoming->action.kind == ActionKind::kTerminate) continue;
      Trajectory t;
      t.tree_id = tree.tree_id;
      for (NodeId p : path_nodes(tree, id)) {
        const TreeNode& pn = tree.node(p);
        t.steps.push_back({*pn.incoming, pn.verification.value_or(VerificationResult{}),
                           pn.observation_digest.value_or(0)});
        t.node_ids.push_back(p);
      }
      t.initial_digest = tree.node(tree.root_id()).observation_digest.value_or(0);
      const std::size_t last = t.steps.size() - 1;
      const std::string& goal = n.incoming->step_goal;
      const auto chain = agents.reasoner->synthesize_reasoning(
          goal, ReasoningStep{t.digest_before(last), *n.incoming}, history_of(t, last), {});
      auto record = make_record(Tier::kStep, slice(t, last, last), goal, {chain});
      out.step_original.push_back(record);
      if (n.status != NodeStatus::kCorrupted) out.step.push_back(std::move(record));
    }

    const auto trajectories = collect_trajectories(tree, options.max_depth);
    std::set<std::pair<NodeId, NodeId>> seen_spans;
    std::vector<DatasetRecord> tree_subs;
    for (const auto& traj : trajectories) {
      TaskSummary summary;
      try {
        summary = agents.summarizer->summarize(traj);
      } catch (const EmptySummaryError& e) {
        // Counted as an original long trajectory that cannot pass any filter.
        DatasetRecord r;
        r.tier = Tier::kLongTraj;
        r.tree_id = traj.tree_id;
        r.nodes = traj.node_ids;
        for (std::size_t i = 0; i < traj.steps.size(); ++i) {
          const auto& s = traj.steps[i];
          r.steps.push_back({{}, s.tuple.step_goal, s.tuple.action, s.verification, traj.digest_before(i)});
        }
        out.long_traj_original.push_back(std::move(r));
        out.warnings.push_back(std::string("tree ") + tree.tree_id + ": " + e.what());
        continue;
      }

      const std::string& instruction = summary.global_instruction;
      auto long_record = make_record(Tier::kLongTraj, traj, instruction, enrich(traj, instruction, *agents.reasoner));
      out.long_traj_original.push_back(long_record);
      if (passes(agents.evaluator->evaluate(traj, instruction), options.filter)) {
        out.long_traj.push_back(std::move(long_record));
      }

      for (auto& sub : extract_subtrajectories(traj, options.min_sublen, &summary)) {
        if (!seen_spans.insert({sub.node_ids.front(), sub.node_ids.back()}).second) continue;
        const std::string intent = *sub.instruction;
        tree_subs.push_back(make_record(Tier::kSubTraj, sub, intent, enrich(sub, intent, *agents.reasoner)));
      }
    }

    // Sub-trajectory redundancy: keep an intent only when it is not a near duplicate of a kept one.
    std::vector<std::string> intents;
    for (const auto& r : tree_subs) intents.push_back(r.instruction);
    const auto model = analytics::TfIdfModel::fit(intents);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < tree_subs.size(); ++i) {
      const auto& v = model.vector(i);
      bool redundant = false;
      for (std::size_t k : kept) {
        const auto& w = model.vector(k);
        if (v && w && analytics::reaches(analytics::TfIdfModel::cosine(*v, *w), options.redundancy_threshold)) {
          redundant = true;
          break;
        }
        if (!v && !w && intents[i] == intents[k]) redundant = true;
      }
      if (!redundant) kept.push_back(i);
    }
    for (std::size_t k : kept) out.sub_traj.push_back(tree_subs[k]);
    for (auto& r : tree_subs) out.sub_traj_original.push_back(std::move(r));
  }
  out.stats = {tier_stats(Tier::kStep, out.step_original, out.step),
               tier_stats(Tier::kSubTraj, out.sub_traj_original, out.sub_traj),
               tier_stats(Tier::kLongTraj, out.long_traj_original, out.long_traj)};
  return out;
}

Json to_json(const TierStats& s) {
  return {{"tier", std::string(to_string(s.tier))},
          {"original", s.original},
          {"filtered", s.filtered},
          {"avg_steps_original", s.avg_steps_original},
          {"avg_steps", s.avg_steps}};
}

std::string render_stats_table(std::span<const TierStats> stats) {
  std::string out = "tier        original  filtered  avg_steps\n";
  for (const auto& s : stats) {
    char line[96];
    std::snprintf(line, sizeof line, "%-10s  %8zu  %8zu  %9.2f\n", std::string(to_string(s.tier)).c_str(), s.original,
                  s.filtered, s.avg_steps);
    out += line;
  }
  return out;
}

}  // namespace cuatree
