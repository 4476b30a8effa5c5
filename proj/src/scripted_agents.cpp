#include "cuatree/scripted_agents.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "cuatree/error.hpp"
#include "cuatree/hashing.hpp"
#include "cuatree/text.hpp"

namespace cuatree {

namespace {

struct Candidate {
  ExplorationTuple tuple;
  std::string target;  // widget id or shortcut chord; unique per (kind, target)
  double weight = 1.0;  // on-screen area, drives the biased persona
};

std::string quoted(const std::string& s) { return "'" + s + "'"; }

std::string var_or_empty(const ScreenState& state, const std::string& name) {
  auto it = state.vars.find(name);
  return it == state.vars.end() ? std::string() : it->second;
}

StatePredicate predicate_for(const ScreenState& state, const Transition& t,
                             const std::optional<std::string>& expected_goto) {
  StatePredicate p;
  p.screen = expected_goto ? *expected_goto : t.goto_screen.value_or(state.screen);
  p.vars = t.set;
  return p;
}

std::string describe_outcome(const StatePredicate& p, const ScreenState& state, const std::string& label) {
  if (p.screen && *p.screen != state.screen) return "The " + quoted(*p.screen) + " screen is displayed";
  if (!p.vars.empty()) return quoted(label) + " updates the current " + quoted(state.screen) + " screen";
  return "The " + quoted(state.screen) + " screen reflects " + quoted(label);
}

std::uint64_t context_seed(const ExplorationContext& ctx) {
  return hash_combine(hash_combine(ctx.seed, ctx.observation.digest()), ctx.history.size());
}

}  // namespace

std::string_view to_string(Persona persona) { return persona == Persona::kBiased ? "biased" : "diverse"; }

Persona persona_from_string(std::string_view name) {
  if (name == "biased") return Persona::kBiased;
  if (name == "diverse") return Persona::kDiverse;
  throw ConfigError("unknown persona '" + std::string(name) + "' (expected biased or diverse)");
}

ScriptedExplorer::ScriptedExplorer(std::shared_ptr<const SimAppSpec> spec, ScriptedExplorerOptions options)
    : spec_(std::move(spec)), options_(options) {
  if (!spec_) throw ContractError("ScriptedExplorer needs a sim spec");
}

std::vector<ExplorationTuple> ScriptedExplorer::propose(const ExplorationContext& ctx) const {
  if (ctx.k_max < 1) throw ContractError("k_max must be at least 1");
  const std::uint64_t seed = context_seed(ctx);
  const std::string first_goal = ctx.history.empty() ? std::string() : ctx.history.front().step_goal;

  auto make_tuple = [&](Action action, std::string goal, std::string expected, std::optional<StatePredicate> pred,
                        std::string rationale) {
    ExplorationTuple t;
    t.action = std::move(action);
    t.final_goal_hypothesis =
        "Complete a " + ctx.category + " task that starts by: " + (first_goal.empty() ? goal : first_goal);
    t.step_goal = std::move(goal);
    t.expected_observation = {std::move(expected), std::move(pred)};
    t.rationale = std::move(rationale);
    return t;
  };

  std::vector<Candidate> candidates;
  const Screen* screen = nullptr;
  if (const auto& state = ctx.observation.state()) {
    screen = &spec_->screen(state->screen);
    const std::string focus = var_or_empty(*state, "_focus");
    const std::string selected = var_or_empty(*state, "_selected");
    for (const auto& w : screen->widgets) {
      if (!is_visible(w, *state)) continue;
      const Point c = w.box.center();
      const auto area = static_cast<double>(w.box.area());
      const std::string why = quoted(w.label) + " is a visible " + std::string(to_string(w.kind)) + " on the " +
                              quoted(state->screen) + " screen";
      switch (w.kind) {
        case WidgetKind::kButton: {
          auto pred = predicate_for(*state, w.transition, w.expected_goto);
          auto expected = describe_outcome(pred, *state, w.label);
          candidates.push_back({make_tuple(Action::click(c.x, c.y), w.goal.value_or("Click " + quoted(w.label)),
                                           std::move(expected), std::move(pred), why),
                                w.id, area});
          break;
        }
        case WidgetKind::kIcon: {
          if (selected != w.id) {
            StatePredicate sel{state->screen, {{"_selected", w.id}}};
            candidates.push_back({make_tuple(Action::click(c.x, c.y), "Select the " + quoted(w.label) + " item",
                                             quoted(w.label) + " is highlighted", sel, why),
                                  w.id, area});
          }
          auto pred = predicate_for(*state, w.transition, w.expected_goto);
          auto expected = describe_outcome(pred, *state, w.label);
          candidates.push_back(
              {make_tuple(Action::double_click(c.x, c.y), w.goal.value_or("Open " + quoted(w.label)),
                          std::move(expected), std::move(pred), why),
               w.id, area});
          break;
        }
        case WidgetKind::kTextField: {
          if (focus != w.id) {
            StatePredicate foc{state->screen, {{"_focus", w.id}}};
            candidates.push_back({make_tuple(Action::click(c.x, c.y), "Focus the " + quoted(w.label) + " field",
                                             "A cursor appears in " + quoted(w.label), foc, why),
                                  w.id, area});
          } else {
            const std::string value =
                w.samples.empty() ? std::string("sample text")
                                  : w.samples[hash_combine(seed, hash_string(w.id)) % w.samples.size()];
            auto pred = predicate_for(*state, w.transition, w.expected_goto);
            pred.vars[w.id] = value;
            candidates.push_back(
                {make_tuple(Action::type_text(value),
                            w.goal ? *w.goal + " (" + quoted(value) + ")"
                                   : "Type " + quoted(value) + " into " + quoted(w.label),
                            quoted(w.label) + " shows " + quoted(value), std::move(pred), why),
                 w.id, area});
          }
          break;
        }
        case WidgetKind::kScrollArea: {
          const std::string cur = var_or_empty(*state, w.id + ".scroll");
          const int next = ((cur.empty() ? 0 : std::stoi(cur)) + 1) % w.pages;
          StatePredicate pred{state->screen, {{w.id + ".scroll", std::to_string(next)}}};
          candidates.push_back({make_tuple(Action::scroll(c.x, c.y), w.goal.value_or("Scroll through " + quoted(w.label)),
                                           "More of " + quoted(w.label) + " becomes visible", pred, why),
                                w.id, area});
          break;
        }
      }
    }
    for (const auto& k : screen->shortcuts) {
      auto pred = predicate_for(*state, k.transition, k.expected_goto);
      auto expected = describe_outcome(pred, *state, k.keys);
      candidates.push_back({make_tuple(Action::key(k.keys), k.goal.value_or("Press " + quoted(k.keys)),
                                       std::move(expected), std::move(pred),
                                       "Keyboard shortcut " + quoted(k.keys) + " is available on this screen"),
                            "key:" + k.keys, 16.0});
    }
  }

  std::mt19937_64 rng(seed);
  auto unit = [&] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };

  if (options_.persona == Persona::kBiased) {
    // Weighted sampling without replacement: sort by u^(1/w), larger first.
    std::vector<std::pair<double, std::size_t>> keys;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      keys.emplace_back(std::log(unit()) / candidates[i].weight, i);
    }
    std::stable_sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<Candidate> ordered;
    for (const auto& [key, i] : keys) ordered.push_back(std::move(candidates[i]));
    candidates = std::move(ordered);
  } else {
    std::set<std::string> seen;
    for (const auto& seq : ctx.prefix_memory_view) {
      if (!seq.empty()) seen.insert(text::normalize(seq.back()));
    }
    std::vector<Candidate> fresh;
    std::vector<Candidate> stale;
    for (auto& c : candidates) {
      (seen.contains(text::normalize(c.tuple.step_goal)) ? stale : fresh).push_back(std::move(c));
    }
    for (std::size_t i = fresh.size(); i > 1; --i) std::swap(fresh[i - 1], fresh[rng() % i]);
    for (std::size_t i = stale.size(); i > 1; --i) std::swap(stale[i - 1], stale[rng() % i]);
    // Memory-aware: novel goals first, already-covered goals only as a fallback.
    candidates = std::move(fresh);
    if (candidates.empty()) candidates = std::move(stale);
  }

  std::size_t limit = static_cast<std::size_t>(ctx.k_max);
  if (screen && screen->focus_flow) limit = 1;

  std::vector<ExplorationTuple> out;
  for (std::size_t i = 0; i < candidates.size() && out.size() < limit; ++i) out.push_back(std::move(candidates[i].tuple));

  if (!ctx.history.empty()) {
    const bool completion = screen && screen->completion;
    const bool stuck = out.empty();
    const bool chance = options_.terminate_permille > 0 &&
                        static_cast<int>(hash_combine(seed, 0x7465726dULL) % 1000) < options_.terminate_permille;
    if (completion || stuck || chance) {
      ExplorationTuple stop = make_tuple(Action::terminate(), "Finish the task", "", std::nullopt,
                                         completion ? "The task loop reached a completion screen"
                                                    : "The explored sequence forms a complete task");
      if (completion || stuck) {
        out.insert(out.begin(), std::move(stop));
        if (out.size() > limit) out.resize(limit);
      } else if (out.size() < limit) {
        out.push_back(std::move(stop));
      } else {
        out.back() = std::move(stop);
      }
    }
  }

  if (out.empty()) {
    out.push_back(make_tuple(Action::wait(1.0), "Wait for the interface to respond",
                             "The interface finishes loading", std::nullopt, "No actionable element is visible"));
  }
  return out;
}

VerificationResult ScriptedVerifier::verify(const Observation& previous, const ExplorationTuple& tuple,
                                            const Observation& actual) const {
  if (tuple.action.kind == ActionKind::kTerminate) throw ContractError("terminate edges are not verified");
  if (previous.digest() == actual.digest()) {
    return {ResultType::kNoChange, "The screen did not change after " + std::string(to_string(tuple.action.kind)) +
                                       "; expected: " + tuple.expected_observation.text + "."};
  }
  const auto& predicate = tuple.expected_observation.predicate;
  if (!predicate) {
    return {ResultType::kSuccess, "The screen changed as expected: " + tuple.expected_observation.text + "."};
  }
  if (actual.state() && predicate->satisfied_by(*actual.state())) {
    return {ResultType::kSuccess,
            "The operation produced the expected outcome: " + tuple.expected_observation.text + "."};
  }
  const std::string landed = actual.state() ? quoted(actual.state()->screen) : std::string("an unknown state");
  return {ResultType::kUnexpectedChange, "The screen changed but does not match the expectation (" +
                                             tuple.expected_observation.text + "); observed " + landed + "."};
}

TaskSummary ScriptedSummarizer::summarize(const Trajectory& trajectory) const {
  if (trajectory.steps.empty()) throw ContractError("cannot summarize an empty trajectory");
  auto counts = [](const TrajectoryStep& s) {
    return s.verification.result_type == ResultType::kSuccess && s.tuple.action.kind != ActionKind::kTerminate;
  };
  std::vector<std::string> goals;
  for (const auto& s : trajectory.steps) {
    if (counts(s)) goals.push_back(s.tuple.step_goal);
  }
  if (goals.empty()) throw EmptySummaryError("trajectory in " + trajectory.tree_id + " has no successful step");

  TaskSummary summary;
  summary.global_instruction = enumerate_goals(goals);
  const auto& steps = trajectory.steps;
  std::size_t i = 0;
  while (i < steps.size()) {
    if (steps[i].verification.result_type != ResultType::kSuccess) {
      ++i;
      continue;
    }
    std::size_t j = i;
    std::vector<std::string> run_goals;
    while (j < steps.size() && steps[j].verification.result_type == ResultType::kSuccess) {
      if (counts(steps[j])) run_goals.push_back(steps[j].tuple.step_goal);
      ++j;
    }
    if (j - i >= min_span_length_ && !run_goals.empty()) {
      summary.sub_spans.push_back({i, j - 1, enumerate_goals(run_goals)});
    }
    i = j;
  }
  return summary;
}

QualityScore ScriptedEvaluator::evaluate(const Trajectory& trajectory, std::string_view instruction) const {
  const std::size_t n = trajectory.steps.size();
  if (n == 0) return {};
  auto penalty = [n](std::size_t count) { return static_cast<int>((6 * count + n - 1) / n); };
  auto clamp3 = [](int v) { return std::clamp(v, 0, 3); };

  std::size_t no_change = 0;
  std::size_t unexpected = 0;
  std::size_t oscillations = 0;
  std::set<std::string> goal_tokens;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& s = trajectory.steps[t];
    if (s.verification.result_type == ResultType::kNoChange) ++no_change;
    if (s.verification.result_type == ResultType::kUnexpectedChange) ++unexpected;
    if (t >= 2 && s.observation_digest == trajectory.steps[t - 2].observation_digest &&
        s.observation_digest != trajectory.steps[t - 1].observation_digest) {
      ++oscillations;
    }
    if (s.tuple.action.kind != ActionKind::kTerminate) {
      for (auto& tok : text::tokenize(s.tuple.step_goal)) goal_tokens.insert(std::move(tok));
    }
  }
  const auto instr = text::tokenize(instruction);
  const std::set<std::string> instr_tokens(instr.begin(), instr.end());
  std::size_t covered = 0;
  for (const auto& tok : goal_tokens) covered += instr_tokens.contains(tok) ? 1 : 0;

  QualityScore q;
  q.utility = goal_tokens.empty() ? 0 : clamp3(static_cast<int>(3 * covered / goal_tokens.size()));
  q.efficiency = clamp3(3 - penalty(no_change));
  q.consistency = clamp3(3 - penalty(unexpected));
  q.coherence = clamp3(3 - penalty(oscillations));
  return q;
}

ReasoningChain ScriptedReasoner::synthesize_reasoning(std::string_view goal, const ReasoningStep& step,
                                                      const std::vector<HistoryEntry>& history,
                                                      const std::vector<std::string>& future) const {
  if (goal.empty()) throw ContractError("reasoning needs a nonempty goal");
  const auto& t = step.tuple;
  ReasoningChain chain;
  chain.observation = "The current screen (frame " + to_hex(step.observation_digest).substr(0, 8) + ") shows the state " +
                      (history.empty() ? std::string("at the start of the task.")
                                       : "reached after " + quoted(history.back().step_goal) + ".");
  if (history.empty()) {
    chain.progress = "This is the first step of the task.";
  } else {
    chain.progress = "Completed " + std::to_string(history.size()) + " step(s) so far; the last step " +
                     quoted(history.back().step_goal) + " ended with " +
                     std::string(to_string(history.back().result_type)) + ".";
  }
  if (future.empty()) {
    chain.plan = "This step completes the task: " + t.step_goal + ".";
  } else {
    chain.plan = "Next I will " + t.step_goal + ", then continue with " + quoted(future.front());
    chain.plan += future.size() > 1 ? " and " + std::to_string(future.size() - 1) + " further step(s)." : ".";
  }
  const std::string outcome =
      t.expected_observation.text.empty() ? std::string("no visible change") : t.expected_observation.text;
  chain.impact = "Executing " + std::string(to_string(t.action.kind)) + " should lead to: " + outcome +
                 "; this moves toward \"" + std::string(goal) + "\".";
  return chain;
}

AgentSuite scripted_suite(std::shared_ptr<const SimAppSpec> spec, ScriptedExplorerOptions options,
                          std::size_t min_span_length) {
  AgentSuite suite;
  suite.explorer = std::make_shared<ScriptedExplorer>(std::move(spec), options);
  suite.verifier = std::make_shared<ScriptedVerifier>();
  suite.summarizer = std::make_shared<ScriptedSummarizer>(min_span_length);
  suite.evaluator = std::make_shared<ScriptedEvaluator>();
  suite.reasoner = std::make_shared<ScriptedReasoner>();
  return suite;
}

}  // namespace cuatree
