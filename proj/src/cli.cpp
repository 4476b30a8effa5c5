#include "cuatree/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include "cuatree/analytics.hpp"
#include "cuatree/pipeline.hpp"

namespace cuatree {

namespace {

namespace fs = std::filesystem;

void log(const std::string& message) { std::cerr << "cuatree: " << message << '\n'; }

struct CommandFailure {
  int code;
  std::string message;
};

LoadedForest require_forest(const fs::path& dir) {
  LoadedForest forest;
  try {
    forest = load_forest(dir);
  } catch (const NotFoundError& e) {
    throw CommandFailure{1, e.what()};
  }
  for (const auto& w : forest.warnings) log("skipped " + w);
  if (forest.trees.empty()) throw CommandFailure{1, "no readable trees in " + dir.string()};
  return forest;
}

// Agents for post-run commands: the manifest's remote gateway when it selects one, scripted otherwise.
AgentSuite post_agents(const std::string& manifest_path, std::size_t min_span) {
  if (manifest_path.empty()) return offline_suite(min_span);
  const RunManifest m = load_manifest(manifest_path);
  return m.agents_mode == "remote" ? remote_suite(m.remote) : offline_suite(m.min_span);
}

// ---------------------------------------------------------------------------

struct ExploreArgs {
  std::string manifest;
  std::optional<int> workers;
  std::optional<int> trees;
  std::string out;
};

int cmd_explore(const ExploreArgs& a) {
  RunManifest m = load_manifest(a.manifest);
  if (a.workers) m.n_workers = *a.workers;
  if (a.trees) m.trees = *a.trees;
  if (m.n_workers < 1) throw ConfigError("--workers: must be at least 1");
  if (m.trees < 1) throw ConfigError("--trees: must be at least 1");
  const fs::path out = a.out.empty() ? m.output_dir : fs::path(a.out);
  log("exploring " + std::to_string(m.trees) + " tree(s) with " + std::to_string(m.n_workers) + " worker(s)");
  const RunResult result = explore_to_dir(m, out);
  for (const auto& w : result.warnings) log("warning: " + w);
  log("env steps " + std::to_string(result.counters.env_steps) + ", replay steps " +
      std::to_string(result.counters.replay_steps) + ", claims " + std::to_string(result.counters.claims) +
      ", corruptions " + std::to_string(result.corruptions.size()));
  log("wrote " + std::to_string(result.forest.size()) + " tree file(s) to " + out.string());
  return 0;
}

struct PostprocessArgs {
  std::string forest;
  std::string out;
  int min_dim = 2;
  int min_total = 9;
  std::size_t min_sublen = 2;
  std::optional<int> max_depth;
  std::string manifest;
};

int cmd_postprocess(const PostprocessArgs& a) {
  ExportOptions options;
  options.filter = {a.min_dim, a.min_total};
  options.min_sublen = a.min_sublen;
  const LoadedForest forest = require_forest(a.forest);
  options.max_depth = a.max_depth.value_or(forest.max_depth);
  if (options.min_sublen < 1) throw ConfigError("--min-sublen: must be at least 1");
  if (auto v = filter_policy_violation(options.filter)) throw ConfigError("--min-dim/--min-total: " + *v);
  const AgentSuite agents = post_agents(a.manifest, a.min_sublen);
  const ExportResult result = export_dataset(forest.trees, agents, options);
  for (const auto& w : result.warnings) log("warning: " + w);
  write_dataset(result, a.out);
  std::cerr << render_stats_table(result.stats);
  return 0;
}

struct DpoArgs {
  std::string forest;
  std::string out;
  int cap = 4;
  int target = 1000;
  std::uint64_t seed = 0;
  int min_dim = 2;
  int min_total = 9;
  std::string manifest;
};

int cmd_extract_dpo(const DpoArgs& a) {
  if (a.target <= 0) throw ConfigError("--target: must be positive");
  if (a.cap < 1) throw ConfigError("--cap: must be at least 1");
  const LoadedForest forest = require_forest(a.forest);
  DpoOptions options;
  options.filter = {a.min_dim, a.min_total};
  if (auto v = filter_policy_violation(options.filter)) throw ConfigError("--min-dim/--min-total: " + *v);
  options.cap_per_node = a.cap;
  options.total_target = a.target;
  options.seed = a.seed;
  options.max_depth = forest.max_depth;
  if (forest.run_info) {
    const Json& p = forest.run_info->at("manifest").at("policy");
    BranchingPolicy policy;
    policy.max_depth = p.at("max_depth").get<int>();
    policy.bound1 = p.at("bounds").at(0).get<int>();
    policy.bound2 = p.at("bounds").at(1).get<int>();
    options.bucket_bounds = phase_buckets(policy);
  }
  const DpoOutput result = extract_dpo(forest.trees, post_agents(a.manifest, 2), options);
  fs::create_directories(a.out);
  std::vector<Json> lines;
  for (const auto& p : result.pairs) lines.push_back(to_json(p));
  write_jsonl(lines, fs::path(a.out) / "pairs.jsonl");
  Json buckets = Json::object();
  for (const auto& [b, n] : result.per_bucket) buckets[std::to_string(b)] = n;
  write_json_file({{"branch_nodes", result.branch_nodes},
                   {"pairs_before_cap", result.pairs_before_cap},
                   {"pairs", result.pairs.size()},
                   {"cap_per_node", a.cap},
                   {"target", a.target},
                   {"seed", a.seed},
                   {"bucket_bounds", options.bucket_bounds},
                   {"per_bucket", std::move(buckets)}},
                  fs::path(a.out) / "dpo_stats.json");
  if (result.branch_nodes == 0) log("notice: no branch nodes found; pair file is empty");
  log("wrote " + std::to_string(result.pairs.size()) + " of " + std::to_string(result.pairs_before_cap) + " pairs");
  return 0;
}

// ---------------------------------------------------------------------------
// analyze

std::string heatmap(const std::vector<std::vector<double>>& values, const std::vector<std::string>& labels) {
  static constexpr std::string_view kShades = " .:-=+*#%@";
  std::size_t width = 0;
  for (const auto& l : labels) width = std::max(width, l.size());
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out += labels[i] + std::string(width - labels[i].size(), ' ') + " |";
    for (double v : values[i]) {
      const auto shade = static_cast<std::size_t>(std::clamp(v, 0.0, 1.0) * static_cast<double>(kShades.size() - 1));
      out += kShades[shade];
      out += kShades[shade];
    }
    out += "|\n";
  }
  return out;
}

struct AnalyzeArgs {
  std::string input;
  std::string out;
  int grid = analytics::kDefaultGrid;
  std::size_t sample_size = 500;
  std::size_t repeats = 20;
  std::uint64_t seed = 0;
  double threshold = analytics::kUniqueTaskThreshold;
};

int analyze_jaccard(const AnalyzeArgs& a) {
  const LoadedForest forest = require_forest(a.input);
  const auto m = analytics::redundancy_matrix(forest.trees, forest.render.width, forest.render.height, a.grid);
  std::vector<std::string> ids;
  for (const auto& t : forest.trees) ids.push_back(t.tree_id);
  fs::create_directories(a.out);
  write_json_file({{"trees", ids}, {"grid", a.grid}, {"matrix", m.values}, {"mean_off_diagonal", m.mean_off_diagonal}},
                  fs::path(a.out) / "jaccard.json");
  std::ofstream csv(fs::path(a.out) / "jaccard.csv", std::ios::binary);
  csv << "tree";
  for (const auto& id : ids) csv << ',' << id;
  csv << '\n';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    csv << ids[i];
    for (double v : m.values[i]) {
      char cell[32];
      std::snprintf(cell, sizeof cell, ",%.6f", v);
      csv << cell;
    }
    csv << '\n';
  }
  std::ofstream(fs::path(a.out) / "jaccard.txt", std::ios::binary) << heatmap(m.values, ids);
  return 0;
}

std::vector<std::string> step_goals(std::span<const ExplorationTree> forest) {
  std::vector<std::string> goals;
  for (const auto& t : forest) {
    for (const auto& [id, n] : t.nodes) {
      if (n.incoming && n.verification && n.incoming->action.kind != ActionKind::kTerminate) {
        goals.push_back(n.incoming->step_goal);
      }
    }
  }
  return goals;
}

int analyze_ttr(const AnalyzeArgs& a) {
  const LoadedForest forest = require_forest(a.input);
  const auto goals = step_goals(forest.trees);
  if (goals.empty()) throw CommandFailure{1, "forest has no executed steps"};
  const auto values = analytics::ttr_resampled(goals, a.sample_size, a.repeats, a.seed);
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  fs::create_directories(a.out);
  write_json_file({{"goals", goals.size()},
                   {"sample_size", std::min(a.sample_size, goals.size())},
                   {"repeats", a.repeats},
                   {"seed", a.seed},
                   {"values", values},
                   {"mean", mean}},
                  fs::path(a.out) / "ttr.json");
  return 0;
}

int analyze_unique_tasks(const AnalyzeArgs& a) {
  if (!(a.threshold > 0.0 && a.threshold <= 1.0)) throw ConfigError("--threshold: must lie in (0, 1]");
  std::vector<std::string> descriptions;
  if (fs::is_regular_file(a.input)) {
    for (const auto& line : read_jsonl(a.input)) descriptions.push_back(json_required<std::string>(line, "instruction"));
  } else {
    const LoadedForest forest = require_forest(a.input);
    const AgentSuite agents = offline_suite();
    for (const auto& tree : forest.trees) {
      for (const auto& traj : collect_trajectories(tree, forest.max_depth)) {
        try {
          descriptions.push_back(agents.summarizer->summarize(traj).global_instruction);
        } catch (const EmptySummaryError&) {
        }
      }
    }
  }
  if (descriptions.empty()) throw CommandFailure{1, "no task descriptions in " + a.input};
  const auto count = analytics::unique_task_count(descriptions, a.threshold);
  for (std::size_t i : count.skipped) log("warning: description " + std::to_string(i) + " has no tokens");
  fs::create_directories(a.out);
  write_json_file({{"threshold", a.threshold},
                   {"descriptions", descriptions.size()},
                   {"unique", count.cumulative.empty() ? 0 : count.cumulative.back()},
                   {"cumulative", count.cumulative},
                   {"skipped", count.skipped}},
                  fs::path(a.out) / "unique_tasks.json");
  return 0;
}

int analyze_depth_hist(const AnalyzeArgs& a) {
  const LoadedForest forest = require_forest(a.input);
  const auto hist = analytics::branching_histogram(forest.trees);
  Json j = Json::object();
  std::string text = "depth  branching\n";
  for (const auto& [depth, value] : hist) {
    j[std::to_string(depth)] = value;
    char line[64];
    std::snprintf(line, sizeof line, "%5d  %9.4f\n", depth, value);
    text += line;
  }
  fs::create_directories(a.out);
  write_json_file({{"branching_by_depth", std::move(j)}}, fs::path(a.out) / "depth_hist.json");
  std::ofstream(fs::path(a.out) / "depth_hist.txt", std::ios::binary) << text;
  return 0;
}

int analyze_efficiency(const AnalyzeArgs& a) {
  const LoadedForest forest = require_forest(a.input);
  Json trees = Json::array();
  for (const auto& t : forest.trees) trees.push_back({{"tree_id", t.tree_id}, {"curve", reuse_curve(t, forest.max_depth)}});
  Json j;
  try {
    const auto s = exploration_stats(forest.trees, forest.max_depth);
    j["trajectories"] = s.trajectories;
    j["unique_expansions"] = s.unique_expansions;
    j["avg_expansions_per_trajectory"] = s.avg_expansions_per_trajectory;
    j["mean_trajectory_length"] = s.mean_trajectory_length;
  } catch (const UndefinedAverageError& e) {
    throw CommandFailure{1, e.what()};
  }
  j["max_depth"] = forest.max_depth;
  j["trees"] = std::move(trees);
  fs::create_directories(a.out);
  write_json_file(j, fs::path(a.out) / "efficiency.json");
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_validate(const std::vector<std::string>& paths) {
  int code = 0;
  for (const auto& p : paths) {
    const fs::path path(p);
    if (fs::is_directory(path)) {
      const LoadedForest forest = load_forest(path);
      for (const auto& w : forest.warnings) log("invalid " + w);
      if (!forest.warnings.empty() || forest.trees.empty()) code = std::max(code, 1);
      log(p + ": " + std::to_string(forest.trees.size()) + " valid tree(s)");
      continue;
    }
    if (p.ends_with(".tree.json")) {
      const auto problems = validate(read_tree(path));
      for (const auto& v : problems) log(p + ": " + v);
      if (!problems.empty()) code = std::max(code, 1);
      continue;
    }
    const Json j = read_json_file(path);
    if (j.contains("screens")) {
      const auto problems = validate(sim_spec_from_json(j));
      for (const auto& v : problems) log(p + ": " + v);
      if (!problems.empty()) code = std::max(code, 1);
      continue;
    }
    try {
      prepare_run(load_manifest(path));
      log(p + ": manifest ok");
    } catch (const ConfigError& e) {
      log(p + ": " + e.what());
      code = 2;
    }
  }
  return code;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Tree-structured GUI trajectory exploration"};
  app.require_subcommand(1);

  ExploreArgs explore;
  auto* ex = app.add_subcommand("explore", "Explore trees described by a manifest");
  ex->add_option("manifest", explore.manifest, "Run manifest")->required();
  ex->add_option("--workers", explore.workers, "Worker threads");
  ex->add_option("--trees", explore.trees, "Number of trees");
  ex->add_option("--out", explore.out, "Output directory (default: manifest output_dir)");

  PostprocessArgs post;
  auto* pp = app.add_subcommand("postprocess", "Build STEP, SUB_TRAJ and LONG_TRAJ datasets");
  pp->add_option("forest", post.forest, "Forest directory")->required();
  pp->add_option("--out", post.out, "Dataset directory")->required();
  pp->add_option("--min-dim", post.min_dim, "Minimum score per dimension");
  pp->add_option("--min-total", post.min_total, "Minimum total score");
  pp->add_option("--min-sublen", post.min_sublen, "Minimum sub-trajectory length");
  pp->add_option("--max-depth", post.max_depth, "Depth limit of the run (default: from run.json)");
  pp->add_option("--manifest", post.manifest, "Manifest selecting the agents");

  DpoArgs dpo;
  auto* dp = app.add_subcommand("extract-dpo", "Mine preference pairs from sibling branches");
  dp->add_option("forest", dpo.forest, "Forest directory")->required();
  dp->add_option("--out", dpo.out, "Output directory")->required();
  dp->add_option("--cap", dpo.cap, "Pairs per branch node");
  dp->add_option("--target", dpo.target, "Total pairs");
  dp->add_option("--seed", dpo.seed, "Sampling seed");
  dp->add_option("--min-dim", dpo.min_dim, "Minimum score per dimension of kept trajectories");
  dp->add_option("--min-total", dpo.min_total, "Minimum total score of kept trajectories");
  dp->add_option("--manifest", dpo.manifest, "Manifest selecting the agents");

  AnalyzeArgs analyze;
  auto* an = app.add_subcommand("analyze", "Diversity and efficiency metrics");
  an->require_subcommand(1);
  auto add_common = [&](CLI::App* sub, const char* input_help) {
    sub->add_option("input", analyze.input, input_help)->required();
    sub->add_option("--out", analyze.out, "Report directory")->required();
    return sub;
  };
  auto* jac = add_common(an->add_subcommand("jaccard", "Pairwise action-space overlap"), "Forest directory");
  jac->add_option("--grid", analyze.grid, "Quantization grid");
  auto* tt = add_common(an->add_subcommand("ttr", "Type-token ratio of step goals"), "Forest directory");
  tt->add_option("--sample-size", analyze.sample_size, "Goals per sample");
  tt->add_option("--repeats", analyze.repeats, "Number of samples");
  tt->add_option("--seed", analyze.seed, "Sampling seed");
  auto* ut = add_common(an->add_subcommand("unique-tasks", "Cumulative unique task count"),
                        "Forest directory or dataset .jsonl");
  ut->add_option("--threshold", analyze.threshold, "Cosine threshold");
  auto* dh = add_common(an->add_subcommand("depth-hist", "Mean branching factor per depth"), "Forest directory");
  auto* ef = add_common(an->add_subcommand("efficiency", "Expansions per trajectory"), "Forest directory");

  std::vector<std::string> validate_paths;
  auto* va = app.add_subcommand("validate", "Check manifests, sim specs, tree files or forest directories");
  va->add_option("paths", validate_paths, "Paths to check")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*ex) return cmd_explore(explore);
    if (*pp) return cmd_postprocess(post);
    if (*dp) return cmd_extract_dpo(dpo);
    if (*jac) return analyze_jaccard(analyze);
    if (*tt) return analyze_ttr(analyze);
    if (*ut) return analyze_unique_tasks(analyze);
    if (*dh) return analyze_depth_hist(analyze);
    if (*ef) return analyze_efficiency(analyze);
    if (*va) return cmd_validate(validate_paths);
  } catch (const CommandFailure& f) {
    log(f.message);
    return f.code;
  } catch (const ConfigError& e) {
    log(std::string("config error: ") + e.what());
    return 2;
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return 1;
  }
  return 2;
}

}  // namespace cuatree
