#include "cuatree/pipeline.hpp"

#include <cstdlib>
#include <fstream>

#include "cuatree/analytics.hpp"
#include "cuatree/error.hpp"
#include "cuatree/remote_env.hpp"

namespace cuatree {

namespace {

// Typed access to one manifest object; errors name the dotted field path.
class Fields {
 public:
  Fields(const Json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) fail("", "must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  T get(const char* key, T fallback) const {
    return has(key) ? required<T>(key) : fallback;
  }

  template <typename T>
  T required(const char* key) const {
    if (!has(key)) fail(key, "is required");
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(key, "has the wrong type");
    }
  }

  Fields object(const char* key) const { return {j_.at(key), path(key) + "."}; }

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    std::string p = path(key);
    if (!p.empty() && p.back() == '.') p.pop_back();
    throw ConfigError((p.empty() ? std::string("manifest") : p) + ": " + message);
  }

 private:
  std::string path(const std::string& key) const { return prefix_ + key; }

  const Json& j_;
  std::string prefix_;
};

void check(const Fields& f, const char* key, bool ok, const std::string& message) {
  if (!ok) f.fail(key, message);
}

}  // namespace

RunManifest parse_manifest(const Json& j, const std::filesystem::path& base_dir) {
  const Fields f(j, "");
  RunManifest m;
  m.schema_version = f.required<int>("schema_version");
  check(f, "schema_version", m.schema_version == kManifestSchemaVersion,
        "unsupported version " + std::to_string(m.schema_version));
  m.seed = f.required<std::uint64_t>("seed");

  if (f.has("sim_spec")) {
    const std::filesystem::path p = f.required<std::string>("sim_spec");
    m.sim_spec = p.is_absolute() ? p : base_dir / p;
    check(f, "sim_spec", std::filesystem::exists(m.sim_spec), "file " + m.sim_spec.string() + " not found");
  }
  if (f.has("environment")) {
    const Fields env = f.object("environment");
    m.environment_endpoint = env.required<std::string>("endpoint");
    check(env, "endpoint", m.environment_endpoint.find(':') != std::string::npos, "expected host:port");
  }
  if (m.sim_spec.empty() && m.environment_endpoint.empty()) f.fail("sim_spec", "either sim_spec or environment is required");

  if (f.has("agents")) {
    const Fields a = f.object("agents");
    m.agents_mode = a.get<std::string>("mode", m.agents_mode);
    check(a, "mode", m.agents_mode == "scripted" || m.agents_mode == "remote", "must be scripted or remote");
    m.remote.endpoint = a.get<std::string>("endpoint", "");
    m.remote.timeout_ms = a.get<int>("timeout_ms", m.remote.timeout_ms);
    m.remote.max_retries = a.get<int>("max_retries", m.remote.max_retries);
    m.remote.max_in_flight = a.get<int>("max_in_flight", m.remote.max_in_flight);
  }
  if (m.agents_mode == "scripted" && m.sim_spec.empty()) f.fail("agents.mode", "scripted agents need sim_spec");

  try {
    m.explorer.persona = persona_from_string(f.get<std::string>("persona", "diverse"));
  } catch (const Error& e) {
    f.fail("persona", e.what());
  }
  m.explorer.terminate_permille = f.get<int>("terminate_permille", 0);
  check(f, "terminate_permille", m.explorer.terminate_permille >= 0 && m.explorer.terminate_permille <= 1000,
        "must lie in 0..1000");

  m.n_workers = f.get<int>("n_workers", m.n_workers);
  check(f, "n_workers", m.n_workers >= 1, "must be at least 1");
  m.trees = f.get<int>("trees", m.trees);
  check(f, "trees", m.trees >= 1, "must be at least 1");
  m.categories = f.get<std::vector<std::string>>("categories", {});
  m.world_knowledge = f.get<std::map<std::string, std::string>>("world_knowledge", {});
  if (f.has("assets")) {
    const Json& list = j.at("assets");
    check(f, "assets", list.is_array(), "must be a list");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const Fields a(list[i], "assets[" + std::to_string(i) + "].");
      m.assets.push_back({a.required<std::string>("name"), a.required<std::string>("kind"),
                          a.required<std::string>("ref")});
    }
  }
  m.noise_amplitude = f.get<double>("noise_amplitude", 0.0);
  check(f, "noise_amplitude", m.noise_amplitude >= 0.0, "must be non-negative");
  if (f.has("render")) {
    const Fields r = f.object("render");
    m.render = RenderSpec{r.required<int>("width"), r.required<int>("height"), r.get<int>("channels", 1)};
  }

  if (f.has("policy")) {
    const Fields p = f.object("policy");
    m.policy.max_depth = p.get<int>("max_depth", m.policy.max_depth);
    if (p.has("bounds")) {
      const auto b = p.required<std::vector<int>>("bounds");
      check(p, "bounds", b.size() == 2, "expected two depth bounds");
      m.policy.bound1 = b[0];
      m.policy.bound2 = b[1];
    }
    if (p.has("widths")) {
      const auto w = p.required<std::vector<int>>("widths");
      check(p, "widths", w.size() == 3, "expected three widths");
      m.policy.widths = {w[0], w[1], w[2]};
    }
    if (auto v = policy_violation(m.policy)) f.fail("policy", *v);
  }
  if (f.has("memory")) {
    const Fields mem = f.object("memory");
    m.memory.enabled = mem.get<bool>("enabled", m.memory.enabled);
    m.memory.prefix_length = mem.get<int>("prefix_length", m.memory.prefix_length);
    check(mem, "prefix_length", m.memory.prefix_length >= 1, "must be at least 1");
    m.memory.threshold = mem.get<double>("threshold", m.memory.threshold);
    check(mem, "threshold", m.memory.threshold > 0.0 && m.memory.threshold <= 1.0, "must lie in (0, 1]");
    try {
      m.memory.mode = similarity_mode_from_string(mem.get<std::string>("mode", "exact"));
    } catch (const Error& e) {
      mem.fail("mode", e.what());
    }
  }
  if (f.has("replay")) {
    const Fields r = f.object("replay");
    m.replay.epsilon = r.get<double>("epsilon", m.replay.epsilon);
    check(r, "epsilon", m.replay.epsilon >= 0.0, "must be non-negative");
    m.replay.max_restore_attempts = r.get<int>("attempts", m.replay.max_restore_attempts);
    check(r, "attempts", m.replay.max_restore_attempts >= 1, "must be at least 1");
  }
  if (f.has("stop")) {
    const Fields s = f.object("stop");
    m.max_consecutive_failures = s.get<int>("max_consecutive_failures", m.max_consecutive_failures);
    check(s, "max_consecutive_failures", m.max_consecutive_failures >= 1, "must be at least 1");
  }
  if (f.has("output_dir")) {
    const std::filesystem::path p = f.required<std::string>("output_dir");
    m.output_dir = p.is_absolute() ? p : base_dir / p;
  } else {
    m.output_dir = base_dir / "out";
  }
  m.checkpoint_interval = f.get<int>("checkpoint_interval", m.checkpoint_interval);
  check(f, "checkpoint_interval", m.checkpoint_interval >= 1, "must be at least 1");
  m.min_span = f.get<std::size_t>("min_span", m.min_span);
  check(f, "min_span", m.min_span >= 1, "must be at least 1");
  return m;
}

RunManifest load_manifest(const std::filesystem::path& path) {
  Json j;
  try {
    j = read_json_file(path);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  RunManifest m = parse_manifest(j, path.parent_path());
  if (const char* url = std::getenv("REMOTE_AGENT_URL"); url && *url) m.remote.endpoint = url;
  if (m.agents_mode == "remote") {
    if (auto v = remote_agent_options_violation(m.remote)) throw ConfigError("agents.endpoint: " + *v);
  }
  return m;
}

Json to_json(const RunManifest& m) {
  Json j;
  j["schema_version"] = m.schema_version;
  if (!m.sim_spec.empty()) j["sim_spec"] = m.sim_spec.filename().string();
  if (!m.environment_endpoint.empty()) j["environment"] = {{"endpoint", m.environment_endpoint}};
  j["agents"] = {{"mode", m.agents_mode}};
  j["persona"] = std::string(to_string(m.explorer.persona));
  j["terminate_permille"] = m.explorer.terminate_permille;
  j["seed"] = m.seed;
  j["trees"] = m.trees;
  j["categories"] = m.categories;
  j["noise_amplitude"] = m.noise_amplitude;
  j["policy"] = {{"max_depth", m.policy.max_depth},
                 {"bounds", {m.policy.bound1, m.policy.bound2}},
                 {"widths", m.policy.widths}};
  j["memory"] = {{"enabled", m.memory.enabled},
                 {"prefix_length", m.memory.prefix_length},
                 {"threshold", m.memory.threshold},
                 {"mode", std::string(to_string(m.memory.mode))}};
  j["replay"] = {{"epsilon", m.replay.epsilon}, {"attempts", m.replay.max_restore_attempts}};
  j["stop"] = {{"max_consecutive_failures", m.max_consecutive_failures}};
  j["checkpoint_interval"] = m.checkpoint_interval;
  j["min_span"] = m.min_span;
  return j;
}

PreparedRun prepare_run(const RunManifest& m) {
  PreparedRun run;
  if (!m.sim_spec.empty()) {
    try {
      run.spec = std::make_shared<const SimAppSpec>(load_sim_spec(m.sim_spec));
    } catch (const Error& e) {
      throw ConfigError(std::string("sim_spec: ") + e.what());
    }
  }
  run.render = m.render.value_or(run.spec ? run.spec->render : RenderSpec{});

  std::vector<std::string> categories = m.categories;
  if (categories.empty() && run.spec) {
    for (const auto& c : run.spec->categories) categories.push_back(c.id);
  }
  if (categories.empty()) throw ConfigError("categories: at least one category is required");
  for (const auto& c : categories) {
    if (run.spec && !run.spec->category(c)) throw ConfigError("categories: unknown category '" + c + "'");
  }

  EngineConfig& e = run.engine;
  e.policy = m.policy;
  e.stop = {m.policy.max_depth, m.max_consecutive_failures};
  e.replay = m.replay;
  e.novelty = m.memory.enabled;
  e.n_workers = m.n_workers;
  e.checkpoint_interval = m.checkpoint_interval;
  for (int i = 0; i < m.trees; ++i) {
    const std::string& category = categories[static_cast<std::size_t>(i) % categories.size()];
    char id[16];
    std::snprintf(id, sizeof id, "%03d", i);
    TreeJob job;
    job.tree_id = category + "-" + id;
    job.env = {category, m.assets, m.seed + static_cast<std::uint64_t>(i), m.noise_amplitude, run.render};
    if (auto it = m.world_knowledge.find(category); it != m.world_knowledge.end()) {
      job.world_knowledge = it->second;
    } else if (run.spec) {
      job.world_knowledge = run.spec->category(category)->knowledge;
    }
    e.trees.push_back(std::move(job));
  }
  if (auto v = engine_config_violation(e)) throw ConfigError(*v);

  if (!m.environment_endpoint.empty()) {
    const auto colon = m.environment_endpoint.rfind(':');
    const std::string host = m.environment_endpoint.substr(0, colon);
    int port = 0;
    try {
      port = std::stoi(m.environment_endpoint.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("environment.endpoint: bad port");
    }
    run.factory = [host, port] {
      return std::make_unique<RemoteEnvironment>(
          [host, port] { return FdStream::connect_tcp(host, static_cast<std::uint16_t>(port)); });
    };
  } else {
    run.factory = [spec = run.spec] { return std::make_unique<SimEnvironment>(spec); };
  }

  if (m.agents_mode == "remote") {
    run.agents = remote_suite(m.remote);
  } else {
    run.agents = scripted_suite(run.spec, m.explorer, m.min_span);
  }
  return run;
}

std::string tree_file_name(const std::string& tree_id) { return tree_id + ".tree.json"; }

void write_forest(std::span<const ExplorationTree> forest, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& t : forest) write_tree(t, dir / tree_file_name(t.tree_id));
}

LoadedForest load_forest(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw NotFoundError("forest directory " + dir.string() + " not found");
  LoadedForest out;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.ends_with(".tree.json")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    try {
      ExplorationTree tree = read_tree(file);
      if (auto problems = validate(tree); !problems.empty()) {
        out.warnings.push_back(file.filename().string() + ": " + problems.front());
        continue;
      }
      out.trees.push_back(std::move(tree));
    } catch (const Error& e) {
      out.warnings.push_back(file.filename().string() + ": " + e.what());
    }
  }
  if (std::filesystem::exists(dir / "run.json")) {
    try {
      out.run_info = read_json_file(dir / "run.json");
      const Json& info = *out.run_info;
      out.max_depth = info.at("manifest").at("policy").at("max_depth").get<int>();
      const Json& r = info.at("render");
      out.render = {r.at("width").get<int>(), r.at("height").get<int>(), r.at("channels").get<int>()};
    } catch (const std::exception& e) {
      out.warnings.push_back(std::string("run.json: ") + e.what());
      out.run_info.reset();
    }
  }
  return out;
}

Json run_info(const RunManifest& manifest, const PreparedRun& prepared, const RunResult& result) {
  Json trees = Json::array();
  const int depth = prepared.engine.stop.max_depth;
  for (const auto& t : result.forest) {
    std::size_t corrupted = 0;
    for (const auto& [id, n] : t.nodes) corrupted += n.status == NodeStatus::kCorrupted;
    trees.push_back({{"tree_id", t.tree_id},
                     {"file", tree_file_name(t.tree_id)},
                     {"nodes", t.nodes.size()},
                     {"trajectories", trajectory_leaves(t, depth).size()},
                     {"corrupted", corrupted}});
  }
  Json j;
  j["schema_version"] = kManifestSchemaVersion;
  j["manifest"] = to_json(manifest);
  j["render"] = {{"width", prepared.render.width},
                 {"height", prepared.render.height},
                 {"channels", prepared.render.channels}};
  j["trees"] = std::move(trees);
  try {
    const auto s = exploration_stats(result.forest, depth);
    j["stats"] = {{"trajectories", s.trajectories},
                  {"unique_expansions", s.unique_expansions},
                  {"avg_expansions_per_trajectory", s.avg_expansions_per_trajectory},
                  {"mean_trajectory_length", s.mean_trajectory_length}};
  } catch (const UndefinedAverageError&) {
    j["stats"] = {{"trajectories", 0}};
  }
  return j;
}

RunResult explore_to_dir(const RunManifest& manifest, const std::filesystem::path& out_dir) {
  PreparedRun prepared = prepare_run(manifest);
  std::filesystem::create_directories(out_dir);
  prepared.engine.on_checkpoint = [&](const std::vector<ExplorationTree>& forest) { write_forest(forest, out_dir); };
  PrefixMemory memory(manifest.memory.prefix_length, manifest.memory.threshold, manifest.memory.mode);
  RunResult result = run_exploration(prepared.engine, prepared.factory, prepared.agents, memory);
  write_forest(result.forest, out_dir);
  write_json_file(run_info(manifest, prepared, result), out_dir / "run.json");
  return result;
}

void write_jsonl(const std::vector<Json>& lines, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NotFoundError("cannot write " + path.string());
  for (const auto& line : lines) out << line.dump() << '\n';
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read " + path.string());
  std::vector<Json> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void write_dataset(const ExportResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto dump = [&](const std::vector<DatasetRecord>& records, const char* name) {
    std::vector<Json> lines;
    for (const auto& r : records) lines.push_back(to_json(r));
    write_jsonl(lines, out_dir / name);
  };
  dump(result.step, "step.jsonl");
  dump(result.sub_traj, "sub_traj.jsonl");
  dump(result.long_traj, "long_traj.jsonl");
  Json stats = Json::array();
  for (const auto& s : result.stats) stats.push_back(to_json(s));
  write_json_file({{"tiers", std::move(stats)}, {"warnings", result.warnings}}, out_dir / "stats.json");
  std::ofstream(out_dir / "stats.txt", std::ios::binary) << render_stats_table(result.stats);
}

AgentSuite offline_suite(std::size_t min_span) {
  return {nullptr, nullptr, std::make_shared<ScriptedSummarizer>(min_span), std::make_shared<ScriptedEvaluator>(),
          std::make_shared<ScriptedReasoner>()};
}

KeptInstructions kept_long_instructions(const ExplorationTree& tree, const AgentSuite& agents,
                                        const FilterPolicy& filter, int max_depth) {
  KeptInstructions kept;
  for (const auto& traj : collect_trajectories(tree, max_depth)) {
    std::string instruction;
    try {
      instruction = agents.summarizer->summarize(traj).global_instruction;
    } catch (const EmptySummaryError&) {
      continue;
    }
    if (passes(agents.evaluator->evaluate(traj, instruction), filter)) kept[traj.node_ids.back()] = instruction;
  }
  return kept;
}

DpoOutput extract_dpo(std::span<const ExplorationTree> forest, const AgentSuite& agents, const DpoOptions& options) {
  if (!agents.summarizer || !agents.evaluator) throw ContractError("extract_dpo needs a summarizer and an evaluator");
  std::vector<int> bounds = options.bucket_bounds;
  if (bounds.empty()) {
    const BranchingPolicy defaults;
    bounds = {std::min(defaults.bound1, options.max_depth), std::min(defaults.bound2, options.max_depth),
              options.max_depth + 1};
  }
  DpoOutput out;
  std::vector<PreferencePair> pool;
  for (const auto& tree : forest) {
    const auto kept = kept_long_instructions(tree, agents, options.filter, options.max_depth);
    for (const auto& entry : find_branch_nodes(tree, kept)) {
      ++out.branch_nodes;
      for (auto& p : build_pairs(entry)) pool.push_back(std::move(p));
    }
  }
  out.pairs_before_cap = pool.size();
  out.pairs = sample_pairs(pool, options.cap_per_node, options.total_target, options.seed, bounds);
  for (const auto& p : out.pairs) ++out.per_bucket[bucket_of(bounds, p.depth)];
  return out;
}

}  // namespace cuatree
