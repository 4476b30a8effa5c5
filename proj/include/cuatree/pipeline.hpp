#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cuatree/dpo.hpp"
#include "cuatree/engine.hpp"
#include "cuatree/environment.hpp"
#include "cuatree/postproc.hpp"
#include "cuatree/prefix_memory.hpp"
#include "cuatree/remote_agents.hpp"
#include "cuatree/scripted_agents.hpp"

namespace cuatree {

inline constexpr int kManifestSchemaVersion = 1;

struct MemorySettings {
  bool enabled = true;
  int prefix_length = 3;
  double threshold = 0.8;
  SimilarityMode mode = SimilarityMode::kExact;
};

struct RunManifest {
  int schema_version = kManifestSchemaVersion;
  std::filesystem::path sim_spec;     // resolved against the manifest directory
  std::string environment_endpoint;   // host:port of a remote environment server
  std::string agents_mode = "scripted";  // "scripted" | "remote"
  RemoteAgentOptions remote;
  ScriptedExplorerOptions explorer;
  std::uint64_t seed = 0;
  int n_workers = 1;
  int trees = 1;
  std::vector<std::string> categories;  // empty: every category of the sim spec
  std::map<std::string, std::string> world_knowledge;  // for remote environments
  std::vector<Asset> assets;
  double noise_amplitude = 0.0;
  std::optional<RenderSpec> render;
  BranchingPolicy policy;
  MemorySettings memory;
  ReplayPolicy replay;
  int max_consecutive_failures = 3;
  std::filesystem::path output_dir = "out";
  int checkpoint_interval = 50;
  std::size_t min_span = 2;
};

// Throws ConfigError("<field>: <problem>") for the first invalid field.
RunManifest parse_manifest(const Json& j, const std::filesystem::path& base_dir);
// Reads and parses a manifest; REMOTE_AGENT_URL, when set, replaces the agent endpoint.
RunManifest load_manifest(const std::filesystem::path& path);
Json to_json(const RunManifest& manifest);

struct PreparedRun {
  EngineConfig engine;
  EnvironmentFactory factory;
  AgentSuite agents;
  std::shared_ptr<const SimAppSpec> spec;  // null for remote environments
  RenderSpec render;
};

PreparedRun prepare_run(const RunManifest& manifest);

// File name of a tree inside a forest directory.
std::string tree_file_name(const std::string& tree_id);
void write_forest(std::span<const ExplorationTree> forest, const std::filesystem::path& dir);

struct LoadedForest {
  std::vector<ExplorationTree> trees;
  std::vector<std::string> warnings;  // unreadable or invalid tree files
  std::optional<Json> run_info;       // run.json, when present
  int max_depth = 20;
  RenderSpec render;
};

// Every *.tree.json of `dir` in file-name order; invalid files are skipped with a warning.
LoadedForest load_forest(const std::filesystem::path& dir);

// Deterministic description of a finished run, written as run.json.
Json run_info(const RunManifest& manifest, const PreparedRun& prepared, const RunResult& result);

// Runs the manifest and writes the tree files and run.json into `out_dir`, with checkpoints on the way.
RunResult explore_to_dir(const RunManifest& manifest, const std::filesystem::path& out_dir);

void write_jsonl(const std::vector<Json>& lines, const std::filesystem::path& path);
std::vector<Json> read_jsonl(const std::filesystem::path& path);

// Writes step.jsonl, sub_traj.jsonl, long_traj.jsonl, stats.json and stats.txt.
void write_dataset(const ExportResult& result, const std::filesystem::path& out_dir);

// Summarizer, evaluator and reasoner used when no manifest selects remote agents.
AgentSuite offline_suite(std::size_t min_span = 2);

// Leaves whose long trajectory passes `filter`, mapped to its instruction.
KeptInstructions kept_long_instructions(const ExplorationTree& tree, const AgentSuite& agents,
                                        const FilterPolicy& filter, int max_depth);

struct DpoOptions {
  FilterPolicy filter;
  int cap_per_node = 4;
  int total_target = 1000;
  std::uint64_t seed = 0;
  std::vector<int> bucket_bounds;  // empty: phases of the default policy truncated to max_depth
  int max_depth = 20;
};

struct DpoOutput {
  std::size_t branch_nodes = 0;
  std::size_t pairs_before_cap = 0;
  std::vector<PreferencePair> pairs;
  std::map<int, std::size_t> per_bucket;
};

DpoOutput extract_dpo(std::span<const ExplorationTree> forest, const AgentSuite& agents, const DpoOptions& options);

}  // namespace cuatree
