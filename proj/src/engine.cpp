#include <algorithm>
#include <atomic>
#include <deque>
#include <set>
#include <thread>
#include <tuple>
#include <variant>

#include "cuatree/channel.hpp"
#include "cuatree/engine.hpp"
#include "cuatree/error.hpp"

namespace cuatree {

int RunCounters::max_expansions_per_node() const {
  int m = 0;
  for (const auto& [key, n] : expansions) m = std::max(m, n);
  return m;
}

std::optional<std::string> engine_config_violation(const EngineConfig& config) {
  if (auto v = policy_violation(config.policy)) return "policy: " + *v;
  if (config.stop.max_depth < 1 || config.stop.max_depth > config.policy.max_depth) {
    return "stop.max_depth must lie in [1, policy.max_depth]";
  }
  if (config.stop.max_consecutive_failures < 1) return "stop.max_consecutive_failures must be at least 1";
  if (config.replay.epsilon < 0.0) return "replay.epsilon must be non-negative";
  if (config.replay.max_restore_attempts < 1) return "replay.max_restore_attempts must be at least 1";
  if (config.n_workers < 1) return "n_workers must be at least 1";
  if (config.checkpoint_interval < 1) return "checkpoint_interval must be at least 1";
  if (config.max_node_failures < 1) return "max_node_failures must be at least 1";
  std::set<std::string> ids;
  for (const auto& t : config.trees) {
    if (!ids.insert(t.tree_id).second) return "duplicate tree id '" + t.tree_id + "'";
    if (auto v = config_violation(t.env)) return "tree '" + t.tree_id + "': " + *v;
  }
  return std::nullopt;
}

std::map<NodeId, NodeId> canonicalize(ExplorationTree& tree) {
  std::map<NodeId, NodeId> remap;
  if (tree.nodes.empty()) return remap;
  const auto children = child_index(tree);
  NodeId next = 0;
  const NodeId root = tree.root_id();
  remap[root] = next++;
  // Mirrors the coordinator: claims in (depth, id) order, each followed by a depth-first run on the
  // retained child during which the full sibling list of every expanded node is numbered.
  std::set<std::pair<int, NodeId>> queue{{0, remap[root]}};
  std::map<NodeId, NodeId> original{{remap[root], root}};
  while (!queue.empty()) {
    const NodeId claimed = original.at(queue.begin()->second);
    queue.erase(queue.begin());
    for (NodeId cur = claimed;;) {
      auto it = children.find(cur);
      if (it == children.end()) break;
      const auto& kids = it->second;
      const TreeNode& c = tree.node(cur);
      const std::size_t keep =
          c.observation_digest ? retained_index(tree.seed, *c.observation_digest, c.depth, goal_history(tree, cur),
                                                kids.size())
                               : 0;
      for (std::size_t i = 0; i < kids.size(); ++i) {
        const NodeId id = next++;
        remap[kids[i]] = id;
        original[id] = kids[i];
        if (i != keep) queue.insert({tree.node(kids[i]).depth, id});
      }
      cur = kids[keep];
    }
  }
  std::map<NodeId, TreeNode> renumbered;
  for (auto& [old_id, n] : tree.nodes) {
    TreeNode m = std::move(n);
    m.id = remap.at(old_id);
    if (m.parent) m.parent = remap.at(*m.parent);
    renumbered.emplace(m.id, std::move(m));
  }
  tree.nodes = std::move(renumbered);
  return remap;
}

namespace {

// Worker -> coordinator.
struct ClaimRequest {
  int worker;
};
struct NodeExecuted {
  int worker;
  std::size_t tree;
  NodeId node;
  ChildRecord record;
  std::vector<PrefixMemory::Sequence> admissions;
};
struct ExpansionReport {
  int worker;
  std::size_t tree;
  NodeId parent;
  std::vector<ChildRecord> children;
  std::vector<PrefixMemory::Sequence> admissions;
};
struct NodePruned {
  int worker;
  std::size_t tree;
  NodeId node;
};
struct NodeCorrupted {
  int worker;
  std::size_t tree;
  CorruptionReport report;
};
struct WorkFinished {
  int worker;
  std::size_t tree;
};
struct WorkFailed {
  int worker;
  std::size_t tree;
  NodeId node;
  std::string error;
};
using ToCoordinator =
    std::variant<ClaimRequest, NodeExecuted, ExpansionReport, NodePruned, NodeCorrupted, WorkFinished, WorkFailed>;

// Coordinator -> worker.
struct ClaimGrant {
  std::size_t tree;
  NodeId node;
  ExplorationTree path;  // root-to-node copy of the shared tree
  std::shared_ptr<const PrefixMemory> memory;
};
struct ExpansionAck {
  std::vector<NodeId> child_ids;
};
struct Shutdown {};
using ToWorker = std::variant<ClaimGrant, ExpansionAck, Shutdown>;

template <class... F>
struct Overloaded : F... {
  using F::operator()...;
};
template <class... F>
Overloaded(F...) -> Overloaded<F...>;

struct SharedCounters {
  std::atomic<std::uint64_t> env_steps{0};
  std::atomic<std::uint64_t> replay_steps{0};
  std::atomic<std::uint64_t> propose_calls{0};
};

class Worker {
 public:
  Worker(int id, const EngineConfig& config, const EnvironmentFactory& factory, const AgentSuite& agents,
         BlobStore& blobs, SharedCounters& counters, Channel<ToCoordinator>& out, Channel<ToWorker>& in)
      : id_(id), config_(config), factory_(factory), agents_(agents), blobs_(blobs), counters_(counters),
        out_(out), in_(in) {}

  void run() {
    for (;;) {
      out_.send(ClaimRequest{id_});
      auto msg = in_.receive();
      if (std::holds_alternative<Shutdown>(msg)) return;
      auto grant = std::get<ClaimGrant>(std::move(msg));
      current_ = grant.node;
      try {
        process(grant);
        out_.send(WorkFinished{id_, grant.tree});
      } catch (const std::exception& e) {
        if (dynamic_cast<const TransportError*>(&e)) std::this_thread::sleep_for(config_.transport_backoff);
        out_.send(WorkFailed{id_, grant.tree, current_, e.what()});
      } catch (...) {
        out_.send(WorkFailed{id_, grant.tree, current_, "unknown failure"});
      }
    }
  }

 private:
  Environment& env() {
    if (!env_) env_ = factory_();
    return *env_;
  }

  std::vector<PrefixMemory::Sequence> sibling_admission(const ExplorationTree& path, NodeId node,
                                                        const PrefixMemory* memory) const {
    if (!memory) return {};
    const TreeNode& n = path.node(node);
    if (n.incoming->action.kind == ActionKind::kTerminate) return {};
    if (n.depth > memory->prefix_length()) return {};
    return {goal_history(path, node)};
  }

  void process(ClaimGrant& grant) {
    const TreeJob& job = config_.trees[grant.tree];
    if (config_.on_claim) config_.on_claim(job.tree_id, grant.node);
    ExplorationTree& path = grant.path;
    const PrefixMemory* memory = grant.memory.get();
    NodeId node = grant.node;
    TreeNode& n = path.node(node);
    std::optional<Observation> frame;

    if (n.status == NodeStatus::kRoot && !n.observation_digest) {
      frame = env().reset(job.env);
      counters_.env_steps.fetch_add(1);
      blobs_.put(*frame);
      n.observation_digest = frame->digest();
      ChildRecord rec;
      rec.status = NodeStatus::kRoot;
      rec.digest = frame->digest();
      out_.send(NodeExecuted{id_, grant.tree, node, rec, {}});
    } else if (n.status == NodeStatus::kUnexplored && n.incoming->action.kind == ActionKind::kTerminate) {
      // Closing a branch needs no environment state, so no replay either.
      ChildRecord rec;
      rec.tuple = *n.incoming;
      rec.status = NodeStatus::kTerminal;
      rec.verification = VerificationResult{ResultType::kSuccess, kTerminateFeedback};
      rec.digest = path.node(*n.parent).observation_digest;
      out_.send(NodeExecuted{id_, grant.tree, node, rec, {}});
      return;
    } else {
      auto restored = replay_node(path, node, env(), job.env, config_.replay, &blobs_);
      counters_.env_steps.fetch_add(restored.env_steps);
      counters_.replay_steps.fetch_add(restored.env_steps);
      if (!restored.ok()) {
        out_.send(NodeCorrupted{id_, grant.tree, *restored.corruption});
        return;
      }
      frame = std::move(restored.observation);
      if (n.status == NodeStatus::kUnexplored) {
        std::optional<Observation> next;
        ChildRecord rec = execute_edge(path, node, *frame, env(), agents_, config_.stop, &next);
        counters_.env_steps.fetch_add(1);
        blobs_.put(*next);
        n.status = rec.status;
        n.verification = rec.verification;
        n.observation_digest = rec.digest;
        out_.send(NodeExecuted{id_, grant.tree, node, rec, sibling_admission(path, node, memory)});
        if (rec.status != NodeStatus::kExplored) return;
        frame = std::move(next);
      }
    }

    const ExpandOptions options{config_.policy, config_.stop, job.world_knowledge};
    for (;;) {
      const TreeNode& cur = path.node(node);
      if (cur.depth >= config_.stop.max_depth) return;
      counters_.propose_calls.fetch_add(1);
      auto plan = plan_expansion(path, node, *frame, env(), agents_, memory, options);
      counters_.env_steps.fetch_add(plan.env_steps);
      if (plan.children.empty()) {
        out_.send(NodePruned{id_, grant.tree, node});
        return;
      }
      if (plan.retained_observation) blobs_.put(*plan.retained_observation);
      const std::size_t retained = *plan.retained;
      ChildRecord kept = plan.children[retained];
      out_.send(ExpansionReport{id_, grant.tree, node, plan.children, plan.admissions});
      auto ack = std::get<ExpansionAck>(in_.receive());
      const NodeId child = ack.child_ids.at(retained);

      TreeNode c;
      c.id = child;
      c.parent = node;
      c.depth = cur.depth + 1;
      c.incoming = kept.tuple;
      c.status = kept.status;
      c.verification = kept.verification;
      c.observation_digest = kept.digest;
      path.nodes.emplace(child, std::move(c));
      if (kept.status != NodeStatus::kExplored) return;
      node = child;
      current_ = child;
      frame = std::move(plan.retained_observation);
    }
  }

  int id_;
  const EngineConfig& config_;
  const EnvironmentFactory& factory_;
  const AgentSuite& agents_;
  BlobStore& blobs_;
  SharedCounters& counters_;
  Channel<ToCoordinator>& out_;
  Channel<ToWorker>& in_;
  std::unique_ptr<Environment> env_;
  NodeId current_ = 0;
};

class Coordinator {
 public:
  Coordinator(const EngineConfig& config, PrefixMemory& memory, Channel<ToCoordinator>& inbox,
              std::vector<std::unique_ptr<Channel<ToWorker>>>& outboxes)
      : config_(config), memory_(memory), inbox_(inbox), outboxes_(outboxes) {
    const std::size_t n = config.trees.size();
    result_.forest.resize(n);
    in_flight_.assign(n, 0);
    state_.assign(n, TreeState::kWaiting);
    pending_memory_.resize(n);
    tree_memory_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& t = result_.forest[i];
      t.tree_id = config.trees[i].tree_id;
      t.category_id = config.trees[i].env.category;
      t.seed = config.trees[i].env.seed;
      t.add_root(std::nullopt);
      category_order_[t.category_id].push_back(i);
    }
    snapshot_ = std::make_shared<const PrefixMemory>(memory_);
    if (config.novelty) {
      for (auto& [category, order] : category_order_) activate(order.front());
    } else {
      for (std::size_t i = 0; i < n; ++i) activate(i);
    }
  }

  RunResult run() {
    const int workers = static_cast<int>(outboxes_.size());
    int shut_down = 0;
    while (shut_down < workers) {
      serve_waiting();
      if (finished()) {
        for (int w : waiting_) outboxes_[static_cast<std::size_t>(w)]->send(Shutdown{});
        shut_down += static_cast<int>(waiting_.size());
        waiting_.clear();
        if (shut_down == workers) break;
      }
      handle(inbox_.receive());
    }
    return std::move(result_);
  }

  RunCounters& counters() { return result_.counters; }

 private:
  enum class TreeState { kWaiting, kActive, kDone };

  void activate(std::size_t tree) {
    state_[tree] = TreeState::kActive;
    tree_memory_[tree] = config_.novelty ? snapshot_ : nullptr;
    enqueue(tree, result_.forest[tree].root_id());
  }

  void enqueue(std::size_t tree, NodeId node) {
    queue_.insert({tree, result_.forest[tree].node(node).depth, node});
  }

  bool finished() const {
    return queue_.empty() &&
           std::all_of(state_.begin(), state_.end(), [](TreeState s) { return s == TreeState::kDone; });
  }

  void serve_waiting() {
    while (!waiting_.empty() && !queue_.empty()) {
      const auto [tree, depth, node] = *queue_.begin();
      queue_.erase(queue_.begin());
      const int w = waiting_.front();
      waiting_.pop_front();
      ++in_flight_[tree];
      ++result_.counters.claims;
      const auto& full = result_.forest[tree];
      ClaimGrant grant{tree, node, ExplorationTree{full.tree_id, full.category_id, full.seed, {}}, tree_memory_[tree]};
      for (const TreeNode* n = &full.node(node);; n = &full.node(*n->parent)) {
        grant.path.nodes.emplace(n->id, *n);
        if (!n->parent) break;
      }
      outboxes_[static_cast<std::size_t>(w)]->send(std::move(grant));
    }
  }

  void buffer(std::size_t tree, std::vector<PrefixMemory::Sequence> admissions) {
    for (auto& s : admissions) pending_memory_[tree].push_back(std::move(s));
  }

  void count_expansion(std::size_t tree, NodeId node) {
    ++result_.counters.expansions[{tree, node}];
    if (++expansions_since_checkpoint_ >= config_.checkpoint_interval) {
      expansions_since_checkpoint_ = 0;
      if (config_.on_checkpoint) config_.on_checkpoint(result_.forest);
    }
  }

  bool expandable(const ExplorationTree& tree, NodeId id) const {
    const TreeNode& n = tree.node(id);
    const bool childless = std::none_of(tree.nodes.begin(), tree.nodes.end(),
                                        [&](const auto& kv) { return kv.second.parent == id; });
    switch (n.status) {
      case NodeStatus::kUnexplored:
        return true;
      case NodeStatus::kRoot:
        return childless;
      case NodeStatus::kExplored:
        return childless && n.depth < config_.stop.max_depth;
      default:
        return false;
    }
  }

  void maybe_complete(std::size_t tree) {
    if (state_[tree] != TreeState::kActive || in_flight_[tree] != 0) return;
    auto it = queue_.lower_bound({tree, 0, 0});
    if (it != queue_.end() && std::get<0>(*it) == tree) return;
    state_[tree] = TreeState::kDone;
    const auto& category = result_.forest[tree].category_id;
    for (const auto& s : pending_memory_[tree]) memory_.admit(category, s);
    pending_memory_[tree].clear();
    if (!config_.novelty) return;
    snapshot_ = std::make_shared<const PrefixMemory>(memory_);
    const auto& order = category_order_[category];
    auto pos = std::find(order.begin(), order.end(), tree);
    if (pos != order.end() && std::next(pos) != order.end()) activate(*std::next(pos));
  }

  void handle(ToCoordinator msg) {
    std::visit(
        Overloaded{
            [&](ClaimRequest& m) { waiting_.push_back(m.worker); },
            [&](NodeExecuted& m) {
              TreeNode& n = result_.forest[m.tree].node(m.node);
              if (n.status != NodeStatus::kRoot) {
                n.status = m.record.status;
                n.verification = m.record.verification;
              }
              n.observation_digest = m.record.digest;
              buffer(m.tree, std::move(m.admissions));
            },
            [&](ExpansionReport& m) {
              auto& tree = result_.forest[m.tree];
              ExpansionAck ack;
              for (auto& c : m.children) {
                const NodeId id = tree.add_child(m.parent, c.tuple, c.status, c.verification, c.digest);
                ack.child_ids.push_back(id);
                if (c.status == NodeStatus::kUnexplored) enqueue(m.tree, id);
              }
              buffer(m.tree, std::move(m.admissions));
              count_expansion(m.tree, m.parent);
              outboxes_[static_cast<std::size_t>(m.worker)]->send(std::move(ack));
            },
            [&](NodePruned& m) {
              TreeNode& n = result_.forest[m.tree].node(m.node);
              if (n.status != NodeStatus::kRoot) n.status = NodeStatus::kPruned;
              count_expansion(m.tree, m.node);
            },
            [&](NodeCorrupted& m) {
              result_.forest[m.tree].node(m.report.node).status = NodeStatus::kCorrupted;
              m.report.tree_id = result_.forest[m.tree].tree_id;
              result_.corruptions.push_back(std::move(m.report));
            },
            [&](WorkFinished& m) {
              --in_flight_[m.tree];
              maybe_complete(m.tree);
            },
            [&](WorkFailed& m) {
              --in_flight_[m.tree];
              ++result_.counters.failed_claims;
              const auto& tree = result_.forest[m.tree];
              const int failures = ++failures_[{m.tree, m.node}];
              if (expandable(tree, m.node)) {
                if (failures < config_.max_node_failures) {
                  enqueue(m.tree, m.node);
                } else {
                  result_.warnings.push_back("tree " + tree.tree_id + ": node " + std::to_string(m.node) +
                                             " abandoned after " + std::to_string(failures) +
                                             " failures: " + m.error);
                }
              }
              maybe_complete(m.tree);
            },
        },
        msg);
  }

  const EngineConfig& config_;
  PrefixMemory& memory_;
  Channel<ToCoordinator>& inbox_;
  std::vector<std::unique_ptr<Channel<ToWorker>>>& outboxes_;
  RunResult result_;
  std::set<std::tuple<std::size_t, int, NodeId>> queue_;
  std::deque<int> waiting_;
  std::vector<int> in_flight_;
  std::vector<TreeState> state_;
  std::vector<std::vector<PrefixMemory::Sequence>> pending_memory_;
  std::vector<std::shared_ptr<const PrefixMemory>> tree_memory_;
  std::map<std::string, std::vector<std::size_t>> category_order_;
  std::map<std::pair<std::size_t, NodeId>, int> failures_;
  std::shared_ptr<const PrefixMemory> snapshot_;
  int expansions_since_checkpoint_ = 0;
};

}  // namespace

RunResult run_exploration(const EngineConfig& config, const EnvironmentFactory& factory, const AgentSuite& agents,
                          PrefixMemory& memory, BlobStore* blobs) {
  if (auto v = engine_config_violation(config)) throw ConfigError(*v);
  if (!factory) throw ContractError("run_exploration needs an environment factory");
  if (!agents.explorer || !agents.verifier) throw ContractError("run_exploration needs an explorer and a verifier");

  BlobStore local_blobs;
  BlobStore& store = blobs ? *blobs : local_blobs;
  SharedCounters shared;
  Channel<ToCoordinator> inbox;
  std::vector<std::unique_ptr<Channel<ToWorker>>> outboxes;
  for (int i = 0; i < config.n_workers; ++i) outboxes.push_back(std::make_unique<Channel<ToWorker>>());

  Coordinator coordinator(config, memory, inbox, outboxes);
  std::vector<std::jthread> threads;
  for (int i = 0; i < config.n_workers; ++i) {
    threads.emplace_back([&, i] {
      Worker(i, config, factory, agents, store, shared, inbox, *outboxes[static_cast<std::size_t>(i)]).run();
    });
  }
  RunResult result = coordinator.run();
  threads.clear();
  std::map<std::pair<std::size_t, NodeId>, int> expansions;
  for (std::size_t t = 0; t < result.forest.size(); ++t) {
    const auto remap = canonicalize(result.forest[t]);
    for (auto& report : result.corruptions) {
      if (report.tree_id == result.forest[t].tree_id) report.node = remap.at(report.node);
    }
    for (const auto& [key, n] : result.counters.expansions) {
      if (key.first == t) expansions[{t, remap.at(key.second)}] = n;
    }
  }
  result.counters.expansions = std::move(expansions);
  result.counters.env_steps = shared.env_steps.load();
  result.counters.replay_steps = shared.replay_steps.load();
  result.counters.propose_calls = shared.propose_calls.load();
  return result;
}

}  // namespace cuatree
