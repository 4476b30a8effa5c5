#include "cuatree/serialize.hpp"

#include <fstream>
#include <sstream>

#include "cuatree/error.hpp"
#include "cuatree/hashing.hpp"

namespace cuatree {

Json to_json(const Action& action) {
  Json j;
  j["action"] = std::string(to_string(action.kind));
  if (action.coordinate) j["coordinate"] = {action.coordinate->x, action.coordinate->y};
  if (action.text) j["text"] = *action.text;
  if (action.duration) j["duration"] = *action.duration;
  return j;
}

Action action_from_json(const Json& j) {
  Action a;
  a.kind = action_kind_from_string(json_required<std::string>(j, "action"));
  if (j.contains("coordinate") && !j["coordinate"].is_null()) {
    const auto& c = j["coordinate"];
    if (!c.is_array() || c.size() != 2) throw ParseError("coordinate must be [x, y]");
    a.coordinate = Point{c[0].get<int>(), c[1].get<int>()};
  }
  if (j.contains("text") && !j["text"].is_null()) a.text = j["text"].get<std::string>();
  if (j.contains("duration") && !j["duration"].is_null()) a.duration = j["duration"].get<double>();
  return a;
}

Json to_json(const StatePredicate& predicate) {
  Json j = Json::object();
  if (predicate.screen) j["screen"] = *predicate.screen;
  if (!predicate.vars.empty()) j["vars"] = predicate.vars;
  return j;
}

StatePredicate predicate_from_json(const Json& j) {
  StatePredicate p;
  if (j.contains("screen") && !j["screen"].is_null()) p.screen = j["screen"].get<std::string>();
  if (j.contains("vars")) p.vars = j["vars"].get<std::map<std::string, std::string>>();
  return p;
}

Json to_json(const ExplorationTuple& tuple) {
  Json expected;
  expected["text"] = tuple.expected_observation.text;
  if (tuple.expected_observation.predicate) expected["predicate"] = to_json(*tuple.expected_observation.predicate);
  Json j;
  j["action"] = to_json(tuple.action);
  j["step_goal"] = tuple.step_goal;
  j["final_goal_hypothesis"] = tuple.final_goal_hypothesis;
  j["expected_observation"] = std::move(expected);
  j["rationale"] = tuple.rationale;
  return j;
}

ExplorationTuple tuple_from_json(const Json& j) {
  ExplorationTuple t;
  if (!j.contains("action")) throw ParseError("missing field 'action'");
  t.action = action_from_json(j["action"]);
  t.step_goal = json_required<std::string>(j, "step_goal");
  t.final_goal_hypothesis = j.value("final_goal_hypothesis", std::string());
  if (j.contains("expected_observation")) {
    const auto& e = j["expected_observation"];
    if (e.is_string()) {
      t.expected_observation.text = e.get<std::string>();
    } else {
      t.expected_observation.text = e.value("text", std::string());
      if (e.contains("predicate") && !e["predicate"].is_null()) {
        t.expected_observation.predicate = predicate_from_json(e["predicate"]);
      }
    }
  }
  t.rationale = j.value("rationale", std::string());
  return t;
}

Json to_json(const VerificationResult& result) {
  return Json{{"result_type", std::string(to_string(result.result_type))}, {"feedback", result.feedback}};
}

VerificationResult verification_from_json(const Json& j) {
  return {result_type_from_string(json_required<std::string>(j, "result_type")), j.value("feedback", std::string())};
}

Json to_json(const TreeNode& node) {
  Json j;
  j["id"] = node.id;
  j["parent"] = node.parent ? Json(*node.parent) : Json(nullptr);
  j["depth"] = node.depth;
  j["status"] = std::string(to_string(node.status));
  j["incoming"] = node.incoming ? to_json(*node.incoming) : Json(nullptr);
  j["verification"] = node.verification ? to_json(*node.verification) : Json(nullptr);
  j["observation_digest"] = node.observation_digest ? Json(to_hex(*node.observation_digest)) : Json(nullptr);
  return j;
}

TreeNode node_from_json(const Json& j) {
  TreeNode n;
  n.id = json_required<NodeId>(j, "id");
  if (j.contains("parent") && !j["parent"].is_null()) n.parent = j["parent"].get<NodeId>();
  n.depth = json_required<int>(j, "depth");
  n.status = node_status_from_string(json_required<std::string>(j, "status"));
  if (j.contains("incoming") && !j["incoming"].is_null()) n.incoming = tuple_from_json(j["incoming"]);
  if (j.contains("verification") && !j["verification"].is_null()) {
    n.verification = verification_from_json(j["verification"]);
  }
  if (j.contains("observation_digest") && !j["observation_digest"].is_null()) {
    n.observation_digest = from_hex(j["observation_digest"].get<std::string>());
  }
  return n;
}

Json to_json(const Trajectory& trajectory) {
  Json steps = Json::array();
  for (const auto& s : trajectory.steps) {
    steps.push_back({{"tuple", to_json(s.tuple)},
                     {"verification", to_json(s.verification)},
                     {"digest", to_hex(s.observation_digest)}});
  }
  Json j;
  j["tree_id"] = trajectory.tree_id;
  j["node_ids"] = trajectory.node_ids;
  j["initial_digest"] = to_hex(trajectory.initial_digest);
  j["steps"] = std::move(steps);
  if (trajectory.instruction) j["instruction"] = *trajectory.instruction;
  return j;
}

Trajectory trajectory_from_json(const Json& j) {
  Trajectory t;
  t.tree_id = json_required<std::string>(j, "tree_id");
  t.node_ids = json_required<std::vector<NodeId>>(j, "node_ids");
  t.initial_digest = from_hex(json_required<std::string>(j, "initial_digest"));
  for (const auto& sj : j.at("steps")) {
    t.steps.push_back({tuple_from_json(sj.at("tuple")), verification_from_json(sj.at("verification")),
                       from_hex(json_required<std::string>(sj, "digest"))});
  }
  if (j.contains("instruction") && !j["instruction"].is_null()) t.instruction = j["instruction"].get<std::string>();
  return t;
}

Json to_json(const ExplorationTree& tree) {
  Json nodes = Json::array();
  for (const auto& [id, n] : tree.nodes) nodes.push_back(to_json(n));
  Json j;
  j["tree_id"] = tree.tree_id;
  j["category_id"] = tree.category_id;
  j["seed"] = tree.seed;
  j["nodes"] = std::move(nodes);
  return j;
}

ExplorationTree tree_from_json(const Json& j) {
  ExplorationTree tree;
  tree.tree_id = json_required<std::string>(j, "tree_id");
  tree.category_id = json_required<std::string>(j, "category_id");
  tree.seed = json_required<std::uint64_t>(j, "seed");
  if (!j.contains("nodes") || !j["nodes"].is_array()) throw ParseError("missing array 'nodes'");
  for (const auto& nj : j["nodes"]) {
    TreeNode n = node_from_json(nj);
    const NodeId id = n.id;
    if (!tree.nodes.emplace(id, std::move(n)).second) {
      throw ParseError("duplicate node id " + std::to_string(id));
    }
  }
  return tree;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json_file(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_tree(const ExplorationTree& tree, const std::filesystem::path& path) {
  write_json_file(to_json(tree), path);
}

ExplorationTree read_tree(const std::filesystem::path& path) {
  try {
    return tree_from_json(read_json_file(path));
  } catch (const ParseError& e) {
    const std::string what = e.what();
    if (what.starts_with(path.string())) throw;
    throw ParseError(path.string() + ": " + what);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace cuatree
