#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "cuatree/error.hpp"
#include "cuatree/model.hpp"

namespace cuatree {

using Json = nlohmann::ordered_json;

// Field `key` of `j` converted to T, throwing ParseError naming the field.
template <typename T>
T json_required(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("field '") + key + "': " + e.what());
  }
}

Json to_json(const Action& action);
Action action_from_json(const Json& j);

Json to_json(const StatePredicate& predicate);
StatePredicate predicate_from_json(const Json& j);

Json to_json(const ExplorationTuple& tuple);
ExplorationTuple tuple_from_json(const Json& j);

Json to_json(const VerificationResult& result);
VerificationResult verification_from_json(const Json& j);

Json to_json(const TreeNode& node);
TreeNode node_from_json(const Json& j);

// {tree_id, category_id, seed, nodes:[...]}; digests are 16-digit hex strings.
Json to_json(const ExplorationTree& tree);
ExplorationTree tree_from_json(const Json& j);

// {tree_id, node_ids, initial_digest, steps:[{tuple, verification, digest}], instruction?}
Json to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const Json& j);

void write_tree(const ExplorationTree& tree, const std::filesystem::path& path);
ExplorationTree read_tree(const std::filesystem::path& path);

// Reads a whole file into a JSON document, throwing ParseError with the path on failure.
Json read_json_file(const std::filesystem::path& path);
// Writes `j` with two-space indentation and a trailing newline.
void write_json_file(const Json& j, const std::filesystem::path& path);

}  // namespace cuatree
