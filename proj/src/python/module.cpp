#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cuatree/analytics.hpp"
#include "cuatree/cli.hpp"
#include "cuatree/error.hpp"
#include "cuatree/pipeline.hpp"
#include "cuatree/serialize.hpp"

namespace py = pybind11;
using namespace cuatree;

namespace {

using Frame = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Observation to_observation(const Frame& frame) {
  if (frame.ndim() != 2 && frame.ndim() != 3) throw ContractError("frame must be HxW or HxWxC");
  const auto h = static_cast<int>(frame.shape(0));
  const auto w = static_cast<int>(frame.shape(1));
  const int c = frame.ndim() == 3 ? static_cast<int>(frame.shape(2)) : 1;
  return Observation(w, h, c, std::vector<std::uint8_t>(frame.data(), frame.data() + frame.size()));
}

py::dict stats_dict(const ExplorationStats& s) {
  py::dict d;
  d["trajectories"] = s.trajectories;
  d["unique_expansions"] = s.unique_expansions;
  d["env_steps_including_replay"] = s.env_steps_including_replay;
  d["avg_expansions_per_trajectory"] = s.avg_expansions_per_trajectory;
  d["mean_trajectory_length"] = s.mean_trajectory_length;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tree-structured GUI exploration: replay checks, exploration runs and diversity metrics";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NotFoundError>(m, "NotFoundError", error.ptr());
  py::register_exception<UndefinedAverageError>(m, "UndefinedAverageError", error.ptr());

  m.def(
      "rms_diff", [](const Frame& a, const Frame& b) { return rms_diff(to_observation(a), to_observation(b)); },
      py::arg("a"), py::arg("b"), "Root-mean-square pixel difference of two uint8 frames of equal shape.");

  m.def(
      "unique_task_count",
      [](const std::vector<std::string>& descriptions, double threshold) {
        auto r = analytics::unique_task_count(descriptions, threshold);
        return py::make_tuple(r.cumulative, r.skipped);
      },
      py::arg("descriptions"), py::arg("threshold") = analytics::kUniqueTaskThreshold,
      "Cumulative unique-task counts and the indices skipped for having no tokens.");

  m.def(
      "ttr", [](const std::vector<std::string>& goals) { return analytics::ttr(goals); }, py::arg("goals"));
  m.def("tfidf_cosine", &analytics::pairwise_tfidf_cosine, py::arg("a"), py::arg("b"));

  m.def(
      "explore",
      [](const std::string& manifest, const std::string& out_dir) {
        RunResult result;
        {
          py::gil_scoped_release release;
          result = explore_to_dir(load_manifest(manifest), out_dir);
        }
        py::dict d;
        d["trees"] = result.forest.size();
        d["env_steps"] = result.counters.env_steps;
        d["replay_steps"] = result.counters.replay_steps;
        d["corruptions"] = result.corruptions.size();
        d["warnings"] = result.warnings;
        return d;
      },
      py::arg("manifest"), py::arg("out_dir"), "Run a manifest and write its forest to out_dir.");

  m.def(
      "load_forest",
      [](const std::string& dir) {
        const auto forest = load_forest(dir);
        std::vector<std::string> trees;
        for (const auto& t : forest.trees) trees.push_back(to_json(t).dump());
        return py::make_tuple(trees, forest.warnings);
      },
      py::arg("dir"), "Tree files of a forest directory as JSON strings, plus load warnings.");

  m.def(
      "exploration_stats",
      [](const std::string& dir) {
        const auto forest = load_forest(dir);
        return stats_dict(exploration_stats(forest.trees, forest.max_depth));
      },
      py::arg("dir"));

  m.def(
      "redundancy_matrix",
      [](const std::string& dir) {
        const auto forest = load_forest(dir);
        const auto r = analytics::redundancy_matrix(forest.trees, forest.render.width, forest.render.height);
        return py::make_tuple(r.values, r.mean_off_diagonal);
      },
      py::arg("dir"), "Pairwise Jaccard of executed action signatures and the mean off-diagonal value.");

  m.def(
      "cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "cuatree");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        py::gil_scoped_release release;
        return cli_main(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Run a cuatree subcommand and return its exit code.");
}
