#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cuatree/model.hpp"
#include "cuatree/serialize.hpp"

namespace cuatree {

// ---------------------------------------------------------------------------
// Configuration

struct Asset {
  std::string name;
  std::string kind;  // "image", "document", "account", "configuration", ... (opaque)
  std::string ref;   // resolved against the environment's asset catalog
  friend bool operator==(const Asset&, const Asset&) = default;
};

struct RenderSpec {
  int width = 64;
  int height = 64;
  int channels = 1;
  friend bool operator==(const RenderSpec&, const RenderSpec&) = default;
};

// Inputs of the initial-state construction: category, asset pool, seed.
struct EnvironmentConfig {
  std::string category;
  std::vector<Asset> asset_manifest;
  std::uint64_t seed = 0;
  double noise_amplitude = 0.0;
  RenderSpec render;
  friend bool operator==(const EnvironmentConfig&, const EnvironmentConfig&) = default;
};

std::optional<std::string> config_violation(const EnvironmentConfig& config);

Json to_json(const EnvironmentConfig& config);
EnvironmentConfig environment_config_from_json(const Json& j);

class Environment {
 public:
  virtual ~Environment() = default;

  // Puts the environment in the initial state for `config` and renders it.
  virtual Observation reset(const EnvironmentConfig& config) = 0;

  // Applies a non-terminate action and renders the next observation.
  virtual Observation step(const Action& action) = 0;
};

using EnvironmentFactory = std::function<std::unique_ptr<Environment>()>;

// ---------------------------------------------------------------------------
// Simulated application

struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  // Half-open [x0, x1) x [y0, y1).
  bool contains(Point p) const { return p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1; }
  bool overlaps(const Box& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }
  long area() const { return static_cast<long>(x1 - x0) * static_cast<long>(y1 - y0); }
  Point center() const { return {(x0 + x1 - 1) / 2, (y0 + y1 - 1) / 2}; }
};

enum class WidgetKind { kButton, kIcon, kTextField, kScrollArea };

struct Transition {
  std::optional<std::string> goto_screen;
  std::map<std::string, std::string> set;
  bool empty() const { return !goto_screen && set.empty(); }
};

struct Widget {
  std::string id;
  Box box;
  WidgetKind kind = WidgetKind::kButton;
  std::string label;
  std::optional<std::string> goal;
  Transition transition;
  // Widget is only drawn and clickable when every listed variable has the given value.
  std::map<std::string, std::string> visible_if;
  // What an agent looking at this widget predicts; lets fixtures stage misleading UI.
  std::optional<std::string> expected_goto;
  // Candidate strings an agent may type into a text field.
  std::vector<std::string> samples;
  // Number of scroll positions of a scroll area.
  int pages = 3;
};

struct Shortcut {
  std::string keys;
  std::optional<std::string> goal;
  Transition transition;
  std::optional<std::string> expected_goto;
};

struct Screen {
  std::string id;
  // Reaching this screen completes a task loop; agents may terminate here.
  bool completion = false;
  // Screen is part of a multi-step form; agents restrict themselves to the essential next step.
  bool focus_flow = false;
  std::vector<Widget> widgets;
  std::vector<Shortcut> shortcuts;
};

struct Category {
  std::string id;
  std::string knowledge;
  std::optional<std::string> initial_screen;
  std::map<std::string, std::string> vars;
};

struct SimAppSpec {
  std::string name;
  RenderSpec render;
  std::vector<Category> categories;
  std::map<std::string, std::map<std::string, std::string>> assets;
  std::string initial_screen;
  std::vector<Screen> screens;

  const Screen& screen(const std::string& id) const;
  const Category* category(const std::string& id) const;
};

std::string_view to_string(WidgetKind kind);

SimAppSpec sim_spec_from_json(const Json& j);
Json to_json(const SimAppSpec& spec);
SimAppSpec load_sim_spec(const std::filesystem::path& path);

std::vector<std::string> validate(const SimAppSpec& spec);

bool is_visible(const Widget& widget, const ScreenState& state);

// Widget under `p` on the current screen, if any.
const Widget* hit_test(const SimAppSpec& spec, const ScreenState& state, Point p);

// Deterministic transition function of the simulator. Non-matching actions return `state` unchanged.
ScreenState apply_action(const SimAppSpec& spec, const ScreenState& state, const Action& action);

// Noise-free frame of `state`; `seed` places small decorations so distinct seeds render differently.
Observation render_state(const SimAppSpec& spec, const ScreenState& state, const RenderSpec& render,
                         std::uint64_t seed);

// Adds bounded uniform per-pixel noise whose RMS against `clean` is `amplitude` in expectation.
Observation add_noise(const Observation& clean, double amplitude, std::uint64_t noise_seed);

class SimEnvironment final : public Environment {
 public:
  explicit SimEnvironment(std::shared_ptr<const SimAppSpec> spec);

  Observation reset(const EnvironmentConfig& config) override;
  Observation step(const Action& action) override;

  Observation render_clean() const;
  // Current frame with the seeded perturbation for `step_index`.
  Observation render_noisy(std::uint64_t step_index) const;

  const ScreenState& state() const;
  const SimAppSpec& spec() const { return *spec_; }

 private:
  Observation current_frame();

  std::shared_ptr<const SimAppSpec> spec_;
  std::optional<EnvironmentConfig> config_;
  ScreenState state_;
  std::uint64_t frame_counter_ = 0;
};

// Builds the initial state for `config` on `spec`, throwing ConfigError/AssetError.
ScreenState initial_state(const SimAppSpec& spec, const EnvironmentConfig& config);

}  // namespace cuatree
