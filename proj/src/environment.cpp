#include "cuatree/environment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "cuatree/error.hpp"
#include "cuatree/hashing.hpp"
#include "cuatree/text.hpp"

namespace cuatree {

namespace {

constexpr const char* kFocusVar = "_focus";
constexpr const char* kSelectedVar = "_selected";

WidgetKind widget_kind_from_string(const std::string& name) {
  if (name == "button") return WidgetKind::kButton;
  if (name == "icon") return WidgetKind::kIcon;
  if (name == "text_field") return WidgetKind::kTextField;
  if (name == "scroll_area") return WidgetKind::kScrollArea;
  throw ParseError("unknown widget kind '" + name + "'");
}

Transition transition_from_json(const Json& j) {
  Transition t;
  if (j.contains("goto") && !j["goto"].is_null()) t.goto_screen = j["goto"].get<std::string>();
  if (j.contains("set")) t.set = j["set"].get<std::map<std::string, std::string>>();
  return t;
}

void transition_to_json(const Transition& t, Json& j) {
  if (t.goto_screen) j["goto"] = *t.goto_screen;
  if (!t.set.empty()) j["set"] = t.set;
}

ScreenState apply_transition(const ScreenState& state, const Transition& t) {
  ScreenState next = state;
  if (t.goto_screen && *t.goto_screen != state.screen) {
    next.screen = *t.goto_screen;
    next.vars.erase(kFocusVar);
    next.vars.erase(kSelectedVar);
  }
  for (const auto& [name, value] : t.set) next.vars[name] = value;
  return next;
}

std::string var_or_empty(const ScreenState& state, const std::string& name) {
  auto it = state.vars.find(name);
  return it == state.vars.end() ? std::string() : it->second;
}

std::uint8_t shade(std::uint64_t h, int lo, int span) {
  return static_cast<std::uint8_t>(lo + static_cast<int>(h % static_cast<std::uint64_t>(span)));
}

}  // namespace

std::optional<std::string> config_violation(const EnvironmentConfig& config) {
  if (config.render.width <= 0 || config.render.height <= 0) return "render width and height must be positive";
  if (config.render.channels != 1 && config.render.channels != 3) return "render channels must be 1 or 3";
  if (!(config.noise_amplitude >= 0.0)) return "noise_amplitude must be non-negative";
  return std::nullopt;
}

Json to_json(const EnvironmentConfig& config) {
  Json assets = Json::array();
  for (const auto& a : config.asset_manifest) assets.push_back({{"name", a.name}, {"kind", a.kind}, {"ref", a.ref}});
  Json j;
  j["category"] = config.category;
  j["asset_manifest"] = std::move(assets);
  j["seed"] = config.seed;
  j["noise_amplitude"] = config.noise_amplitude;
  j["render"] = {{"width", config.render.width}, {"height", config.render.height}, {"channels", config.render.channels}};
  return j;
}

EnvironmentConfig environment_config_from_json(const Json& j) {
  EnvironmentConfig c;
  c.category = j.value("category", std::string());
  if (j.contains("asset_manifest")) {
    for (const auto& a : j["asset_manifest"]) {
      c.asset_manifest.push_back({a.value("name", std::string()), a.value("kind", std::string()),
                                  a.value("ref", std::string())});
    }
  }
  c.seed = j.value("seed", std::uint64_t{0});
  c.noise_amplitude = j.value("noise_amplitude", 0.0);
  if (j.contains("render")) {
    const auto& r = j["render"];
    c.render = {r.value("width", 64), r.value("height", 64), r.value("channels", 1)};
  }
  return c;
}

// ---------------------------------------------------------------------------
// SimAppSpec

std::string_view to_string(WidgetKind kind) {
  switch (kind) {
    case WidgetKind::kButton: return "button";
    case WidgetKind::kIcon: return "icon";
    case WidgetKind::kTextField: return "text_field";
    case WidgetKind::kScrollArea: return "scroll_area";
  }
  return "button";
}

const Screen& SimAppSpec::screen(const std::string& id) const {
  for (const auto& s : screens) {
    if (s.id == id) return s;
  }
  throw NotFoundError("screen '" + id + "' not in sim spec " + name);
}

const Category* SimAppSpec::category(const std::string& id) const {
  for (const auto& c : categories) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

SimAppSpec sim_spec_from_json(const Json& j) {
  try {
    SimAppSpec spec;
    spec.name = j.value("name", std::string("sim"));
    if (j.contains("render")) {
      const auto& r = j["render"];
      spec.render = {r.value("width", 64), r.value("height", 64), r.value("channels", 1)};
    }
    spec.initial_screen = j.at("initial_screen").get<std::string>();
    for (const auto& cj : j.value("categories", Json::array())) {
      Category c;
      c.id = cj.at("id").get<std::string>();
      c.knowledge = cj.value("knowledge", std::string());
      if (cj.contains("initial_screen")) c.initial_screen = cj["initial_screen"].get<std::string>();
      if (cj.contains("vars")) c.vars = cj["vars"].get<std::map<std::string, std::string>>();
      spec.categories.push_back(std::move(c));
    }
    if (j.contains("assets")) {
      spec.assets = j["assets"].get<std::map<std::string, std::map<std::string, std::string>>>();
    }
    for (const auto& sj : j.at("screens")) {
      Screen s;
      s.id = sj.at("id").get<std::string>();
      s.completion = sj.value("completion", false);
      s.focus_flow = sj.value("focus_flow", false);
      for (const auto& wj : sj.value("widgets", Json::array())) {
        Widget w;
        w.id = wj.at("id").get<std::string>();
        const auto& b = wj.at("box");
        if (!b.is_array() || b.size() != 4) throw ParseError("widget " + w.id + ": box must be [x0,y0,x1,y1]");
        w.box = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
        w.kind = widget_kind_from_string(wj.value("kind", std::string("button")));
        w.label = wj.value("label", w.id);
        if (wj.contains("goal")) w.goal = wj["goal"].get<std::string>();
        w.transition = transition_from_json(wj);
        if (wj.contains("visible_if")) w.visible_if = wj["visible_if"].get<std::map<std::string, std::string>>();
        if (wj.contains("expected_goto")) w.expected_goto = wj["expected_goto"].get<std::string>();
        if (wj.contains("samples")) w.samples = wj["samples"].get<std::vector<std::string>>();
        w.pages = wj.value("pages", 3);
        s.widgets.push_back(std::move(w));
      }
      for (const auto& kj : sj.value("shortcuts", Json::array())) {
        Shortcut k;
        k.keys = kj.at("keys").get<std::string>();
        if (kj.contains("goal")) k.goal = kj["goal"].get<std::string>();
        k.transition = transition_from_json(kj);
        if (kj.contains("expected_goto")) k.expected_goto = kj["expected_goto"].get<std::string>();
        s.shortcuts.push_back(std::move(k));
      }
      spec.screens.push_back(std::move(s));
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("sim spec: ") + e.what());
  }
}

Json to_json(const SimAppSpec& spec) {
  Json j;
  j["schema_version"] = 1;
  j["name"] = spec.name;
  j["render"] = {{"width", spec.render.width}, {"height", spec.render.height}, {"channels", spec.render.channels}};
  j["initial_screen"] = spec.initial_screen;
  Json cats = Json::array();
  for (const auto& c : spec.categories) {
    Json cj{{"id", c.id}, {"knowledge", c.knowledge}};
    if (c.initial_screen) cj["initial_screen"] = *c.initial_screen;
    if (!c.vars.empty()) cj["vars"] = c.vars;
    cats.push_back(std::move(cj));
  }
  j["categories"] = std::move(cats);
  j["assets"] = spec.assets;
  Json screens = Json::array();
  for (const auto& s : spec.screens) {
    Json sj{{"id", s.id}};
    if (s.completion) sj["completion"] = true;
    if (s.focus_flow) sj["focus_flow"] = true;
    Json widgets = Json::array();
    for (const auto& w : s.widgets) {
      Json wj{{"id", w.id},
              {"box", {w.box.x0, w.box.y0, w.box.x1, w.box.y1}},
              {"kind", std::string(to_string(w.kind))},
              {"label", w.label}};
      if (w.goal) wj["goal"] = *w.goal;
      transition_to_json(w.transition, wj);
      if (!w.visible_if.empty()) wj["visible_if"] = w.visible_if;
      if (w.expected_goto) wj["expected_goto"] = *w.expected_goto;
      if (!w.samples.empty()) wj["samples"] = w.samples;
      if (w.kind == WidgetKind::kScrollArea) wj["pages"] = w.pages;
      widgets.push_back(std::move(wj));
    }
    sj["widgets"] = std::move(widgets);
    Json shortcuts = Json::array();
    for (const auto& k : s.shortcuts) {
      Json kj{{"keys", k.keys}};
      if (k.goal) kj["goal"] = *k.goal;
      transition_to_json(k.transition, kj);
      if (k.expected_goto) kj["expected_goto"] = *k.expected_goto;
      shortcuts.push_back(std::move(kj));
    }
    sj["shortcuts"] = std::move(shortcuts);
    screens.push_back(std::move(sj));
  }
  j["screens"] = std::move(screens);
  return j;
}

SimAppSpec load_sim_spec(const std::filesystem::path& path) {
  SimAppSpec spec = sim_spec_from_json(read_json_file(path));
  if (auto problems = validate(spec); !problems.empty()) {
    throw ConfigError(path.string() + ": " + problems.front());
  }
  return spec;
}

std::vector<std::string> validate(const SimAppSpec& spec) {
  std::vector<std::string> out;
  std::set<std::string> ids;
  for (const auto& s : spec.screens) {
    if (!ids.insert(s.id).second) out.push_back("duplicate screen id '" + s.id + "'");
  }
  auto check_target = [&](const std::optional<std::string>& target, const std::string& where) {
    if (target && !ids.contains(*target)) out.push_back(where + ": unknown target screen '" + *target + "'");
  };
  if (!ids.contains(spec.initial_screen)) out.push_back("initial_screen '" + spec.initial_screen + "' not declared");
  for (const auto& c : spec.categories) check_target(c.initial_screen, "category " + c.id);
  for (const auto& s : spec.screens) {
    std::set<std::string> widget_ids;
    for (std::size_t i = 0; i < s.widgets.size(); ++i) {
      const auto& w = s.widgets[i];
      const std::string where = "screen " + s.id + " widget " + w.id;
      if (!widget_ids.insert(w.id).second) out.push_back(where + ": duplicate widget id");
      if (w.box.x0 < 0 || w.box.y0 < 0 || w.box.x1 > spec.render.width || w.box.y1 > spec.render.height ||
          w.box.x0 >= w.box.x1 || w.box.y0 >= w.box.y1) {
        out.push_back(where + ": box outside render bounds or empty");
      }
      for (std::size_t k = 0; k < i; ++k) {
        if (w.box.overlaps(s.widgets[k].box)) out.push_back(where + ": box overlaps widget " + s.widgets[k].id);
      }
      check_target(w.transition.goto_screen, where);
      check_target(w.expected_goto, where);
      if (w.kind == WidgetKind::kScrollArea && w.pages < 2) out.push_back(where + ": scroll area needs >= 2 pages");
    }
    for (const auto& k : s.shortcuts) {
      check_target(k.transition.goto_screen, "screen " + s.id + " shortcut " + k.keys);
      check_target(k.expected_goto, "screen " + s.id + " shortcut " + k.keys);
    }
  }
  return out;
}

bool is_visible(const Widget& widget, const ScreenState& state) {
  for (const auto& [name, value] : widget.visible_if) {
    if (var_or_empty(state, name) != value) return false;
  }
  return true;
}

const Widget* hit_test(const SimAppSpec& spec, const ScreenState& state, Point p) {
  for (const auto& w : spec.screen(state.screen).widgets) {
    if (is_visible(w, state) && w.box.contains(p)) return &w;
  }
  return nullptr;
}

ScreenState apply_action(const SimAppSpec& spec, const ScreenState& state, const Action& action) {
  const Screen& screen = spec.screen(state.screen);
  switch (action.kind) {
    case ActionKind::kClick:
    case ActionKind::kDoubleClick: {
      const Widget* w = hit_test(spec, state, *action.coordinate);
      if (!w) return state;
      switch (w->kind) {
        case WidgetKind::kButton: return apply_transition(state, w->transition);
        case WidgetKind::kIcon: {
          if (action.kind == ActionKind::kDoubleClick) return apply_transition(state, w->transition);
          ScreenState next = state;
          next.vars[kSelectedVar] = w->id;
          return next;
        }
        case WidgetKind::kTextField: {
          ScreenState next = state;
          next.vars[kFocusVar] = w->id;
          return next;
        }
        case WidgetKind::kScrollArea: return state;
      }
      return state;
    }
    case ActionKind::kScroll: {
      const Widget* w = hit_test(spec, state, *action.coordinate);
      if (!w || w->kind != WidgetKind::kScrollArea) return state;
      ScreenState next = state;
      const std::string var = w->id + ".scroll";
      const std::string cur = var_or_empty(state, var);
      const int pos = cur.empty() ? 0 : std::stoi(cur);
      next.vars[var] = std::to_string((pos + 1) % w->pages);
      return next;
    }
    case ActionKind::kTypeText: {
      const std::string focus = var_or_empty(state, kFocusVar);
      if (focus.empty()) return state;
      for (const auto& w : screen.widgets) {
        if (w.id == focus && w.kind == WidgetKind::kTextField && is_visible(w, state)) {
          ScreenState next = state;
          next.vars[w.id] = *action.text;
          return apply_transition(next, w.transition);
        }
      }
      return state;
    }
    case ActionKind::kKey: {
      const std::string chord = text::normalize(*action.text);
      for (const auto& k : screen.shortcuts) {
        if (text::normalize(k.keys) == chord) return apply_transition(state, k.transition);
      }
      return state;
    }
    case ActionKind::kWait: return state;
    case ActionKind::kTerminate: throw ContractError("terminate is not an environment action");
  }
  return state;
}

Observation render_state(const SimAppSpec& spec, const ScreenState& state, const RenderSpec& render,
                         std::uint64_t seed) {
  const int w = render.width;
  const int h = render.height;
  std::vector<std::uint8_t> plane(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  auto at = [&](int x, int y) -> std::uint8_t& {
    return plane[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)];
  };
  auto fill = [&](Box b, std::uint8_t v) {
    for (int y = std::max(0, b.y0); y < std::min(h, b.y1); ++y) {
      for (int x = std::max(0, b.x0); x < std::min(w, b.x1); ++x) at(x, y) = v;
    }
  };

  std::fill(plane.begin(), plane.end(), shade(hash_string(state.screen), 64, 32));

  const std::string focus = var_or_empty(state, kFocusVar);
  const std::string selected = var_or_empty(state, kSelectedVar);
  for (const auto& widget : spec.screen(state.screen).widgets) {
    if (!is_visible(widget, state)) continue;
    const Box& b = widget.box;
    fill(b, shade(hash_string(widget.id), 128, 64));
    if (widget.id == focus || widget.id == selected) {
      fill({b.x0, b.y0, b.x1, b.y0 + 1}, 212);
      fill({b.x0, b.y1 - 1, b.x1, b.y1}, 212);
      fill({b.x0, b.y0, b.x0 + 1, b.y1}, 212);
      fill({b.x1 - 1, b.y0, b.x1, b.y1}, 212);
    }
    if (widget.kind == WidgetKind::kTextField) {
      const std::string value = var_or_empty(state, widget.id);
      if (!value.empty()) {
        const int mid = (b.y0 + b.y1) / 2;
        fill({b.x0 + 1, mid, b.x1 - 1, mid + 1}, shade(hash_string(value), 100, 100));
      }
    }
    if (widget.kind == WidgetKind::kScrollArea) {
      const std::string cur = var_or_empty(state, widget.id + ".scroll");
      const int pos = cur.empty() ? 0 : std::stoi(cur);
      const int span = std::max(1, (b.y1 - b.y0) / std::max(1, widget.pages));
      fill({b.x1 - 2, b.y0 + pos * span, b.x1, b.y0 + (pos + 1) * span}, 220);
    }
  }

  // Seed-placed decorations (wallpaper marks) above the state strip.
  const int usable_h = std::max(1, h - 4);
  for (std::uint64_t i = 0; i < 3; ++i) {
    const auto hx = hash_combine(seed, 2 * i);
    const auto hy = hash_combine(seed, 2 * i + 1);
    const int x = static_cast<int>(hx % static_cast<std::uint64_t>(std::max(1, w - 2)));
    const int y = static_cast<int>(hy % static_cast<std::uint64_t>(usable_h));
    fill({x, y, x + 2, y + 2}, 200);
  }

  // State strip: two bottom rows encode every variable so any mutation is visible.
  const int strip_y = std::max(0, h - 2);
  if (state.vars.empty()) {
    fill({0, strip_y, w, h}, 48);
  } else {
    const int n = static_cast<int>(state.vars.size());
    int i = 0;
    for (const auto& [name, value] : state.vars) {
      const int x0 = i * w / n;
      const int x1 = (i + 1) * w / n;
      fill({x0, strip_y, std::max(x1, x0 + 1), h}, shade(hash_string(name + "=" + value), 40, 180));
      ++i;
    }
  }

  std::vector<std::uint8_t> pixels;
  if (render.channels == 1) {
    pixels = std::move(plane);
  } else {
    pixels.resize(plane.size() * 3);
    for (std::size_t p = 0; p < plane.size(); ++p) {
      for (int c = 0; c < 3; ++c) {
        pixels[p * 3 + static_cast<std::size_t>(c)] =
            static_cast<std::uint8_t>(std::clamp(static_cast<int>(plane[p]) + (c - 1) * 12, 0, 255));
      }
    }
  }
  return Observation(w, h, render.channels, std::move(pixels), state);
}

Observation add_noise(const Observation& clean, double amplitude, std::uint64_t noise_seed) {
  if (amplitude <= 0.0) return clean;
  // Uniform on [-a*sqrt(3), a*sqrt(3)] has standard deviation a.
  const double half_width = amplitude * std::sqrt(3.0);
  std::mt19937_64 rng(noise_seed);
  std::vector<std::uint8_t> pixels(clean.pixels().begin(), clean.pixels().end());
  for (auto& v : pixels) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double shifted = static_cast<double>(v) + (2.0 * u - 1.0) * half_width;
    v = static_cast<std::uint8_t>(std::clamp(std::lround(shifted), 0L, 255L));
  }
  return Observation(clean.width(), clean.height(), clean.channels(), std::move(pixels), clean.state());
}

ScreenState initial_state(const SimAppSpec& spec, const EnvironmentConfig& config) {
  if (auto v = config_violation(config)) throw ConfigError(*v);
  const Category* category = spec.category(config.category);
  if (!category) throw ConfigError("unknown category '" + config.category + "' for sim spec " + spec.name);
  for (const auto& s : spec.screens) {
    for (const auto& wd : s.widgets) {
      if (wd.box.x1 > config.render.width || wd.box.y1 > config.render.height) {
        throw ConfigError("render " + std::to_string(config.render.width) + "x" +
                          std::to_string(config.render.height) + " does not contain widget " + wd.id);
      }
    }
  }
  ScreenState state;
  state.screen = category->initial_screen.value_or(spec.initial_screen);
  state.vars = category->vars;
  for (const auto& asset : config.asset_manifest) {
    auto it = spec.assets.find(asset.ref);
    if (it == spec.assets.end()) {
      throw AssetError("asset '" + asset.name + "' references unknown payload '" + asset.ref + "'");
    }
    for (const auto& [name, value] : it->second) state.vars[name] = value;
  }
  return state;
}

// ---------------------------------------------------------------------------
// SimEnvironment

SimEnvironment::SimEnvironment(std::shared_ptr<const SimAppSpec> spec) : spec_(std::move(spec)) {
  if (!spec_) throw ContractError("SimEnvironment needs a spec");
}

Observation SimEnvironment::reset(const EnvironmentConfig& config) {
  state_ = initial_state(*spec_, config);
  config_ = config;
  return current_frame();
}

Observation SimEnvironment::step(const Action& action) {
  if (!config_) throw ContractError("step called before reset");
  check_action(action);
  if (action.kind == ActionKind::kTerminate) throw ContractError("terminate is handled by the engine, not the environment");
  state_ = apply_action(*spec_, state_, action);
  return current_frame();
}

Observation SimEnvironment::render_clean() const {
  if (!config_) throw ContractError("render before reset");
  return render_state(*spec_, state_, config_->render, config_->seed);
}

Observation SimEnvironment::render_noisy(std::uint64_t step_index) const {
  if (!config_) throw ContractError("render before reset");
  return add_noise(render_clean(), config_->noise_amplitude,
                   hash_combine(hash_combine(config_->seed, 0x6e6f697365ULL), step_index));
}

const ScreenState& SimEnvironment::state() const {
  if (!config_) throw ContractError("state queried before reset");
  return state_;
}

Observation SimEnvironment::current_frame() {
  if (config_->noise_amplitude > 0.0) return render_noisy(frame_counter_++);
  return render_clean();
}

}  // namespace cuatree
