#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <thread>

#include "../support/helpers.hpp"
#include "cuatree/error.hpp"
#include "cuatree/remote_env.hpp"

using namespace cuatree;

namespace {

Json editor_spec_json() {
  return {{"name", "editor"},
          {"render", {{"width", 64}, {"height", 64}, {"channels", 1}}},
          {"initial_screen", "welcome"},
          {"categories", Json::array({{{"id", "editor"}, {"knowledge", "An IDE."}, {"initial_screen", "workspace"}}})},
          {"assets", {{"projects/demo", {{"project", "demo"}}}}},
          {"screens",
           Json::array({{{"id", "welcome"}},
                        {{"id", "workspace"},
                         {"widgets", Json::array({{{"id", "project_panel"},
                                                   {"box", {0, 0, 32, 64}},
                                                   {"label", "demo project"},
                                                   {"visible_if", {{"project", "demo"}}},
                                                   {"goto", "welcome"}}})}}})}};
}

EnvironmentConfig config_for(const SimAppSpec& spec, std::uint64_t seed = 3, double noise = 0.0) {
  EnvironmentConfig c;
  c.category = spec.categories.front().id;
  c.seed = seed;
  c.noise_amplitude = noise;
  c.render = spec.render;
  return c;
}

}  // namespace

TEST_CASE("reset applies category and assets") {
  auto spec = testing::spec_from(editor_spec_json());
  SimEnvironment env(spec);
  EnvironmentConfig cfg = config_for(*spec);
  const Observation bare = env.reset(cfg);
  CHECK(env.state().screen == "workspace");
  CHECK_FALSE(is_visible(spec->screen("workspace").widgets[0], env.state()));

  cfg.asset_manifest.push_back({"demo", "project", "projects/demo"});
  const Observation loaded = env.reset(cfg);
  CHECK(is_visible(spec->screen("workspace").widgets[0], env.state()));
  CHECK(loaded.digest() != bare.digest());
  CHECK(loaded.state()->vars.at("project") == "demo");

  SUBCASE("unknown category") {
    cfg.category = "nope";
    CHECK_THROWS_AS(env.reset(cfg), ConfigError);
  }
  SUBCASE("unresolvable asset") {
    cfg.asset_manifest.push_back({"ghost", "document", "docs/missing"});
    CHECK_THROWS_AS(env.reset(cfg), AssetError);
  }
  SUBCASE("invalid render") {
    cfg.render.width = 0;
    CHECK_THROWS_AS(env.reset(cfg), ConfigError);
  }
}

TEST_CASE("reset determinism and seed dependence") {
  auto spec = testing::load_fixture_spec("launcher.json");
  SimEnvironment a(spec), b(spec);
  const auto cfg = config_for(*spec, 11);
  CHECK(a.reset(cfg).digest() == b.reset(cfg).digest());
  CHECK(a.reset(cfg).digest() == a.reset(cfg).digest());
  auto other = cfg;
  other.seed = 12;
  CHECK(a.reset(other).digest() != b.reset(cfg).digest());
}

TEST_CASE("step semantics") {
  auto spec = testing::spec_from(testing::chain_spec_json(2));
  SimEnvironment env(spec);
  const Observation start = env.reset(config_for(*spec));

  SUBCASE("click on a navigation widget") {
    const Observation next = env.step(Action::click(20, 12));
    CHECK(env.state().screen == "s1");
    CHECK(next.digest() != start.digest());
    SimEnvironment fresh(spec);
    fresh.reset(config_for(*spec));
    // Oracle: the transition table says next0 leads to s1.
    CHECK(apply_action(*spec, ScreenState{"s0", {}}, Action::click(20, 12)).screen == "s1");
  }
  SUBCASE("click on empty canvas") {
    CHECK(env.step(Action::click(45, 30)).digest() == start.digest());
    CHECK(env.state().screen == "s0");
  }
  SUBCASE("wait re-renders the same state") { CHECK(env.step(Action::wait(2.0)).digest() == start.digest()); }
  SUBCASE("terminate is rejected") { CHECK_THROWS_AS(env.step(Action::terminate()), ContractError); }
  SUBCASE("step before reset") {
    SimEnvironment cold(spec);
    CHECK_THROWS_AS(cold.step(Action::wait(1.0)), ContractError);
  }
}

TEST_CASE("hit testing uses half-open boxes") {
  auto spec = testing::spec_from(testing::chain_spec_json(1));
  const ScreenState s{"s0", {}};
  CHECK(hit_test(*spec, s, {8, 8}) != nullptr);
  CHECK(hit_test(*spec, s, {39, 23}) != nullptr);
  CHECK(hit_test(*spec, s, {40, 8}) == nullptr);
  CHECK(hit_test(*spec, s, {8, 24}) == nullptr);
}

TEST_CASE("replaying an action sequence is a pure function of config and actions") {
  auto spec = testing::load_fixture_spec("launcher.json");
  std::mt19937_64 rng(9);
  const auto cfg = config_for(*spec, 21);
  std::set<std::string> screens;
  for (const auto& s : spec->screens) screens.insert(s.id);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Action> actions;
    for (int i = 0; i < 15; ++i) {
      switch (rng() % 4) {
        case 0: actions.push_back(Action::click(static_cast<int>(rng() % 160), static_cast<int>(rng() % 120))); break;
        case 1: actions.push_back(Action::double_click(static_cast<int>(rng() % 160), static_cast<int>(rng() % 120))); break;
        case 2: actions.push_back(Action::key(rng() % 2 ? "ctrl+f" : "ctrl+alt+t")); break;
        default: actions.push_back(Action::type_text("query")); break;
      }
    }
    SimEnvironment a(spec), b(spec);
    a.reset(cfg);
    b.reset(cfg);
    for (const auto& act : actions) {
      CHECK(a.step(act).digest() == b.step(act).digest());
      CHECK(screens.contains(a.state().screen));
    }
  }
}

TEST_CASE("noise calibration") {
  auto spec = testing::load_fixture_spec("launcher.json");
  auto measure = [&](double amplitude) {
    SimEnvironment env(spec);
    env.reset(config_for(*spec, 4, amplitude));
    const Observation clean = env.render_clean();
    double sum = 0.0;
    for (std::uint64_t i = 0; i < 100; ++i) {
      const Observation noisy = env.render_noisy(i);
      double sq = 0.0;
      for (std::size_t k = 0; k < clean.pixels().size(); ++k) {
        const double d = double(clean.pixels()[k]) - double(noisy.pixels()[k]);
        sq += d * d;
      }
      sum += std::sqrt(sq / double(clean.pixels().size()));
    }
    return sum / 100.0;
  };
  SUBCASE("zero amplitude is the clean render") {
    SimEnvironment env(spec);
    env.reset(config_for(*spec, 4));
    CHECK(env.render_noisy(3).digest() == env.render_clean().digest());
  }
  SUBCASE("amplitude 3") {
    const double rms = measure(3.0);
    CHECK(rms >= 2.7);
    CHECK(rms <= 3.3);
  }
  SUBCASE("amplitude 8") {
    const double rms = measure(8.0);
    CHECK(rms > 5.0);
    CHECK(rms == doctest::Approx(8.0).epsilon(0.1));
  }
}

TEST_CASE("sim spec validation") {
  Json j = testing::chain_spec_json(1);
  CHECK(validate(sim_spec_from_json(j)).empty());
  j["screens"][0]["widgets"][0]["goto"] = "missing";
  CHECK_FALSE(validate(sim_spec_from_json(j)).empty());
  Json k = testing::chain_spec_json(1);
  k["screens"][0]["widgets"][0]["box"] = {0, 0, 100, 10};
  CHECK_FALSE(validate(sim_spec_from_json(k)).empty());
  Json overlap = testing::chain_spec_json(1);
  overlap["screens"][0]["widgets"].push_back({{"id", "dup"}, {"box", {10, 10, 20, 20}}});
  CHECK_FALSE(validate(sim_spec_from_json(overlap)).empty());
}

TEST_CASE("sim spec JSON round trip") {
  const SimAppSpec spec = load_sim_spec(testing::fixture("launcher.json"));
  const SimAppSpec back = sim_spec_from_json(Json::parse(to_json(spec).dump()));
  CHECK(to_json(back) == to_json(spec));
}

TEST_CASE("remote environment over a framed stream") {
  auto spec = testing::load_fixture_spec("launcher.json");
  auto [client, server] = FdStream::socket_pair();
  std::thread serving([&, s = std::move(server)]() mutable {
    SimEnvironment env(spec);
    serve_environment(*s, env);
  });
  std::shared_ptr<ByteStream> shared(std::move(client));
  bool connected = false;
  {
    RemoteEnvironment remote([&]() -> std::unique_ptr<ByteStream> {
      if (connected) throw TransportError("single connection");
      connected = true;
      struct Borrowed final : ByteStream {
        std::shared_ptr<ByteStream> inner;
        void write_all(std::span<const std::uint8_t> b) override { inner->write_all(b); }
        void read_exact(std::span<std::uint8_t> b) override { inner->read_exact(b); }
      };
      auto s = std::make_unique<Borrowed>();
      s->inner = shared;
      return s;
    });
    SimEnvironment local(spec);
    const auto cfg = config_for(*spec, 17);
    CHECK(remote.reset(cfg).digest() == local.reset(cfg).digest());
    for (const auto& a : {Action::double_click(19, 19), Action::key("ctrl+f"), Action::click(1, 119)}) {
      const Observation r = remote.step(a);
      CHECK(r.digest() == local.step(a).digest());
      CHECK_FALSE(r.state().has_value());
    }
    CHECK_THROWS_AS(remote.step(Action::terminate()), ContractError);
  }
  shared.reset();
  serving.join();
}

TEST_CASE("base64 round trip") {
  const std::vector<std::uint8_t> bytes{0, 1, 2, 250, 251, 252, 253, 254, 255};
  for (std::size_t n = 0; n <= bytes.size(); ++n) {
    std::vector<std::uint8_t> prefix(bytes.begin(), bytes.begin() + static_cast<long>(n));
    CHECK(base64_decode(base64_encode(prefix)) == prefix);
  }
  CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a', 'n'}) == "TWFu");
}
