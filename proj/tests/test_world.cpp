#include "doctest.h"

#include "clea/world.hpp"
#include "properties.hpp"
#include "test_support.hpp"

using namespace clea;
using namespace clea::testing;

namespace {

Action act(const std::string& text) {
  auto res = parse_action(text);
  REQUIRE(res.ok());
  return res.value();
}

}  // namespace

TEST_CASE("load_world mirrors the config") {
  const WorldConfig cfg = default_kitchen();
  const WorldState state = load_world(cfg);

  CHECK(state.step_count == 0);
  CHECK(state.object_place.size() == 10);
  int closed = 0;
  for (const auto& [token, open] : state.container_open) {
    if (!open) ++closed;
  }
  CHECK(closed == 4);
  CHECK(state.robot_at.at("robot1") == "sink");
  CHECK(state.robot_at.at("robot2") == "table");
  CHECK(holding(cfg, state, "robot1").empty());
}

TEST_CASE("empty object list is a valid world") {
  WorldConfig cfg = mini_world();
  cfg.objects.clear();
  const WorldState state = load_world(cfg);
  CHECK(state.object_place.empty());
}

TEST_CASE("config errors name the first dangling reference") {
  WorldConfig cfg = mini_world();
  cfg.robots[0].start_navpoint = "hallway";
  CHECK_THROWS_AS(load_world(cfg), ConfigError);

  cfg = mini_world();
  cfg.objects.push_back({"pear", "cupboard"});
  CHECK_THROWS_WITH_AS(load_world(cfg), doctest::Contains("cupboard"), ConfigError);

  cfg = mini_world();
  cfg.navpoints.pop_back();  // box loses its navpoint
  CHECK_THROWS_AS(load_world(cfg), ConfigError);

  cfg = mini_world();
  cfg.objects.push_back({"apple", "table"});  // duplicate token
  CHECK_THROWS_AS(load_world(cfg), ConfigError);
}

TEST_CASE("step: the documented rule table on concrete cases") {
  const WorldConfig cfg = default_kitchen();
  WorldState state = load_world(cfg);

  SUBCASE("open requires presence and a closed flag") {
    auto r = step(cfg, state, act("open(robot1, refrigerator)"));
    CHECK(!r.feedback.ok);
    CHECK(r.feedback.error == FeedbackKind::NotAtLocation);

    state = step(cfg, state, act("go_to(robot1, refrigerator)")).state;
    r = step(cfg, state, act("open(robot1, refrigerator)"));
    CHECK(r.feedback.ok);
    CHECK(is_open(cfg, r.state, "refrigerator"));

    auto again = step(cfg, r.state, act("open(robot1, refrigerator)"));
    CHECK(!again.feedback.ok);
    CHECK(again.feedback.error == FeedbackKind::ContainerClosed);  // flag already open
  }

  SUBCASE("pick through a closed container is refused without leaking contents") {
    state = step(cfg, state, act("go_to(robot1, refrigerator)")).state;
    auto r = step(cfg, state, act("pick_from(robot1, water, refrigerator)"));
    CHECK(!r.feedback.ok);
    CHECK(r.feedback.error == FeedbackKind::ContainerClosed);

    // Even for an object that is not inside: the closed lid wins.
    r = step(cfg, state, act("pick_from(robot1, apple, refrigerator)"));
    CHECK(r.feedback.error == FeedbackKind::ContainerClosed);
  }

  SUBCASE("stationary robots cannot move") {
    auto r = step(cfg, state, act("go_to(robot2, sink)"));
    CHECK(!r.feedback.ok);
    CHECK(r.feedback.error == FeedbackKind::ImmobileRobot);
  }

  SUBCASE("hand capacity is enforced") {
    state = step(cfg, state, act("go_to(robot1, table)")).state;
    state = step(cfg, state, act("pick_from(robot1, apple, table)")).state;
    state = step(cfg, state, act("pick_from(robot1, salt, table)")).state;
    CHECK(holding(cfg, state, "robot1").size() == 2);
    auto r = step(cfg, state, act("pick_from(robot1, plate, table)"));
    CHECK(r.feedback.error == FeedbackKind::HandFull);

    // robot2 (capacity 1) fills up after one pick.
    state = step(cfg, state, act("pick_from(robot2, plate, table)")).state;
    r = step(cfg, state, act("pick_from(robot2, plate, table)"));
    CHECK(r.feedback.error == FeedbackKind::ObjectNotVisible);  // already in its hand
  }

  SUBCASE("release hands back the most recent pick; the garbage can destroys") {
    state = step(cfg, state, act("go_to(robot1, table)")).state;
    state = step(cfg, state, act("pick_from(robot1, apple, table)")).state;
    state = step(cfg, state, act("pick_from(robot1, salt, table)")).state;
    state = step(cfg, state, act("go_to(robot1, sink)")).state;
    state = step(cfg, state, act("release_to(robot1, sink)")).state;
    CHECK(where_is(cfg, state, "salt") == "sink");  // LIFO
    CHECK(where_is(cfg, state, "apple") == "robot1");

    state = step(cfg, state, act("go_to(robot1, garbage_can)")).state;
    state = step(cfg, state, act("release_to(robot1, garbage_can)")).state;
    CHECK(!where_is(cfg, state, "apple").has_value());  // destroyed

    auto r = step(cfg, state, act("release_to(robot1, garbage_can)"));
    CHECK(r.feedback.error == FeedbackKind::HandEmpty);
  }

  SUBCASE("unknown and kind-mismatched tokens") {
    auto r = step(cfg, state, act("open(robot1, ghost)"));
    CHECK(r.feedback.error == FeedbackKind::UnknownEntity);
    r = step(cfg, state, act("open(robot1, table)"));
    CHECK(r.feedback.error == FeedbackKind::MalformedAction);  // a space is not openable
    r = step(cfg, state, act("open(robot1, garbage_can)"));
    CHECK(r.feedback.error == FeedbackKind::MalformedAction);  // devices are not openable
    r = step(cfg, state, act("go_to(apple, sink)"));
    CHECK(r.feedback.error == FeedbackKind::MalformedAction);
  }

  SUBCASE("every feedback kind is reachable") {
    std::set<FeedbackKind> seen;
    auto record = [&](const StepResult& r) {
      if (r.feedback.error) seen.insert(*r.feedback.error);
    };
    record(step(cfg, state, act("open(robot1, refrigerator)")));          // NotAtLocation
    record(step(cfg, state, act("go_to(robot2, sink)")));                 // ImmobileRobot
    record(step(cfg, state, act("open(robot1, ghost)")));                 // UnknownEntity
    record(step(cfg, state, act("open(robot1, table)")));                 // MalformedAction
    WorldState s2 = step(cfg, state, act("go_to(robot1, refrigerator)")).state;
    record(step(cfg, s2, act("pick_from(robot1, water, refrigerator)"))); // ContainerClosed
    record(step(cfg, s2, act("release_to(robot1, refrigerator)")));       // ContainerClosed
    WorldState s3 = step(cfg, state, act("go_to(robot1, table)")).state;
    record(step(cfg, s3, act("pick_from(robot1, water, table)")));        // ObjectNotVisible
    record(step(cfg, s3, act("release_to(robot1, table)")));              // HandEmpty
    s3 = step(cfg, s3, act("pick_from(robot1, apple, table)")).state;
    s3 = step(cfg, s3, act("pick_from(robot1, salt, table)")).state;
    record(step(cfg, s3, act("pick_from(robot1, plate, table)")));        // HandFull
    CHECK(seen.size() == 8);
  }
}

TEST_CASE("observe is partial and self-aware") {
  const WorldConfig cfg = default_kitchen();
  WorldState state = load_world(cfg);

  SUBCASE("closed container shows its flag, never its contents") {
    state = step(cfg, state, act("go_to(robot1, oven)")).state;
    const RawObservation obs = observe(cfg, state, "robot1");
    CHECK(obs.position == "oven");
    REQUIRE(obs.container_flags.count("oven") == 1);
    CHECK(obs.container_flags.at("oven") == false);
    for (const auto& fact : obs.facts) CHECK(fact.place != "oven");
  }

  SUBCASE("own hand contents are always visible") {
    state = step(cfg, state, act("go_to(robot1, table)")).state;
    state = step(cfg, state, act("pick_from(robot1, apple, table)")).state;
    state = step(cfg, state, act("go_to(robot1, oven)")).state;
    const RawObservation obs = observe(cfg, state, "robot1");
    bool holds_apple = false;
    for (const auto& fact : obs.facts) {
      if (fact.entity == "apple" && fact.attribute == "held" && fact.place == "robot1")
        holds_apple = true;
    }
    CHECK(holds_apple);
  }

  SUBCASE("the stationary robot keeps seeing the table wherever robot1 goes") {
    for (const char* nav : {"refrigerator", "oven", "sink"}) {
      state = step(cfg, state, act(std::string("go_to(robot1, ") + nav + ")")).state;
      const RawObservation obs = observe(cfg, state, "robot2");
      CHECK(obs.position == "table");
      bool sees_table_object = false;
      for (const auto& fact : obs.facts) {
        if (fact.place == "table") sees_table_object = true;
      }
      CHECK(sees_table_object);
    }
  }

  CHECK_THROWS_AS(observe(cfg, state, "robot9"), UnknownEntityError);
}

TEST_CASE("perturbations apply at their trigger step only") {
  const WorldConfig cfg = default_kitchen();
  WorldState state = load_world(cfg);
  state = step(cfg, state, act("go_to(robot1, refrigerator)")).state;
  state = step(cfg, state, act("open(robot1, refrigerator)")).state;

  std::vector<PerturbationEvent> schedule = {
      {5, PerturbationEvent::Effect::CloseContainer, "refrigerator", "", ""},
      {5, PerturbationEvent::Effect::MoveObject, "", "apple", "sink"},
      {6, PerturbationEvent::Effect::MoveObject, "", "ghost", "sink"},
  };

  WorldState same = apply_perturbations(cfg, state, schedule, 4);
  CHECK(same == state);

  std::vector<std::string> log;
  WorldState after = apply_perturbations(cfg, state, schedule, 5, &log);
  CHECK(!is_open(cfg, after, "refrigerator"));
  CHECK(where_is(cfg, after, "apple") == "sink");
  CHECK(log.size() == 2);

  log.clear();
  WorldState skipped = apply_perturbations(cfg, after, schedule, 6, &log);
  CHECK(skipped == after);
  REQUIRE(log.size() == 1);
  CHECK(log[0].find("skipped") != std::string::npos);

  SUBCASE("moving a held object empties the hand") {
    WorldState held = load_world(cfg);
    held = step(cfg, held, act("go_to(robot1, table)")).state;
    held = step(cfg, held, act("pick_from(robot1, apple, table)")).state;
    std::vector<PerturbationEvent> move = {
        {0, PerturbationEvent::Effect::MoveObject, "", "apple", "sink"}};
    WorldState out = apply_perturbations(cfg, held, move, 0);
    CHECK(where_is(cfg, out, "apple") == "sink");
    CHECK(holding(cfg, out, "robot1").empty());
  }
}

TEST_CASE("state digests fingerprint exactly the state") {
  const WorldConfig cfg = default_kitchen();
  const WorldState state = load_world(cfg);
  WorldState copy = state;
  CHECK(state_digest(state) == state_digest(copy));

  const StepResult moved = step(cfg, state, act("go_to(robot1, oven)"));
  CHECK(state_digest(moved.state) != state_digest(state));

  const StepResult failed = step(cfg, state, act("open(robot1, oven)"));
  CHECK(state_digest(failed.state) == state_digest(state));
}

TEST_CASE("queries read the ground truth") {
  const WorldConfig cfg = default_kitchen();
  WorldState state = load_world(cfg);
  CHECK(where_is(cfg, state, "apple") == "table");
  CHECK(!is_open(cfg, state, "oven"));
  CHECK_THROWS_AS(where_is(cfg, state, "ghost"), UnknownEntityError);
  CHECK_THROWS_AS(is_open(cfg, state, "table"), UnknownEntityError);

  state = step(cfg, state, act("go_to(robot1, table)")).state;
  state = step(cfg, state, act("pick_from(robot1, apple, table)")).state;
  const auto& hand = holding(cfg, state, "robot1");
  REQUIRE(hand.size() == 1);
  CHECK(hand[0] == "apple");
  CHECK(where_is(cfg, state, "apple") == "robot1");

  state = step(cfg, state, act("release_to(robot1, table)")).state;
  CHECK(where_is(cfg, state, "apple") == "table");
}

TEST_CASE("object conservation modulo the garbage can") {
  const WorldConfig cfg = default_kitchen();
  WorldState state = load_world(cfg);
  std::mt19937_64 rng(11);
  const auto actions = enumerate_actions(cfg);
  std::size_t objects = state.object_place.size();
  for (int i = 0; i < 4000; ++i) {
    const auto& action = actions[rng() % actions.size()];
    const StepResult result = step(cfg, state, action);
    const bool destroyed = result.feedback.ok &&
                           std::holds_alternative<ReleaseToAction>(action) &&
                           cfg.is_destructive(std::get<ReleaseToAction>(action).space.token);
    if (destroyed) objects -= 1;
    CHECK(result.state.object_place.size() == objects);
    state = result.state;
  }
}

TEST_CASE("mini-world transition oracle equivalence (small run)") {
  const PropertyReport report = oracle_equivalence(mini_world());
  CAPTURE(report.detail);
  CHECK(report.ok);
  CHECK(report.checked > 1000);
}

TEST_CASE("error purity and replay determinism (small run)") {
  const PropertyReport report = error_purity_and_replay(default_kitchen(), 500, 10, 42);
  CAPTURE(report.detail);
  CHECK(report.ok);
}

TEST_CASE("observation soundness (small run)") {
  const PropertyReport report = observation_soundness(default_kitchen(), 1000, 43);
  CAPTURE(report.detail);
  CHECK(report.ok);
}

TEST_CASE("world config JSON round-trips") {
  const WorldConfig cfg = default_kitchen();
  const WorldConfig back = config_from_json(config_to_json(cfg));
  CHECK(load_world(back) == load_world(cfg));
  CHECK(back.is_destructive("garbage_can"));
  CHECK(back.is_container("oven"));
  CHECK(back.is_device("oven"));
}
