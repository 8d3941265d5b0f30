#include "clea/task.hpp"

#include <algorithm>

namespace clea {

bool Predicate::eval(const WorldConfig& cfg, const WorldState& state) const {
  switch (kind) {
    case Kind::ObjectAt: {
      auto place = where_is(cfg, state, a);
      return place.has_value() && *place == b;
    }
    case Kind::IsOpen:
      return is_open(cfg, state, a);
    case Kind::Holding: {
      const auto& hand = holding(cfg, state, a);
      return std::find(hand.begin(), hand.end(), b) != hand.end();
    }
    case Kind::RobotAt:
      return state.robot_at.at(a) == b;
    case Kind::ObjectGone:
      return !where_is(cfg, state, a).has_value();
  }
  return false;
}

bool Condition::eval(const WorldConfig& cfg, const WorldState& state) const {
  return std::all_of(all.begin(), all.end(),
                     [&](const Predicate& p) { return p.eval(cfg, state); });
}

Predicate predicate_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("pred").get<std::string>();
  Predicate p;
  if (kind == "object_at") {
    p.kind = Predicate::Kind::ObjectAt;
    p.a = j.at("object").get<std::string>();
    p.b = j.at("place").get<std::string>();
  } else if (kind == "is_open") {
    p.kind = Predicate::Kind::IsOpen;
    p.a = j.at("container").get<std::string>();
  } else if (kind == "holding") {
    p.kind = Predicate::Kind::Holding;
    p.a = j.at("robot").get<std::string>();
    p.b = j.at("object").get<std::string>();
  } else if (kind == "robot_at") {
    p.kind = Predicate::Kind::RobotAt;
    p.a = j.at("robot").get<std::string>();
    p.b = j.at("navpoint").get<std::string>();
  } else if (kind == "object_gone") {
    p.kind = Predicate::Kind::ObjectGone;
    p.a = j.at("object").get<std::string>();
  } else {
    throw ConfigError("unknown predicate '" + kind + "'");
  }
  return p;
}

nlohmann::json predicate_to_json(const Predicate& p) {
  switch (p.kind) {
    case Predicate::Kind::ObjectAt:
      return {{"pred", "object_at"}, {"object", p.a}, {"place", p.b}};
    case Predicate::Kind::IsOpen:
      return {{"pred", "is_open"}, {"container", p.a}};
    case Predicate::Kind::Holding:
      return {{"pred", "holding"}, {"robot", p.a}, {"object", p.b}};
    case Predicate::Kind::RobotAt:
      return {{"pred", "robot_at"}, {"robot", p.a}, {"navpoint", p.b}};
    case Predicate::Kind::ObjectGone:
      return {{"pred", "object_gone"}, {"object", p.a}};
  }
  return {};
}

Condition condition_from_json(const nlohmann::json& j) {
  Condition c;
  const nlohmann::json& arr = j.is_array() ? j : j.at("all");
  for (const auto& p : arr) c.all.push_back(predicate_from_json(p));
  return c;
}

nlohmann::json condition_to_json(const Condition& c) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : c.all) arr.push_back(predicate_to_json(p));
  return {{"all", arr}};
}

void validate_condition(const WorldConfig& cfg, const Condition& c) {
  for (const auto& p : c.all) {
    switch (p.kind) {
      case Predicate::Kind::ObjectAt:
        if (!cfg.is_object(p.a)) throw ConfigError("predicate object '" + p.a + "' unknown");
        if (!cfg.is_place(p.b)) throw ConfigError("predicate place '" + p.b + "' unknown");
        break;
      case Predicate::Kind::IsOpen:
        if (!cfg.is_container(p.a))
          throw ConfigError("predicate container '" + p.a + "' unknown");
        break;
      case Predicate::Kind::Holding:
        if (!cfg.is_robot(p.a)) throw ConfigError("predicate robot '" + p.a + "' unknown");
        if (!cfg.is_object(p.b)) throw ConfigError("predicate object '" + p.b + "' unknown");
        break;
      case Predicate::Kind::RobotAt:
        if (!cfg.is_robot(p.a)) throw ConfigError("predicate robot '" + p.a + "' unknown");
        if (!cfg.is_place(p.b)) throw ConfigError("predicate navpoint '" + p.b + "' unknown");
        break;
      case Predicate::Kind::ObjectGone:
        if (!cfg.is_object(p.a)) throw ConfigError("predicate object '" + p.a + "' unknown");
        break;
    }
  }
}

}  // namespace clea
