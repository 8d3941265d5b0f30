#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clea/world.hpp"

namespace clea {

// Atomic world-state predicate used by milestones and goals.
struct Predicate {
  enum class Kind { ObjectAt, IsOpen, Holding, RobotAt, ObjectGone };
  Kind kind = Kind::ObjectAt;
  std::string a;  // object / container / robot, per kind
  std::string b;  // place / navpoint / object, per kind

  bool eval(const WorldConfig& cfg, const WorldState& state) const;
};

// Conjunction of atoms.
struct Condition {
  std::vector<Predicate> all;
  bool eval(const WorldConfig& cfg, const WorldState& state) const;
  bool empty() const { return all.empty(); }
};

// Graded checkpoint worth one point. A milestone counts as achieved once its
// condition has held after any executed action of the episode.
struct Milestone {
  std::string name;
  Condition when;
};

struct Task {
  std::string instruction;
  std::vector<Milestone> milestones;
  Condition goal;
  std::vector<PerturbationEvent> perturbations;

  int max_points() const { return static_cast<int>(milestones.size()); }
};

Predicate predicate_from_json(const nlohmann::json& j);
nlohmann::json predicate_to_json(const Predicate& p);
Condition condition_from_json(const nlohmann::json& j);
nlohmann::json condition_to_json(const Condition& c);

// Throws ConfigError if a predicate references a token the config does not
// know, or with the wrong kind.
void validate_condition(const WorldConfig& cfg, const Condition& c);

}  // namespace clea
