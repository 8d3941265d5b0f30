#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clea/skills.hpp"

namespace clea {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnknownEntityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ObjectSpec {
  std::string token;
  std::string place;
};
struct ContainerSpec {
  std::string token;
  bool initially_open = false;
};
struct DeviceSpec {
  std::string token;
  bool destructive = false;  // releasing into a destructive device removes the object
};
struct RobotSpec {
  std::string token;
  bool mobile = false;
  int hand_capacity = 1;
  std::string start_navpoint;
};

struct PerturbationEvent {
  int trigger_step = 0;
  enum class Effect { CloseContainer, MoveObject };
  Effect effect = Effect::CloseContainer;
  std::string container;  // CloseContainer
  std::string object;     // MoveObject
  std::string to;         // MoveObject
};

// Static description of a world. Places are spaces, containers and devices;
// a token may be both a container and a device (an openable appliance), all
// other token collisions are config errors. Navigation points name places
// one-to-one, so the navpoints list must equal the set of place tokens.
struct WorldConfig {
  std::vector<std::string> spaces;
  std::vector<ContainerSpec> containers;
  std::vector<DeviceSpec> devices;
  std::vector<std::string> navpoints;
  std::vector<ObjectSpec> objects;
  std::vector<RobotSpec> robots;
  std::vector<PerturbationEvent> perturbations;

  bool is_space(const std::string& token) const;
  bool is_container(const std::string& token) const;
  bool is_device(const std::string& token) const;
  bool is_place(const std::string& token) const;
  bool is_object(const std::string& token) const;
  bool is_robot(const std::string& token) const;
  bool is_destructive(const std::string& token) const;
  bool knows(const std::string& token) const;
  const RobotSpec* robot(const std::string& token) const;
};

// Ground truth. Held objects map to the holding robot's token in
// object_place; robot_hand keeps pick order (release_to hands back the most
// recently picked object). Objects released into a destructive device are
// erased. step_count advances only on successful actions.
struct WorldState {
  std::map<std::string, std::string> object_place;
  std::map<std::string, bool> container_open;
  std::map<std::string, std::string> robot_at;
  std::map<std::string, std::vector<std::string>> robot_hand;
  int step_count = 0;

  bool operator==(const WorldState&) const = default;
};

enum class FeedbackKind {
  NotAtLocation,
  ContainerClosed,
  HandFull,
  HandEmpty,
  ObjectNotVisible,
  ImmobileRobot,
  UnknownEntity,
  MalformedAction,
};

const char* to_string(FeedbackKind kind);

struct Feedback {
  bool ok = true;
  std::optional<FeedbackKind> error;
  std::string message;

  static Feedback success(std::string message = "ok");
  static Feedback failure(FeedbackKind kind, std::string message);
};

struct VisibleFact {
  std::string entity;
  std::string place;      // place token, or the holding robot's token
  std::string attribute;  // "" or "held"
};

// What one robot can see this step: its own position and hand, the place it
// stands at (contents only when that place is open), never the inside of a
// closed container.
struct RawObservation {
  std::string robot;
  std::string position;
  std::vector<VisibleFact> facts;
  std::map<std::string, bool> container_flags;
  int step = 0;
};

// Builds the initial state. Throws ConfigError naming the first dangling
// reference or token violation.
WorldState load_world(const WorldConfig& cfg);
void validate_config(const WorldConfig& cfg);

// Static validation of an action against a config: every token must exist
// (checked left to right, UnknownEntity) and have a kind compatible with its
// slot (checked left to right, MalformedAction). Slot compatibility: robot
// slots take robots; open/close targets take containers; pick/release space
// slots and go_to navpoints take any place.
std::optional<Feedback> validate_action(const WorldConfig& cfg, const Action& action);

struct StepResult {
  WorldState state;
  Feedback feedback;
};

// Deterministic transition. Preconditions are checked in a fixed order and
// the first violation decides the error kind; any error leaves the state
// unchanged.
//
//   all actions:  validate_action (UnknownEntity, then MalformedAction)
//   open/close:   robot at target (NotAtLocation); flag must currently be
//                 closed for open / open for close, otherwise ContainerClosed
//                 ("already open" / "already closed")
//   pick_from:    robot at space (NotAtLocation); container space must be
//                 open (ContainerClosed), checked before presence so that
//                 feedback never leaks the contents of a closed container;
//                 object located at space (ObjectNotVisible); free hand slot
//                 (HandFull)
//   release_to:   robot at space (NotAtLocation); container space open
//                 (ContainerClosed); hand non-empty (HandEmpty); releasing
//                 into a destructive device removes the object
//   go_to:        robot mobile (ImmobileRobot); always succeeds for mobile
//                 robots, navigation is adjacency-free
StepResult step(const WorldConfig& cfg, const WorldState& state, const Action& action);

// Throws UnknownEntityError for a token that is not a robot.
RawObservation observe(const WorldConfig& cfg, const WorldState& state,
                       const std::string& robot);

// Applies every event whose trigger equals step_index, in schedule order.
// Events referencing missing entities are skipped; when log is non-null a
// line per applied/skipped event is appended.
WorldState apply_perturbations(const WorldConfig& cfg, WorldState state,
                               std::span<const PerturbationEvent> schedule, int step_index,
                               std::vector<std::string>* log = nullptr);

// Queries. Unknown tokens throw UnknownEntityError; where_is returns nullopt
// for an object that has been destroyed.
std::optional<std::string> where_is(const WorldConfig& cfg, const WorldState& state,
                                    const std::string& object);
bool is_open(const WorldConfig& cfg, const WorldState& state, const std::string& container);
const std::vector<std::string>& holding(const WorldConfig& cfg, const WorldState& state,
                                        const std::string& robot);

// Canonical fingerprint (FNV-1a 64 over a canonical serialization, hex).
// Equal states always agree; any field difference changes the digest with
// overwhelming probability.
std::string state_digest(const WorldState& state);
std::string canonical_state_string(const WorldState& state);

// JSON schema documented in the README.
WorldConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const WorldConfig& cfg);
WorldConfig load_world_config_file(const std::string& path);
std::vector<PerturbationEvent> perturbations_from_json(const nlohmann::json& j);
nlohmann::json perturbations_to_json(std::span<const PerturbationEvent> schedule);
nlohmann::json observation_to_json(const RawObservation& obs);

}  // namespace clea
