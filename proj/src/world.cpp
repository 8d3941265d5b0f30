#include "clea/world.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

namespace clea {

namespace {

bool valid_token(const std::string& s) {
  if (s.empty() || s[0] < 'a' || s[0] > 'z') return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

}  // namespace

bool WorldConfig::is_space(const std::string& token) const {
  return std::find(spaces.begin(), spaces.end(), token) != spaces.end();
}
bool WorldConfig::is_container(const std::string& token) const {
  return std::any_of(containers.begin(), containers.end(),
                     [&](const ContainerSpec& c) { return c.token == token; });
}
bool WorldConfig::is_device(const std::string& token) const {
  return std::any_of(devices.begin(), devices.end(),
                     [&](const DeviceSpec& d) { return d.token == token; });
}
bool WorldConfig::is_place(const std::string& token) const {
  return is_space(token) || is_container(token) || is_device(token);
}
bool WorldConfig::is_object(const std::string& token) const {
  return std::any_of(objects.begin(), objects.end(),
                     [&](const ObjectSpec& o) { return o.token == token; });
}
bool WorldConfig::is_robot(const std::string& token) const { return robot(token) != nullptr; }
bool WorldConfig::is_destructive(const std::string& token) const {
  return std::any_of(devices.begin(), devices.end(),
                     [&](const DeviceSpec& d) { return d.token == token && d.destructive; });
}
bool WorldConfig::knows(const std::string& token) const {
  return is_place(token) || is_object(token) || is_robot(token);
}
const RobotSpec* WorldConfig::robot(const std::string& token) const {
  for (const auto& r : robots) {
    if (r.token == token) return &r;
  }
  return nullptr;
}

const char* to_string(FeedbackKind kind) {
  switch (kind) {
    case FeedbackKind::NotAtLocation: return "NotAtLocation";
    case FeedbackKind::ContainerClosed: return "ContainerClosed";
    case FeedbackKind::HandFull: return "HandFull";
    case FeedbackKind::HandEmpty: return "HandEmpty";
    case FeedbackKind::ObjectNotVisible: return "ObjectNotVisible";
    case FeedbackKind::ImmobileRobot: return "ImmobileRobot";
    case FeedbackKind::UnknownEntity: return "UnknownEntity";
    case FeedbackKind::MalformedAction: return "MalformedAction";
  }
  return "?";
}

Feedback Feedback::success(std::string message) { return Feedback{true, std::nullopt, std::move(message)}; }
Feedback Feedback::failure(FeedbackKind kind, std::string message) {
  return Feedback{false, kind, std::move(message)};
}

void validate_config(const WorldConfig& cfg) {
  auto bad = [](const std::string& what) { throw ConfigError(what); };

  std::set<std::string> seen;
  auto claim = [&](const std::string& token, const char* kind, bool allow_container_dup) {
    if (!valid_token(token)) bad(std::string(kind) + " token '" + token + "' is not lowercase");
    if (seen.count(token)) {
      if (allow_container_dup) return;
      bad(std::string("duplicate token '") + token + "'");
    }
    seen.insert(token);
  };

  for (const auto& s : cfg.spaces) claim(s, "space", false);
  for (const auto& c : cfg.containers) claim(c.token, "container", false);
  for (const auto& d : cfg.devices) {
    // An openable appliance may be listed as both container and device.
    claim(d.token, "device", cfg.is_container(d.token));
    if (d.destructive && cfg.is_container(d.token))
      bad("destructive device '" + d.token + "' cannot also be a container");
  }
  for (const auto& o : cfg.objects) claim(o.token, "object", false);
  for (const auto& r : cfg.robots) claim(r.token, "robot", false);

  // Navpoints name places one-to-one.
  std::set<std::string> places;
  for (const auto& s : cfg.spaces) places.insert(s);
  for (const auto& c : cfg.containers) places.insert(c.token);
  for (const auto& d : cfg.devices) places.insert(d.token);
  std::set<std::string> navs(cfg.navpoints.begin(), cfg.navpoints.end());
  if (navs.size() != cfg.navpoints.size()) bad("duplicate navpoint");
  for (const auto& n : navs) {
    if (!places.count(n)) bad("navpoint '" + n + "' names no place");
  }
  for (const auto& p : places) {
    if (!navs.count(p)) bad("place '" + p + "' has no navpoint");
  }

  for (const auto& o : cfg.objects) {
    if (!cfg.is_place(o.place)) bad("object '" + o.token + "' placed at unknown '" + o.place + "'");
    if (cfg.is_destructive(o.place))
      bad("object '" + o.token + "' cannot start inside destructive '" + o.place + "'");
  }
  for (const auto& r : cfg.robots) {
    if (!navs.count(r.start_navpoint))
      bad("robot '" + r.token + "' starts at unknown navpoint '" + r.start_navpoint + "'");
    if (r.hand_capacity < 1) bad("robot '" + r.token + "' needs hand capacity >= 1");
  }
}

WorldState load_world(const WorldConfig& cfg) {
  validate_config(cfg);
  WorldState state;
  for (const auto& o : cfg.objects) state.object_place[o.token] = o.place;
  for (const auto& c : cfg.containers) state.container_open[c.token] = c.initially_open;
  for (const auto& r : cfg.robots) {
    state.robot_at[r.token] = r.start_navpoint;
    state.robot_hand[r.token] = {};
  }
  return state;
}

std::optional<Feedback> validate_action(const WorldConfig& cfg, const Action& action) {
  const auto args = action_args(action);
  for (const auto& ref : args) {
    if (!cfg.knows(ref.token)) {
      return Feedback::failure(FeedbackKind::UnknownEntity,
                               "unknown entity '" + ref.token + "'");
    }
  }
  for (const auto& ref : args) {
    bool ok = false;
    switch (ref.kind) {
      case EntityKind::Robot: ok = cfg.is_robot(ref.token); break;
      case EntityKind::Container: ok = cfg.is_container(ref.token); break;
      case EntityKind::Object: ok = cfg.is_object(ref.token); break;
      case EntityKind::Space:
      case EntityKind::Navpoint:
      case EntityKind::Device: ok = cfg.is_place(ref.token); break;
    }
    if (!ok) {
      return Feedback::failure(FeedbackKind::MalformedAction,
                               "'" + ref.token + "' cannot be used here in " +
                                   render_action(action));
    }
  }
  return std::nullopt;
}

namespace {

struct Stepper {
  const WorldConfig& cfg;
  const WorldState& state;
  WorldState& next;

  Feedback operator()(const OpenAction& a) {
    if (state.robot_at.at(a.robot.token) != a.target.token)
      return Feedback::failure(FeedbackKind::NotAtLocation,
                               a.robot.token + " is not at " + a.target.token);
    if (state.container_open.at(a.target.token))
      return Feedback::failure(FeedbackKind::ContainerClosed,
                               a.target.token + " is already open");
    next.container_open[a.target.token] = true;
    return Feedback::success("opened " + a.target.token);
  }

  Feedback operator()(const CloseAction& a) {
    if (state.robot_at.at(a.robot.token) != a.target.token)
      return Feedback::failure(FeedbackKind::NotAtLocation,
                               a.robot.token + " is not at " + a.target.token);
    if (!state.container_open.at(a.target.token))
      return Feedback::failure(FeedbackKind::ContainerClosed,
                               a.target.token + " is already closed");
    next.container_open[a.target.token] = false;
    return Feedback::success("closed " + a.target.token);
  }

  Feedback operator()(const PickFromAction& a) {
    if (state.robot_at.at(a.robot.token) != a.space.token)
      return Feedback::failure(FeedbackKind::NotAtLocation,
                               a.robot.token + " is not at " + a.space.token);
    if (cfg.is_container(a.space.token) && !state.container_open.at(a.space.token))
      return Feedback::failure(FeedbackKind::ContainerClosed, a.space.token + " is closed");
    auto it = state.object_place.find(a.object.token);
    if (it == state.object_place.end() || it->second != a.space.token)
      return Feedback::failure(FeedbackKind::ObjectNotVisible,
                               a.object.token + " is not at " + a.space.token);
    const auto& hand = state.robot_hand.at(a.robot.token);
    if (static_cast<int>(hand.size()) >= cfg.robot(a.robot.token)->hand_capacity)
      return Feedback::failure(FeedbackKind::HandFull, a.robot.token + "'s hands are full");
    next.object_place[a.object.token] = a.robot.token;
    next.robot_hand[a.robot.token].push_back(a.object.token);
    return Feedback::success("picked " + a.object.token + " from " + a.space.token);
  }

  Feedback operator()(const ReleaseToAction& a) {
    if (state.robot_at.at(a.robot.token) != a.space.token)
      return Feedback::failure(FeedbackKind::NotAtLocation,
                               a.robot.token + " is not at " + a.space.token);
    if (cfg.is_container(a.space.token) && !state.container_open.at(a.space.token))
      return Feedback::failure(FeedbackKind::ContainerClosed, a.space.token + " is closed");
    const auto& hand = state.robot_hand.at(a.robot.token);
    if (hand.empty())
      return Feedback::failure(FeedbackKind::HandEmpty, a.robot.token + " holds nothing");
    const std::string obj = hand.back();
    next.robot_hand[a.robot.token].pop_back();
    if (cfg.is_destructive(a.space.token)) {
      next.object_place.erase(obj);
      return Feedback::success("released " + obj + " into " + a.space.token + "; it is gone");
    }
    next.object_place[obj] = a.space.token;
    return Feedback::success("released " + obj + " to " + a.space.token);
  }

  Feedback operator()(const GoToAction& a) {
    const RobotSpec* r = cfg.robot(a.robot.token);
    if (!r->mobile)
      return Feedback::failure(FeedbackKind::ImmobileRobot, a.robot.token + " cannot move");
    next.robot_at[a.robot.token] = a.navpoint.token;
    return Feedback::success(a.robot.token + " moved to " + a.navpoint.token);
  }
};

}  // namespace

StepResult step(const WorldConfig& cfg, const WorldState& state, const Action& action) {
  if (auto err = validate_action(cfg, action)) return {state, *err};
  WorldState next = state;
  Feedback fb = std::visit(Stepper{cfg, state, next}, action);
  if (!fb.ok) return {state, fb};
  next.step_count += 1;
  return {std::move(next), fb};
}

RawObservation observe(const WorldConfig& cfg, const WorldState& state,
                       const std::string& robot) {
  if (!cfg.is_robot(robot)) throw UnknownEntityError("unknown robot '" + robot + "'");
  RawObservation obs;
  obs.robot = robot;
  obs.position = state.robot_at.at(robot);
  obs.step = state.step_count;

  const std::string& place = obs.position;
  bool contents_visible = true;
  if (cfg.is_container(place)) {
    const bool open = state.container_open.at(place);
    obs.container_flags[place] = open;
    contents_visible = open;
  }
  if (contents_visible) {
    for (const auto& [obj, at] : state.object_place) {
      if (at == place) obs.facts.push_back({obj, place, ""});
    }
  }
  for (const auto& obj : state.robot_hand.at(robot)) {
    obs.facts.push_back({obj, robot, "held"});
  }
  return obs;
}

WorldState apply_perturbations(const WorldConfig& cfg, WorldState state,
                               std::span<const PerturbationEvent> schedule, int step_index,
                               std::vector<std::string>* log) {
  auto note = [&](const std::string& line) {
    if (log) log->push_back(line);
  };
  for (const auto& ev : schedule) {
    if (ev.trigger_step != step_index) continue;
    if (ev.effect == PerturbationEvent::Effect::CloseContainer) {
      if (!cfg.is_container(ev.container)) {
        note("skipped close(" + ev.container + "): not a container");
        continue;
      }
      state.container_open[ev.container] = false;
      note("closed " + ev.container);
    } else {
      if (!cfg.is_object(ev.object) || !cfg.is_place(ev.to) || cfg.is_destructive(ev.to)) {
        note("skipped move(" + ev.object + ", " + ev.to + "): bad reference");
        continue;
      }
      if (!state.object_place.count(ev.object)) {
        note("skipped move(" + ev.object + ", " + ev.to + "): object gone");
        continue;
      }
      // A held object is taken out of the hand first.
      for (auto& [r, hand] : state.robot_hand) {
        hand.erase(std::remove(hand.begin(), hand.end(), ev.object), hand.end());
      }
      state.object_place[ev.object] = ev.to;
      note("moved " + ev.object + " to " + ev.to);
    }
  }
  return state;
}

std::optional<std::string> where_is(const WorldConfig& cfg, const WorldState& state,
                                    const std::string& object) {
  if (!cfg.is_object(object)) throw UnknownEntityError("unknown object '" + object + "'");
  auto it = state.object_place.find(object);
  if (it == state.object_place.end()) return std::nullopt;
  return it->second;
}

bool is_open(const WorldConfig& cfg, const WorldState& state, const std::string& container) {
  if (!cfg.is_container(container))
    throw UnknownEntityError("unknown container '" + container + "'");
  return state.container_open.at(container);
}

const std::vector<std::string>& holding(const WorldConfig& cfg, const WorldState& state,
                                        const std::string& robot) {
  if (!cfg.is_robot(robot)) throw UnknownEntityError("unknown robot '" + robot + "'");
  return state.robot_hand.at(robot);
}

std::string canonical_state_string(const WorldState& state) {
  std::ostringstream os;
  os << "objects{";
  for (const auto& [obj, place] : state.object_place) os << obj << "=" << place << ";";
  os << "}flags{";
  for (const auto& [c, open] : state.container_open) os << c << "=" << (open ? 1 : 0) << ";";
  os << "}robots{";
  for (const auto& [r, at] : state.robot_at) {
    os << r << "@" << at << "[";
    for (const auto& obj : state.robot_hand.at(r)) os << obj << ",";
    os << "];";
  }
  os << "}step=" << state.step_count;
  return os.str();
}

std::string state_digest(const WorldState& state) {
  const std::string text = canonical_state_string(state);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

namespace {

const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(std::string("missing field '") + key + "'");
  return *it;
}

}  // namespace

std::vector<PerturbationEvent> perturbations_from_json(const nlohmann::json& j) {
  std::vector<PerturbationEvent> out;
  for (const auto& e : j) {
    PerturbationEvent ev;
    ev.trigger_step = require(e, "step").get<int>();
    if (e.contains("close")) {
      ev.effect = PerturbationEvent::Effect::CloseContainer;
      ev.container = e.at("close").get<std::string>();
    } else if (e.contains("move")) {
      ev.effect = PerturbationEvent::Effect::MoveObject;
      ev.object = require(e.at("move"), "object").get<std::string>();
      ev.to = require(e.at("move"), "to").get<std::string>();
    } else {
      throw ConfigError("perturbation needs 'close' or 'move'");
    }
    out.push_back(std::move(ev));
  }
  return out;
}

nlohmann::json perturbations_to_json(std::span<const PerturbationEvent> schedule) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& ev : schedule) {
    nlohmann::json e;
    e["step"] = ev.trigger_step;
    if (ev.effect == PerturbationEvent::Effect::CloseContainer) {
      e["close"] = ev.container;
    } else {
      e["move"] = {{"object", ev.object}, {"to", ev.to}};
    }
    arr.push_back(std::move(e));
  }
  return arr;
}

WorldConfig config_from_json(const nlohmann::json& j) {
  WorldConfig cfg;
  try {
    for (const auto& s : require(j, "spaces")) cfg.spaces.push_back(s.get<std::string>());
    for (const auto& c : require(j, "containers")) {
      cfg.containers.push_back({c.at("token").get<std::string>(), c.value("open", false)});
    }
    for (const auto& d : j.value("devices", nlohmann::json::array())) {
      cfg.devices.push_back({d.at("token").get<std::string>(), d.value("destructive", false)});
    }
    for (const auto& n : require(j, "navpoints")) cfg.navpoints.push_back(n.get<std::string>());
    for (const auto& o : require(j, "objects")) {
      cfg.objects.push_back({o.at("token").get<std::string>(), o.at("place").get<std::string>()});
    }
    for (const auto& r : require(j, "robots")) {
      cfg.robots.push_back({r.at("token").get<std::string>(), r.value("mobile", false),
                            r.value("hand_capacity", 1), r.at("at").get<std::string>()});
    }
    if (j.contains("perturbations"))
      cfg.perturbations = perturbations_from_json(j.at("perturbations"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad world config: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

nlohmann::json config_to_json(const WorldConfig& cfg) {
  nlohmann::json j;
  j["spaces"] = cfg.spaces;
  j["containers"] = nlohmann::json::array();
  for (const auto& c : cfg.containers)
    j["containers"].push_back({{"token", c.token}, {"open", c.initially_open}});
  j["devices"] = nlohmann::json::array();
  for (const auto& d : cfg.devices)
    j["devices"].push_back({{"token", d.token}, {"destructive", d.destructive}});
  j["navpoints"] = cfg.navpoints;
  j["objects"] = nlohmann::json::array();
  for (const auto& o : cfg.objects)
    j["objects"].push_back({{"token", o.token}, {"place", o.place}});
  j["robots"] = nlohmann::json::array();
  for (const auto& r : cfg.robots)
    j["robots"].push_back({{"token", r.token},
                           {"mobile", r.mobile},
                           {"hand_capacity", r.hand_capacity},
                           {"at", r.start_navpoint}});
  if (!cfg.perturbations.empty()) j["perturbations"] = perturbations_to_json(cfg.perturbations);
  return j;
}

WorldConfig load_world_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open world config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad JSON in '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

nlohmann::json observation_to_json(const RawObservation& obs) {
  nlohmann::json j;
  j["robot"] = obs.robot;
  j["position"] = obs.position;
  j["step"] = obs.step;
  j["facts"] = nlohmann::json::array();
  for (const auto& f : obs.facts) j["facts"].push_back({f.entity, f.place, f.attribute});
  j["flags"] = obs.container_flags;
  return j;
}

}  // namespace clea
