#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "clea/result.hpp"

namespace clea {

// Kind an action argument is expected to resolve to. The parser assigns the
// slot's expected kind; whether the token actually has a compatible kind is
// decided against a WorldConfig (see validate_action in world.hpp).
enum class EntityKind { Robot, Object, Space, Container, Device, Navpoint };

struct EntityRef {
  std::string token;
  EntityKind kind = EntityKind::Object;
  bool operator==(const EntityRef&) const = default;
};

struct OpenAction {
  EntityRef robot, target;
  bool operator==(const OpenAction&) const = default;
};
struct CloseAction {
  EntityRef robot, target;
  bool operator==(const CloseAction&) const = default;
};
struct PickFromAction {
  EntityRef robot, object, space;
  bool operator==(const PickFromAction&) const = default;
};
struct ReleaseToAction {
  EntityRef robot, space;
  bool operator==(const ReleaseToAction&) const = default;
};
struct GoToAction {
  EntityRef robot, navpoint;
  bool operator==(const GoToAction&) const = default;
};

// The five-call skill API. This is the only channel from agent to world.
using Action =
    std::variant<OpenAction, CloseAction, PickFromAction, ReleaseToAction, GoToAction>;

struct ParseError {
  enum class Kind { EmptyInput, UnknownSkill, BadArity, BadToken, NoActionFound };
  Kind kind = Kind::NoActionFound;
  // Character span within the parsed string, [begin, end).
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string message;
};

const char* to_string(ParseError::Kind kind);

struct SkillDoc {
  std::string name;
  std::string signature;
  std::string description;
};

// Parses one flat call expression `name(arg1, ..., argk)`. Skill names are
// case-insensitive and normalized to lowercase; argument tokens must match
// [a-z][a-z0-9_]*. Whitespace around delimiters is tolerated. No nesting, no
// quoting, no repair. Error precedence:
//   EmptyInput > UnknownSkill > BadArity > BadToken.
Result<Action, ParseError> parse_action(std::string_view text);

// Canonical form `name(arg1, arg2[, arg3])`, single space after each comma.
// parse_action(render_action(a)) == a for every well-formed action.
std::string render_action(const Action& action);

// The five skills, in catalog order.
const std::vector<SkillDoc>& skill_catalog();

// Catalog rendered as a prompt block, one signature plus description per line.
std::string render_catalog_block();

struct ExtractedActions {
  std::vector<Action> actions;          // valid lines, in order
  std::vector<ParseError> diagnostics;  // one entry per malformed line
};

// Scans a raw model response for the first ACTIONS: block and parses each
// line independently. Malformed lines become diagnostics; they never abort
// the scan and are never repaired. Errors with NoActionFound when the text
// has no ACTIONS: block at all.
Result<ExtractedActions, ParseError> extract_actions(std::string_view llm_text);

// Convenience accessors over the variant.
std::string action_name(const Action& action);
std::string action_robot(const Action& action);
// The place the acting robot must be at for the action to run; empty for
// go_to, which has no location precondition.
std::string action_required_place(const Action& action);
std::vector<EntityRef> action_args(const Action& action);

}  // namespace clea
