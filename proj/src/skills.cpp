#include "clea/skills.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace clea {

namespace {

struct SkillSig {
  const char* name;
  int arity;
  std::array<EntityKind, 3> slots;
};

constexpr std::array<SkillSig, 5> kSkillTable = {{
    {"open", 2, {EntityKind::Robot, EntityKind::Container, EntityKind::Object}},
    {"close", 2, {EntityKind::Robot, EntityKind::Container, EntityKind::Object}},
    {"pick_from", 3, {EntityKind::Robot, EntityKind::Object, EntityKind::Space}},
    {"release_to", 2, {EntityKind::Robot, EntityKind::Space, EntityKind::Object}},
    {"go_to", 2, {EntityKind::Robot, EntityKind::Navpoint, EntityKind::Object}},
}};

bool is_valid_token(std::string_view s) {
  if (s.empty() || s[0] < 'a' || s[0] > 'z') return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::size_t skip_ws(std::string_view s, std::size_t i) {
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return i;
}

std::size_t rskip_ws(std::string_view s, std::size_t end) {
  while (end > 0 && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return end;
}

Action build_action(const SkillSig& sig, const std::vector<std::string>& args) {
  auto ref = [&](int i) { return EntityRef{args[static_cast<std::size_t>(i)], sig.slots[static_cast<std::size_t>(i)]}; };
  std::string_view name = sig.name;
  if (name == "open") return OpenAction{ref(0), ref(1)};
  if (name == "close") return CloseAction{ref(0), ref(1)};
  if (name == "pick_from") return PickFromAction{ref(0), ref(1), ref(2)};
  if (name == "release_to") return ReleaseToAction{ref(0), ref(1)};
  return GoToAction{ref(0), ref(1)};
}

bool looks_like_tag_line(std::string_view line) {
  std::size_t b = skip_ws(line, 0);
  std::size_t colon = line.find(':', b);
  if (colon == std::string_view::npos || colon == b) return false;
  for (std::size_t i = b; i < colon; ++i) {
    char c = line[i];
    if (!((c >= 'A' && c <= 'Z') || c == '_')) return false;
  }
  return true;
}

}  // namespace

const char* to_string(ParseError::Kind kind) {
  switch (kind) {
    case ParseError::Kind::EmptyInput: return "EmptyInput";
    case ParseError::Kind::UnknownSkill: return "UnknownSkill";
    case ParseError::Kind::BadArity: return "BadArity";
    case ParseError::Kind::BadToken: return "BadToken";
    case ParseError::Kind::NoActionFound: return "NoActionFound";
  }
  return "?";
}

Result<Action, ParseError> parse_action(std::string_view text) {
  const std::size_t tb = skip_ws(text, 0);
  const std::size_t te = rskip_ws(text, text.size());
  if (tb >= te) {
    return ParseError{ParseError::Kind::EmptyInput, 0, text.size(), "empty input"};
  }

  const std::size_t lparen = text.find('(', tb);
  std::size_t name_end = lparen == std::string_view::npos ? te : rskip_ws(text, lparen);
  const std::string name = to_lower(text.substr(tb, name_end - tb));

  const SkillSig* sig = nullptr;
  for (const auto& s : kSkillTable) {
    if (name == s.name) {
      sig = &s;
      break;
    }
  }
  if (sig == nullptr || lparen == std::string_view::npos) {
    return ParseError{ParseError::Kind::UnknownSkill, tb, name_end,
                      "unknown skill '" + name + "'"};
  }

  const std::size_t rparen = text.rfind(')');
  if (rparen == std::string_view::npos || rparen < lparen) {
    return ParseError{ParseError::Kind::BadToken, te - 1, te, "missing ')'"};
  }
  if (rskip_ws(text, text.size()) != rparen + 1) {
    return ParseError{ParseError::Kind::BadToken, rparen + 1, te,
                      "unexpected text after ')'"};
  }

  // Split the argument region on commas, keeping spans into the input.
  struct Arg {
    std::string text;
    std::size_t begin, end;
  };
  std::vector<Arg> args;
  std::size_t piece_start = lparen + 1;
  for (std::size_t i = lparen + 1; i <= rparen; ++i) {
    if (i == rparen || text[i] == ',') {
      std::size_t b = skip_ws(text, piece_start);
      std::size_t e = rskip_ws(text, i);
      if (b > e) b = e;
      args.push_back({std::string(text.substr(b, e - b)), b, e});
      piece_start = i + 1;
    }
  }
  if (args.size() == 1 && args[0].text.empty()) args.clear();

  if (static_cast<int>(args.size()) != sig->arity) {
    return ParseError{ParseError::Kind::BadArity, lparen, rparen + 1,
                      std::string(sig->name) + " takes " + std::to_string(sig->arity) +
                          " arguments, got " + std::to_string(args.size())};
  }
  for (const auto& a : args) {
    if (!is_valid_token(a.text)) {
      return ParseError{ParseError::Kind::BadToken, a.begin, std::max(a.end, a.begin + 1),
                        "invalid token '" + a.text + "'"};
    }
  }

  std::vector<std::string> tokens;
  tokens.reserve(args.size());
  for (auto& a : args) tokens.push_back(std::move(a.text));
  return build_action(*sig, tokens);
}

std::string render_action(const Action& action) {
  std::string out = action_name(action) + "(";
  const auto args = action_args(action);
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i > 0) out += ", ";
    out += args[i].token;
  }
  out += ")";
  return out;
}

const std::vector<SkillDoc>& skill_catalog() {
  static const std::vector<SkillDoc> docs = {
      {"open", "open(robot, openable_object)", "robot open object"},
      {"close", "close(robot, openable_object)", "robot close object"},
      {"pick_from", "pick_from(robot, object, space)", "robot pick object from space"},
      {"release_to", "release_to(robot, space)",
       "robot release the object on its hand to space"},
      {"go_to", "go_to(robot, navi_point)", "robot navigate to navigation point"},
  };
  return docs;
}

std::string render_catalog_block() {
  std::string out;
  for (const auto& doc : skill_catalog()) {
    out += doc.signature;
    out += " — ";
    out += doc.description;
    out += '\n';
  }
  return out;
}

Result<ExtractedActions, ParseError> extract_actions(std::string_view llm_text) {
  constexpr std::string_view kTag = "ACTIONS:";

  std::size_t line_start = 0;
  bool in_block = false;
  ExtractedActions out;

  auto rebase = [](ParseError err, std::size_t offset) {
    err.begin += offset;
    err.end += offset;
    return err;
  };

  while (line_start <= llm_text.size()) {
    std::size_t line_end = llm_text.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = llm_text.size();
    std::string_view line = llm_text.substr(line_start, line_end - line_start);

    std::size_t b = skip_ws(line, 0);
    std::string_view trimmed = line.substr(b, rskip_ws(line, line.size()) - std::min(b, rskip_ws(line, line.size())));

    if (!in_block) {
      if (trimmed.substr(0, kTag.size()) == kTag) {
        in_block = true;
        // Anything after the tag on the same line counts as the first entry.
        std::string_view rest = trimmed.substr(kTag.size());
        std::size_t rb = skip_ws(rest, 0);
        if (rb < rest.size()) {
          std::size_t offset = line_start + b + kTag.size() + rb;
          auto parsed = parse_action(rest.substr(rb));
          if (parsed.ok()) {
            out.actions.push_back(parsed.value());
          } else {
            out.diagnostics.push_back(rebase(parsed.error(), offset));
          }
        }
      }
    } else {
      if (trimmed.empty() || looks_like_tag_line(trimmed)) break;
      auto parsed = parse_action(trimmed);
      if (parsed.ok()) {
        out.actions.push_back(parsed.value());
      } else {
        out.diagnostics.push_back(rebase(parsed.error(), line_start + b));
      }
    }

    if (line_end == llm_text.size()) break;
    line_start = line_end + 1;
  }

  if (!in_block) {
    return ParseError{ParseError::Kind::NoActionFound, 0, llm_text.size(),
                      "no ACTIONS: block in response"};
  }
  return out;
}

std::string action_name(const Action& action) {
  struct Visitor {
    std::string operator()(const OpenAction&) const { return "open"; }
    std::string operator()(const CloseAction&) const { return "close"; }
    std::string operator()(const PickFromAction&) const { return "pick_from"; }
    std::string operator()(const ReleaseToAction&) const { return "release_to"; }
    std::string operator()(const GoToAction&) const { return "go_to"; }
  };
  return std::visit(Visitor{}, action);
}

std::string action_robot(const Action& action) {
  return std::visit([](const auto& a) { return a.robot.token; }, action);
}

std::string action_required_place(const Action& action) {
  struct Visitor {
    std::string operator()(const OpenAction& a) const { return a.target.token; }
    std::string operator()(const CloseAction& a) const { return a.target.token; }
    std::string operator()(const PickFromAction& a) const { return a.space.token; }
    std::string operator()(const ReleaseToAction& a) const { return a.space.token; }
    std::string operator()(const GoToAction&) const { return ""; }
  };
  return std::visit(Visitor{}, action);
}

std::vector<EntityRef> action_args(const Action& action) {
  struct Visitor {
    std::vector<EntityRef> operator()(const OpenAction& a) const { return {a.robot, a.target}; }
    std::vector<EntityRef> operator()(const CloseAction& a) const { return {a.robot, a.target}; }
    std::vector<EntityRef> operator()(const PickFromAction& a) const {
      return {a.robot, a.object, a.space};
    }
    std::vector<EntityRef> operator()(const ReleaseToAction& a) const {
      return {a.robot, a.space};
    }
    std::vector<EntityRef> operator()(const GoToAction& a) const { return {a.robot, a.navpoint}; }
  };
  return std::visit(Visitor{}, action);
}

}  // namespace clea
