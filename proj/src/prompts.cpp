#include "clea/prompts.hpp"

#include <fstream>
#include <sstream>

#include "clea/world.hpp"  // ConfigError

namespace clea::prompts {

namespace {

constexpr const char* kObserver = R"(TASK: {{task}}

SCENE GRAPH:
{{scene}}

Describe what the robot can see in two or three short sentences. Mention only entities present
in the scene graph, using their exact tokens. State container open/closed flags and anything
the robot is holding.
)";

constexpr const char* kSummarizer = R"(TASK: {{task}}

INTERACTION HISTORY (oldest first):
{{history}}

Summarize what is known about the environment and the task progress. Reply with exactly these
sections:
SUMMARY: <one or two sentences>
FACTS:
<object> -> <last known place, one per line>
DONE:
- <completed sub-goal, one per line>
ISSUES:
- <unresolved problem, one per line>
)";

constexpr const char* kPlanner = R"(You control the robots through this skill pool, one call per line:
{{catalog}}
TASK: {{task}}

BELIEF:
{{belief}}

CURRENT OBSERVATION:
{{observation}}

Think step by step, then reply with exactly:
SUBGOAL: <one line>
ACTIONS:
<one skill call per line, lowercase tokens, no numbering>
)";

constexpr const char* kPlannerRefine = R"(You control the robots through this skill pool, one call per line:
{{catalog}}
TASK: {{task}}

BELIEF:
{{belief}}

CURRENT OBSERVATION:
{{observation}}

PREVIOUS SUBGOAL: {{subgoal}}
CRITIC FEEDBACK: {{feedback}}

The previous plan was rejected. Refine the sub-goal and propose a new action sequence.
Reply with exactly:
SUBGOAL: <one line>
ACTIONS:
<one skill call per line, lowercase tokens, no numbering>
)";

constexpr const char* kCritic = R"(The next action is about to run. Decide whether it is feasible right now.

CURRENT OBSERVATIONS (scene graphs, one per robot):
{{observations}}

BELIEF:
{{belief}}

CANDIDATE ACTION: {{action}}

Reply with exactly:
VERDICT: true|false
CATEGORY: none|outdated|redundant|invalid|wrong_planning
FEEDBACK: <one line explaining the verdict>
ADVICE: <one line suggesting what to do instead, or "none">
)";

constexpr const char* kBaseline = R"(You control the robots through this skill pool, one call per line:
{{catalog}}
TASK: {{task}}

INITIAL OBSERVATION:
{{observation}}

Plan the whole task in one shot. Reply with exactly:
SUBGOAL: <one line>
ACTIONS:
<one skill call per line, lowercase tokens, no numbering>
)";

constexpr const char* kBaselineReplan = R"(You control the robots through this skill pool, one call per line:
{{catalog}}
TASK: {{task}}

CURRENT OBSERVATION:
{{observation}}

The action {{failed_action}} failed: {{error}}
This is your single chance to re-plan the rest of the task. Reply with exactly:
SUBGOAL: <one line>
ACTIONS:
<one skill call per line, lowercase tokens, no numbering>
)";

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read prompt template '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

const TemplateSet& defaults() {
  static const TemplateSet set{kObserver,      kSummarizer, kPlanner, kPlannerRefine,
                               kCritic,        kBaseline,   kBaselineReplan};
  return set;
}

TemplateSet load_from_dir(const std::filesystem::path& dir) {
  TemplateSet set;
  set.observer = read_file(dir / "observer.txt");
  set.summarizer = read_file(dir / "summarizer.txt");
  set.planner = read_file(dir / "planner.txt");
  set.planner_refine = read_file(dir / "planner_refine.txt");
  set.critic = read_file(dir / "critic.txt");
  set.baseline = read_file(dir / "baseline.txt");
  set.baseline_replan = read_file(dir / "baseline_replan.txt");
  return set;
}

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    const auto open = tmpl.find("{{", i);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    out.append(tmpl.substr(i, open - i));
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(open));
      break;
    }
    const std::string name(tmpl.substr(open + 2, close - open - 2));
    auto it = vars.find(name);
    if (it != vars.end()) {
      out.append(it->second);
    } else {
      out.append(tmpl.substr(open, close + 2 - open));
    }
    i = close + 2;
  }
  return out;
}

}  // namespace clea::prompts
