#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace clea::prompts {

// User-message templates for every model call in the loop. Placeholders use
// {{name}} syntax; the set each template understands is documented in the
// README and in the asset files under assets/prompts/.
struct TemplateSet {
  std::string observer;
  std::string summarizer;
  std::string planner;
  std::string planner_refine;
  std::string critic;
  std::string baseline;
  std::string baseline_replan;
};

// Built-in templates, identical to the files shipped under assets/prompts/.
const TemplateSet& defaults();

// Loads <dir>/{observer,summarizer,planner,planner_refine,critic,baseline,
// baseline_replan}.txt. Missing files raise ConfigError.
TemplateSet load_from_dir(const std::filesystem::path& dir);

// Replaces every {{name}} with vars.at(name); unknown placeholders are left
// untouched.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars);

inline constexpr std::string_view kObserverSystem =
    "You are the observer of a robot control loop. You turn scene graphs into short, factual "
    "text.";
inline constexpr std::string_view kSummarizerSystem =
    "You are the memory summarizer of a robot control loop. You compress interaction history "
    "into a belief about the environment and task progress.";
inline constexpr std::string_view kPlannerSystem =
    "You are the planner of a robot control loop. You propose one sub-goal and a short sequence "
    "of skill calls.";
inline constexpr std::string_view kCriticSystem =
    "You are the critic of a robot control loop. You veto the next action when it is not "
    "feasible right now.";

}  // namespace clea::prompts
