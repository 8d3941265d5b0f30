#include "clea/agent.hpp"

#include <algorithm>
#include <sstream>

namespace clea {

const char* to_string(CriticCategory category) {
  switch (category) {
    case CriticCategory::None: return "none";
    case CriticCategory::Outdated: return "outdated";
    case CriticCategory::Redundant: return "redundant";
    case CriticCategory::Invalid: return "invalid";
    case CriticCategory::WrongPlanning: return "wrong_planning";
  }
  return "?";
}

const char* to_string(AgentVariant variant) {
  switch (variant) {
    case AgentVariant::Clea: return "clea";
    case AgentVariant::NoCritic: return "no-critic";
    case AgentVariant::OpenLoopBaseline: return "baseline";
  }
  return "?";
}

const char* to_string(RecordKind kind) {
  switch (kind) {
    case RecordKind::Header: return "header";
    case RecordKind::Perturbation: return "perturbation";
    case RecordKind::Observation: return "observation";
    case RecordKind::TextObs: return "text_obs";
    case RecordKind::Belief: return "belief";
    case RecordKind::PlanEvent: return "plan";
    case RecordKind::PlanDiscard: return "plan_discard";
    case RecordKind::Verdict: return "verdict";
    case RecordKind::Execute: return "execute";
    case RecordKind::Skip: return "skip";
    case RecordKind::Milestone: return "milestone";
    case RecordKind::Outcome: return "outcome";
  }
  return "?";
}

namespace {

RecordKind record_kind_from_string(const std::string& s) {
  static const std::map<std::string, RecordKind> table = {
      {"header", RecordKind::Header},       {"perturbation", RecordKind::Perturbation},
      {"observation", RecordKind::Observation}, {"text_obs", RecordKind::TextObs},
      {"belief", RecordKind::Belief},       {"plan", RecordKind::PlanEvent},
      {"plan_discard", RecordKind::PlanDiscard}, {"verdict", RecordKind::Verdict},
      {"execute", RecordKind::Execute},     {"skip", RecordKind::Skip},
      {"milestone", RecordKind::Milestone}, {"outcome", RecordKind::Outcome},
  };
  auto it = table.find(s);
  if (it == table.end()) throw ConfigError("unknown trace record kind '" + s + "'");
  return it->second;
}

std::string trim_copy(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void EpisodeTrace::add(int step, RecordKind kind, nlohmann::json data) {
  records.push_back({step, static_cast<int>(records.size()), kind, std::move(data)});
}

nlohmann::json trace_record_to_json(const TraceRecord& record) {
  return {{"step", record.step},
          {"seq", record.seq},
          {"kind", to_string(record.kind)},
          {"data", record.data}};
}

TraceRecord trace_record_from_json(const nlohmann::json& j) {
  TraceRecord record;
  record.step = j.at("step").get<int>();
  record.seq = j.at("seq").get<int>();
  record.kind = record_kind_from_string(j.at("kind").get<std::string>());
  record.data = j.value("data", nlohmann::json::object());
  return record;
}

Result<Plan, PlanError> plan(Backend& backend, const PlanContext& context,
                             const prompts::TemplateSet& templates) {
  std::map<std::string, std::string> vars = {
      {"catalog", context.catalog},       {"task", context.task},
      {"belief", context.belief},         {"observation", context.observation},
      {"subgoal", context.prior_subgoal}, {"feedback", context.feedback},
      {"failed_action", context.failed_action}, {"error", context.feedback},
  };

  const std::string* tmpl = &templates.planner;
  switch (context.mode) {
    case PlanContext::Mode::Refine: tmpl = &templates.planner_refine; break;
    case PlanContext::Mode::Baseline: tmpl = &templates.baseline; break;
    case PlanContext::Mode::BaselineReplan: tmpl = &templates.baseline_replan; break;
    default: break;
  }

  ChatRequest request;
  request.role_tag = Role::Planner;
  request.model = context.model;
  request.temperature = context.temperature;
  request.messages = {{"system", std::string(prompts::kPlannerSystem)},
                      {"user", prompts::render(*tmpl, vars)}};

  std::vector<std::string> diagnostics;
  for (int attempt = 0; attempt <= context.max_parse_retries; ++attempt) {
    auto res = backend.complete(request);
    if (!res.ok()) {
      return PlanError{PlanError::Kind::Backend,
                       std::string(to_string(res.error().kind)) + ": " + res.error().message,
                       diagnostics};
    }
    const std::string& text = res.value();

    std::string subgoal;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      line = trim_copy(line);
      if (line.rfind("SUBGOAL:", 0) == 0) {
        subgoal = trim_copy(line.substr(8));
        break;
      }
    }

    auto extracted = extract_actions(text);
    std::string problem;
    if (!extracted.ok()) {
      problem = extracted.error().message;
    } else {
      for (const auto& d : extracted.value().diagnostics) {
        diagnostics.push_back(std::string(to_string(d.kind)) + ": " + d.message);
      }
      if (extracted.value().actions.empty()) {
        problem = "the ACTIONS: block contains no valid call";
      } else if (subgoal.empty()) {
        problem = "missing SUBGOAL: line";
      } else {
        Plan result;
        result.subgoal = subgoal;
        result.origin_step = context.origin_step;
        for (auto& a : extracted.value().actions) result.pending.push_back(std::move(a));
        return result;
      }
    }

    if (attempt < context.max_parse_retries) {
      request.messages.push_back({"assistant", text});
      std::string correction = "That response could not be used: " + problem + ".";
      for (const auto& d : diagnostics) correction += " " + d + ".";
      correction +=
          " Reply again with a SUBGOAL: line and an ACTIONS: block of skill calls, one per "
          "line.";
      request.messages.push_back({"user", correction});
    } else {
      diagnostics.push_back(problem);
    }
  }
  return PlanError{PlanError::Kind::Unparseable, "planner response unparseable after retry",
                   diagnostics};
}

namespace {

const RawObservation* observation_for(std::span<const RawObservation> observations,
                                      const std::string& robot) {
  for (const auto& obs : observations) {
    if (obs.robot == robot) return &obs;
  }
  return nullptr;
}

bool place_in_view(std::span<const RawObservation> observations, const std::string& place) {
  return std::any_of(observations.begin(), observations.end(),
                     [&](const RawObservation& o) { return o.position == place; });
}

std::optional<bool> observed_flag(std::span<const RawObservation> observations,
                                  const std::string& container) {
  for (const auto& obs : observations) {
    auto it = obs.container_flags.find(container);
    if (it != obs.container_flags.end()) return it->second;
  }
  return std::nullopt;
}

bool object_seen_at(std::span<const RawObservation> observations, const std::string& object,
                    const std::string& place) {
  for (const auto& obs : observations) {
    for (const auto& fact : obs.facts) {
      if (fact.entity == object && fact.place == place) return true;
    }
  }
  return false;
}

bool robot_holds(std::span<const RawObservation> observations, const Belief& belief,
                 const std::string& robot, const std::string& object) {
  for (const auto& obs : observations) {
    for (const auto& fact : obs.facts) {
      if (fact.attribute == "held" && fact.entity == object && fact.place == robot) return true;
    }
  }
  auto it = belief.facts.find(object);
  return it != belief.facts.end() && it->second == robot;
}

}  // namespace

CriticVerdict rule_critic(const WorldConfig& cfg, const Action& action,
                          std::span<const RawObservation> observations, const Belief& belief,
                          std::span<const HistoryEntry> recent_history) {
  (void)recent_history;

  // 1. invalid
  if (auto err = validate_action(cfg, action)) {
    return {false, CriticCategory::Invalid, "vetoed (invalid): " + err->message,
            "use only known entities with the documented signatures"};
  }

  const std::string robot = action_robot(action);
  const RobotSpec* rspec = cfg.robot(robot);
  const RawObservation* self = observation_for(observations, robot);

  // 2. redundant
  if (const auto* open = std::get_if<OpenAction>(&action)) {
    if (auto flag = observed_flag(observations, open->target.token); flag && *flag) {
      return {false, CriticCategory::Redundant,
              "vetoed (redundant): " + open->target.token + " is already open",
              "skip this action and continue with the task"};
    }
  } else if (const auto* close = std::get_if<CloseAction>(&action)) {
    if (auto flag = observed_flag(observations, close->target.token); flag && !*flag) {
      return {false, CriticCategory::Redundant,
              "vetoed (redundant): " + close->target.token + " is already closed",
              "skip this action and continue with the task"};
    }
  } else if (const auto* goto_ = std::get_if<GoToAction>(&action)) {
    if (self && self->position == goto_->navpoint.token) {
      return {false, CriticCategory::Redundant,
              "vetoed (redundant): " + robot + " is already at " + goto_->navpoint.token,
              "skip this action and continue with the task"};
    }
  } else if (const auto* pick = std::get_if<PickFromAction>(&action)) {
    if (robot_holds(observations, belief, robot, pick->object.token)) {
      return {false, CriticCategory::Redundant,
              "vetoed (redundant): " + robot + " already holds " + pick->object.token,
              "skip this action and continue with the task"};
    }
  }

  // 3. outdated
  if (const auto* pick = std::get_if<PickFromAction>(&action)) {
    const std::string& space = pick->space.token;
    if (auto flag = observed_flag(observations, space); flag && !*flag) {
      return {false, CriticCategory::Outdated,
              "vetoed (outdated): " + space + " is closed, its contents are unreachable",
              "open " + space + " first or search elsewhere"};
    }
    const bool open_enough =
        !cfg.is_container(space) || (observed_flag(observations, space).value_or(false));
    if (place_in_view(observations, space) && open_enough &&
        !object_seen_at(observations, pick->object.token, space)) {
      return {false, CriticCategory::Outdated,
              "vetoed (outdated): " + pick->object.token + " is not visible at " + space,
              "search other places for " + pick->object.token};
    }
  } else if (const auto* rel = std::get_if<ReleaseToAction>(&action)) {
    if (auto flag = observed_flag(observations, rel->space.token); flag && !*flag) {
      return {false, CriticCategory::Outdated,
              "vetoed (outdated): " + rel->space.token + " is closed",
              "open " + rel->space.token + " before releasing into it"};
    }
  }

  // 4. wrong_planning
  if (std::holds_alternative<GoToAction>(action)) {
    if (rspec && !rspec->mobile) {
      return {false, CriticCategory::WrongPlanning,
              "vetoed (wrong_planning): " + robot + " is stationary and cannot move",
              "assign navigation to a mobile robot"};
    }
  } else {
    const std::string required = action_required_place(action);
    if (self && !required.empty() && self->position != required) {
      if (rspec && !rspec->mobile) {
        return {false, CriticCategory::WrongPlanning,
                "vetoed (wrong_planning): " + robot + " is fixed at " + self->position +
                    " and can never reach " + required,
                "assign this action to a mobile robot"};
      }
      return {false, CriticCategory::WrongPlanning,
              "vetoed (wrong_planning): " + robot + " is at " + self->position + ", not at " +
                  required,
              "go_to(" + robot + ", " + required + ") first"};
    }
  }

  return {true, CriticCategory::None, "action looks feasible", ""};
}

std::optional<CriticVerdict> parse_verdict(const std::string& text) {
  CriticVerdict verdict;
  bool have_verdict = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim_copy(line);
    if (line.rfind("VERDICT:", 0) == 0) {
      std::string value = trim_copy(line.substr(8));
      std::transform(value.begin(), value.end(), value.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (value == "true") {
        verdict.valid = true;
      } else if (value == "false") {
        verdict.valid = false;
      } else {
        return std::nullopt;
      }
      have_verdict = true;
    } else if (line.rfind("CATEGORY:", 0) == 0) {
      const std::string value = trim_copy(line.substr(9));
      if (value == "none") verdict.category = CriticCategory::None;
      else if (value == "outdated") verdict.category = CriticCategory::Outdated;
      else if (value == "redundant") verdict.category = CriticCategory::Redundant;
      else if (value == "invalid") verdict.category = CriticCategory::Invalid;
      else if (value == "wrong_planning") verdict.category = CriticCategory::WrongPlanning;
      else return std::nullopt;
    } else if (line.rfind("FEEDBACK:", 0) == 0) {
      verdict.feedback = trim_copy(line.substr(9));
    } else if (line.rfind("ADVICE:", 0) == 0) {
      verdict.advice = trim_copy(line.substr(7));
      if (verdict.advice == "none") verdict.advice.clear();
    }
  }
  if (!have_verdict) return std::nullopt;
  if (verdict.valid) {
    verdict.category = CriticCategory::None;
  } else if (verdict.category == CriticCategory::None) {
    // A rejection must carry a category; default to the catch-all.
    verdict.category = CriticCategory::WrongPlanning;
  }
  return verdict;
}

Result<CriticVerdict, BackendError> critique(Backend& backend, const WorldConfig& cfg,
                                             const Action& action, const Belief& belief,
                                             std::span<const RawObservation> observations,
                                             std::span<const HistoryEntry> recent_history,
                                             const CritiqueOptions& options,
                                             const prompts::TemplateSet& templates) {
  std::string scene;
  for (const auto& obs : observations) {
    scene += observation_to_json(obs).dump();
    scene += '\n';
  }
  const std::string user = prompts::render(templates.critic, {{"observations", scene},
                                                              {"belief", render_belief(belief)},
                                                              {"action", render_action(action)}});
  ChatRequest request;
  request.role_tag = Role::Critic;
  request.model = options.model;
  request.temperature = options.temperature;
  request.messages = {{"system", std::string(prompts::kCriticSystem)}, {"user", user}};

  auto fallback = [&]() -> Result<CriticVerdict, BackendError> {
    return rule_critic(cfg, action, observations, belief, recent_history);
  };

  auto first = backend.complete(request);
  if (!first.ok()) {
    if (options.allow_fallback) return fallback();
    return first.error();
  }
  if (auto verdict = parse_verdict(first.value())) return *verdict;

  request.messages.push_back({"assistant", first.value()});
  request.messages.push_back(
      {"user",
       "That response could not be parsed. Reply again with exactly the lines VERDICT:, "
       "CATEGORY:, FEEDBACK:, ADVICE:."});
  auto second = backend.complete(request);
  if (second.ok()) {
    if (auto verdict = parse_verdict(second.value())) return *verdict;
  }
  if (options.allow_fallback) return fallback();
  if (!second.ok()) return second.error();
  return BackendError{BackendError::Kind::Malformed, 0, "critic response unparseable"};
}

RoleBackends RoleBackends::all(Backend& backend, bool allow_fallback) {
  return RoleBackends{&backend, &backend, &backend, &backend, allow_fallback};
}

namespace {

nlohmann::json feedback_to_json(const Feedback& fb) {
  nlohmann::json j;
  j["ok"] = fb.ok;
  if (fb.error) j["kind"] = to_string(*fb.error);
  j["message"] = fb.message;
  return j;
}

FeedbackNote note_from(const Feedback& fb) {
  return FeedbackNote{fb.ok, fb.error ? to_string(*fb.error) : "", fb.message};
}

}  // namespace

EpisodeOutcome run_episode(const WorldConfig& cfg, WorldState state, AgentVariant variant,
                           RoleBackends& backends, const Task& task, const Budgets& budgets,
                           EpisodeTrace& trace, const prompts::TemplateSet& templates) {
  if (budgets.max_steps < 1 || budgets.max_consecutive_rejections < 1 ||
      budgets.max_plan_parse_retries < 1) {
    throw std::invalid_argument("budgets must be positive");
  }
  const std::string catalog = render_catalog_block();
  HistoryBuffer history(kDefaultHistoryCapacity);

  DescribeOptions describe_options;
  describe_options.allow_fallback = backends.allow_fallback;
  SummarizeOptions summarize_options;
  summarize_options.allow_fallback = backends.allow_fallback;
  CritiqueOptions critique_options;
  critique_options.allow_fallback = backends.allow_fallback;

  Plan active;
  bool have_plan = false;
  bool want_replan = false;
  bool fresh_plan = false;
  std::string last_veto_feedback;
  int consecutive_rejections = 0;
  int plan_events = 0;

  int baseline_errors = 0;
  std::string baseline_failed_action;
  std::string baseline_error_message;

  std::vector<bool> achieved(task.milestones.size(), false);
  int score = 0;

  EpisodeOutcome outcome;

  auto finish = [&](bool success, int steps, bool infra) {
    outcome.success = success;
    outcome.score = score;
    outcome.steps_used = steps;
    outcome.infrastructure_failure = infra;
    trace.add(steps, RecordKind::Outcome,
              {{"success", success},
               {"score", score},
               {"max_score", task.max_points()},
               {"steps", steps},
               {"infrastructure", infra}});
    return outcome;
  };

  for (int step_index = 0; step_index < budgets.max_steps; ++step_index) {
    // Perturbations first, so this step's observations see them.
    {
      std::vector<std::string> log;
      WorldState next =
          apply_perturbations(cfg, state, task.perturbations, step_index, &log);
      if (!log.empty()) {
        state = std::move(next);
        for (const auto& line : log)
          trace.add(step_index, RecordKind::Perturbation, {{"event", line}});
      } else {
        state = std::move(next);
      }
    }

    // Observe every robot.
    std::vector<RawObservation> raws;
    raws.reserve(cfg.robots.size());
    for (const auto& r : cfg.robots) {
      raws.push_back(observe(cfg, state, r.token));
      trace.add(step_index, RecordKind::Observation, observation_to_json(raws.back()));
    }

    // Narrate.
    const bool needs_text =
        variant != AgentVariant::OpenLoopBaseline || !have_plan || want_replan;
    std::string text_joined;
    if (needs_text) {
      for (const auto& raw : raws) {
        auto described =
describe(*backends.observer, raw, task.instruction, describe_options);
        if (!described.ok()) return finish(false, step_index, true);
        trace.add(step_index, RecordKind::TextObs,
                  {{"robot", raw.robot}, {"text", described.value().text}});
        if (!text_joined.empty()) text_joined += ' ';
        text_joined += described.value().text;
      }
    }

    // Summarize memory into a belief (the baseline keeps none).
    Belief belief;
    if (variant != AgentVariant::OpenLoopBaseline) {
      std::vector<HistoryEntry> entries(history.entries().begin(), history.entries().end());
      auto summarized =
          summarize(*backends.summarizer, entries, task.instruction, summarize_options);
      if (!summarized.ok()) return finish(false, step_index, true);
      belief = summarized.value();
      trace.add(step_index, RecordKind::Belief,
                {{"summary", belief.summary},
                 {"facts", belief.facts},
                 {"done", belief.completed_subgoals},
                 {"issues", belief.open_issues}});
    }

    // (Re)plan when needed.
    if (!have_plan || want_replan) {
      PlanContext context;
      context.catalog = catalog;
      context.task = task.instruction;
      context.observation = text_joined;
      context.origin_step = step_index;
      context.max_parse_retries = budgets.max_plan_parse_retries;
      if (variant == AgentVariant::OpenLoopBaseline) {
        if (plan_events == 0) {
          context.mode = PlanContext::Mode::Baseline;
        } else {
          context.mode = PlanContext::Mode::BaselineReplan;
          context.failed_action = baseline_failed_action;
          context.feedback = baseline_error_message;
        }
      } else {
        context.belief = render_belief(belief);
        if (plan_events == 0) {
          context.mode = PlanContext::Mode::Initial;
        } else if (fresh_plan) {
          context.mode = PlanContext::Mode::Fresh;
        } else if (want_replan && !last_veto_feedback.empty()) {
          context.mode = PlanContext::Mode::Refine;
          context.prior_subgoal = active.subgoal;
          context.feedback = last_veto_feedback;
        } else {
          context.mode = PlanContext::Mode::Replan;
        }
      }

      auto planned = plan(*backends.planner, context, templates);
      plan_events += 1;
      if (!planned.ok()) {
        trace.add(step_index, RecordKind::PlanEvent,
                  {{"mode", "error"},
                   {"error", planned.error().kind == PlanError::Kind::Backend ? "backend"
                                                                              : "unparseable"},
                   {"message", planned.error().message},
                   {"diagnostics", planned.error().diagnostics}});
        if (planned.error().kind == PlanError::Kind::Backend) {
          return finish(false, step_index, true);
        }
        // An unusable plan costs the step and forces a replan next step.
        want_replan = true;
        have_plan = false;
        fresh_plan = false;
        last_veto_feedback.clear();
        continue;
      }

      active = std::move(planned.value());
      have_plan = true;
      want_replan = false;
      fresh_plan = false;
      last_veto_feedback.clear();

      const char* mode_name = "initial";
      switch (context.mode) {
        case PlanContext::Mode::Initial: mode_name = "initial"; break;
        case PlanContext::Mode::Replan: mode_name = "replan"; break;
        case PlanContext::Mode::Refine: mode_name = "refine"; break;
        case PlanContext::Mode::Fresh: mode_name = "fresh"; break;
        case PlanContext::Mode::Baseline: mode_name = "baseline"; break;
        case PlanContext::Mode::BaselineReplan: mode_name = "baseline_replan"; break;
      }
      nlohmann::json actions = nlohmann::json::array();
      for (const auto& a : active.pending) actions.push_back(render_action(a));
      trace.add(step_index, RecordKind::PlanEvent,
                {{"mode", mode_name}, {"subgoal", active.subgoal}, {"actions", actions}});
    }

    const Action next_action = active.pending.front();

    // Critic gate (Clea only).
    if (variant == AgentVariant::Clea) {
      std::vector<HistoryEntry> recent(history.entries().begin(), history.entries().end());
      auto verdict = critique(*backends.critic, cfg, next_action, belief, raws, recent,
                              critique_options, templates);
      if (!verdict.ok()) return finish(false, step_index, true);
      const CriticVerdict& v = verdict.value();
      trace.add(step_index, RecordKind::Verdict,
                {{"action", render_action(next_action)},
                 {"valid", v.valid},
                 {"category", to_string(v.category)},
                 {"feedback", v.feedback},
                 {"advice", v.advice}});
      if (!v.valid) {
        std::string note = v.feedback;
        if (!v.advice.empty()) note += "; advice: " + v.advice;
        trace.add(step_index, RecordKind::Skip,
                  {{"action", render_action(next_action)},
                   {"category", to_string(v.category)},
                   {"feedback", note}});
        history.push({step_index, text_joined, kSkippedAction,
                      FeedbackNote{false, std::string("vetoed:") + to_string(v.category), note}});
        consecutive_rejections += 1;
        want_replan = true;
        have_plan = false;
        last_veto_feedback = note;
        if (consecutive_rejections >= budgets.max_consecutive_rejections) {
          trace.add(step_index, RecordKind::PlanDiscard,
                    {{"consecutive_rejections", consecutive_rejections}});
          fresh_plan = true;
          consecutive_rejections = 0;
          last_veto_feedback.clear();
        }
        continue;
      }
    }

    // Execute.
    auto [next_state, feedback] = step(cfg, state, next_action);
    trace.add(step_index, RecordKind::Execute,
              {{"action", render_action(next_action)},
               {"feedback", feedback_to_json(feedback)},
               {"digest", state_digest(next_state)}});
    state = std::move(next_state);
    active.pending.pop_front();
    if (feedback.ok) consecutive_rejections = 0;

    if (variant != AgentVariant::OpenLoopBaseline) {
      history.push({step_index, text_joined, render_action(next_action), note_from(feedback)});
    }

    // Score milestones against the new state.
    for (std::size_t m = 0; m < task.milestones.size(); ++m) {
      if (!achieved[m] && task.milestones[m].when.eval(cfg, state)) {
        achieved[m] = true;
        score += 1;
        trace.add(step_index, RecordKind::Milestone,
                  {{"index", static_cast<int>(m)}, {"name", task.milestones[m].name}});
      }
    }
    if (!task.goal.empty() && task.goal.eval(cfg, state)) {
      return finish(true, step_index + 1, false);
    }

    if (variant == AgentVariant::OpenLoopBaseline && !feedback.ok) {
      baseline_errors += 1;
      if (baseline_errors >= 2) {
        return finish(false, step_index + 1, false);
      }
      baseline_failed_action = render_action(next_action);
      baseline_error_message = feedback.message;
      have_plan = false;
      want_replan = true;
      continue;
    }

    if (active.pending.empty()) {
      if (variant == AgentVariant::OpenLoopBaseline) {
        // Plan fully executed; the baseline does not replan without an error.
        return finish(false, step_index + 1, false);
      }
      have_plan = false;
    }
  }

  return finish(false, budgets.max_steps, false);
}

}  // namespace clea
