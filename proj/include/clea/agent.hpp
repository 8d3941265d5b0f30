#pragma once

#include <deque>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clea/backends.hpp"
#include "clea/memory.hpp"
#include "clea/observer.hpp"
#include "clea/prompts.hpp"
#include "clea/result.hpp"
#include "clea/task.hpp"
#include "clea/world.hpp"

namespace clea {

struct Plan {
  std::string subgoal;
  std::deque<Action> pending;  // non-empty at creation
  int origin_step = 0;
};

enum class CriticCategory { None, Outdated, Redundant, Invalid, WrongPlanning };

const char* to_string(CriticCategory category);

struct CriticVerdict {
  bool valid = true;
  CriticCategory category = CriticCategory::None;  // None iff valid
  std::string feedback;
  std::string advice;
};

enum class AgentVariant { Clea, NoCritic, OpenLoopBaseline };

const char* to_string(AgentVariant variant);

struct Budgets {
  int max_steps = 50;
  int max_consecutive_rejections = 3;
  int max_plan_parse_retries = 1;
};

enum class RecordKind {
  Header,
  Perturbation,
  Observation,
  TextObs,
  Belief,
  PlanEvent,
  PlanDiscard,
  Verdict,
  Execute,
  Skip,
  Milestone,
  Outcome,
};

const char* to_string(RecordKind kind);

struct TraceRecord {
  int step = 0;
  int seq = 0;  // order within the whole episode
  RecordKind kind = RecordKind::Header;
  nlohmann::json data;
};

// Append-only episode log; one record per loop event, monotonically stepped.
struct EpisodeTrace {
  std::vector<TraceRecord> records;

  void add(int step, RecordKind kind, nlohmann::json data);
  nlohmann::json to_jsonl_lines() const = delete;
};

nlohmann::json trace_record_to_json(const TraceRecord& record);
TraceRecord trace_record_from_json(const nlohmann::json& j);

struct PlanError {
  enum class Kind { Unparseable, Backend };
  Kind kind = Kind::Unparseable;
  std::string message;
  std::vector<std::string> diagnostics;
};

struct PlanContext {
  std::string catalog;       // rendered skill catalog
  std::string task;          // task instruction
  std::string belief;        // rendered belief ("" for the baseline)
  std::string observation;   // latest text observation
  std::string prior_subgoal; // refine mode only
  std::string feedback;      // refine / baseline replan
  std::string failed_action; // baseline replan
  enum class Mode { Initial, Replan, Refine, Fresh, Baseline, BaselineReplan };
  Mode mode = Mode::Initial;
  int origin_step = 0;
  int max_parse_retries = 1;
  std::string model;
  double temperature = 0.2;
};

// One planner call with the SUBGOAL/ACTIONS output contract. A response with
// no parseable action gets one retry with the diagnostics appended, then
// PlanError. Malformed lines inside an otherwise usable block are surfaced as
// diagnostics, not errors.
Result<Plan, PlanError> plan(Backend& backend, const PlanContext& context,
                             const prompts::TemplateSet& templates = prompts::defaults());

// Deterministic critic over the raw observations, the belief and the recent
// history. Checks run in a fixed order and the first failing check names the
// category (exactly one category per rejection):
//   1. invalid:        static validation against the config fails
//   2. redundant:      the action's postcondition already holds (flag already
//                      in the target state, robot already there, object
//                      already held)
//   3. outdated:       an environment precondition is contradicted by a
//                      current observation (target container seen closed, or
//                      the place is in view and the object is not there)
//   4. wrong_planning: the action cannot run from here: go_to on an immobile
//                      robot, a location precondition an immobile robot can
//                      never meet, or a mis-sequenced action whose robot is
//                      not yet at the required place
CriticVerdict rule_critic(const WorldConfig& cfg, const Action& action,
                          std::span<const RawObservation> observations, const Belief& belief,
                          std::span<const HistoryEntry> recent_history);

struct CritiqueOptions {
  bool allow_fallback = true;
  std::string model;
  double temperature = 0.2;
};

// LLM critic with the VERDICT/CATEGORY/FEEDBACK/ADVICE output contract; an
// unparseable response is retried once, then (and on backend failure) the
// rule critic takes over unless fallback is disabled.
Result<CriticVerdict, BackendError> critique(Backend& backend, const WorldConfig& cfg,
                                             const Action& action, const Belief& belief,
                                             std::span<const RawObservation> observations,
                                             std::span<const HistoryEntry> recent_history,
                                             const CritiqueOptions& options = {},
                                             const prompts::TemplateSet& templates =
                                                 prompts::defaults());

std::optional<CriticVerdict> parse_verdict(const std::string& text);

struct RoleBackends {
  Backend* observer = nullptr;
  Backend* summarizer = nullptr;
  Backend* planner = nullptr;
  Backend* critic = nullptr;
  bool allow_fallback = true;

  static RoleBackends all(Backend& backend, bool allow_fallback = true);
};

struct EpisodeOutcome {
  bool success = false;
  int score = 0;
  int steps_used = 0;
  bool infrastructure_failure = false;
};

// Runs one closed-loop episode: per step, perturbations are applied, every
// robot is observed, the observation is narrated, history is summarized into
// a belief, a plan is (re)made when needed, the next pending action is vetted
// by the critic (Clea variant only) and then executed. Milestones are scored
// after every executed action; the episode stops on the goal predicate or
// when budgets run out. The baseline variant plans once from the initial
// observation, keeps no memory, and gets exactly one replan on its first
// execution error; a second error ends its episode.
EpisodeOutcome run_episode(const WorldConfig& cfg, WorldState state, AgentVariant variant,
                           RoleBackends& backends, const Task& task, const Budgets& budgets,
                           EpisodeTrace& trace,
                           const prompts::TemplateSet& templates = prompts::defaults());

}  // namespace clea
