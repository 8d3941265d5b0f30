#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clea/agent.hpp"
#include "clea/backends.hpp"
#include "clea/task.hpp"
#include "clea/world.hpp"

namespace clea {

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TaskFamily { Search, Manipulation, Integration };

const char* to_string(TaskFamily family);
TaskFamily task_family_from_string(const std::string& s);

struct TaskSpec {
  std::string id;
  TaskFamily family = TaskFamily::Search;
  Task task;
  WorldConfig world;
  int trials = 3;
  std::vector<ScriptRule> script;  // scripted-backend fixture for this task
};

struct Suite {
  std::vector<TaskSpec> tasks;
  std::filesystem::path source;

  int planned_trials() const;
};

// Loads and validates a suite file; throws SchemaError with the offending
// location. World configs and fixtures are resolved relative to the suite
// file.
Suite load_suite(const std::filesystem::path& path);

enum class FailureClass {
  None,
  InvalidActions,
  CriticFailure,
  MultiRobot,
  BudgetExhausted,
  Infrastructure,
};

const char* to_string(FailureClass failure);

struct TrialResult {
  std::string task_id;
  TaskFamily family = TaskFamily::Search;
  AgentVariant variant = AgentVariant::Clea;
  std::uint64_t seed = 0;
  int trial_index = 0;
  bool success = false;
  int score = 0;
  int max_score = 0;
  int steps_used = 0;
  FailureClass failure = FailureClass::None;
};

nlohmann::json trial_result_to_json(const TrialResult& result);

struct TraceTallies {
  std::map<CriticCategory, int> rejections;
  FailureClass failure = FailureClass::None;
};

// Counts critic rejection categories and derives the trial's failure class
// from the trace. Classification order: infrastructure; success (none);
// unusable-plan bursts (invalid_actions, when the last plan event errored or
// three or more parse diagnostics accumulated); repeated vetoes that forced a
// plan discard (critic_failure); an ImmobileRobot execution error
// (multi_robot); otherwise budget_exhausted.
TraceTallies classify_trace(const EpisodeTrace& trace);

struct MetricsCell {
  int trials = 0;
  int successes = 0;
  double sr = 0.0;
  double as_mean = 0.0;
};

struct Metrics {
  // variant name -> family name -> cell, plus an "overall" family per variant.
  std::map<std::string, std::map<std::string, MetricsCell>> cells;
};

// SR = successes/trials, AS = mean score, per (variant, family). Throws
// std::invalid_argument on an empty input.
Metrics compute_metrics(std::span<const TrialResult> results);

// Renders counts in the four-row rejection-taxonomy layout with one-decimal
// percentages of the total.
std::string render_rejection_table(const std::map<CriticCategory, int>& counts);
std::string render_failure_table(const std::map<FailureClass, int>& counts);

// Runs one trial: builds the world, runs the episode, scores it and assigns
// the failure class. Infrastructure failures surface in the result.
TrialResult run_trial(const TaskSpec& spec, AgentVariant variant, RoleBackends& backends,
                      std::uint64_t seed, int trial_index, EpisodeTrace* trace_out = nullptr,
                      const Budgets& budgets = {});

enum class BackendMode { Scripted, Remote };

struct RunOptions {
  std::vector<AgentVariant> variants = {AgentVariant::Clea, AgentVariant::NoCritic,
                                        AgentVariant::OpenLoopBaseline};
  BackendMode mode = BackendMode::Scripted;
  RemoteConfig remote;
  std::uint64_t seed = 0;
  int workers = 1;
  std::filesystem::path out_dir;
  bool write_traces = true;
  Budgets budgets;
};

struct RunReport {
  std::vector<TrialResult> results;
  std::map<std::string, std::map<CriticCategory, int>> rejections_by_variant;
  std::map<std::string, std::map<FailureClass, int>> failures_by_variant;
  Metrics metrics;
};

// Runs every (task, variant, trial) combination. Scripted mode gives each
// trial a fresh scripted session built from the task fixture; remote mode
// shares one backend handle. Trials are independent and run on up to
// options.workers threads; outputs are written deterministically.
RunReport run_suite(const Suite& suite, const RunOptions& options);

// Writes trials.jsonl and summary.md; returns the summary path.
std::filesystem::path emit_report(const RunReport& report,
                                  const std::filesystem::path& out_dir);

void write_trace_file(const std::filesystem::path& path, const nlohmann::json& header,
                      const EpisodeTrace& trace);

struct ReplayResult {
  bool ok = false;
  int actions_replayed = 0;
  std::string final_digest;
  std::string message;
};

// Re-executes the perturbations and actions recorded in a trace file against
// a fresh world built from the embedded config and checks every recorded
// digest.
ReplayResult replay_trace(const std::filesystem::path& path);

// Locates the assets/ directory: CLEA_ASSETS env var, else a walk from
// `start` upward.
std::optional<std::filesystem::path> find_assets_dir(
    std::filesystem::path start = std::filesystem::current_path());

std::uint64_t mix_seed(std::uint64_t seed, const std::string& task_id, AgentVariant variant,
                       int trial_index);

}  // namespace clea
