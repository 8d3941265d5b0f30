#include "clea/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace clea {

namespace fs = std::filesystem;

const char* to_string(TaskFamily family) {
  switch (family) {
    case TaskFamily::Search: return "search";
    case TaskFamily::Manipulation: return "manipulation";
    case TaskFamily::Integration: return "integration";
  }
  return "?";
}

TaskFamily task_family_from_string(const std::string& s) {
  if (s == "search") return TaskFamily::Search;
  if (s == "manipulation") return TaskFamily::Manipulation;
  if (s == "integration") return TaskFamily::Integration;
  throw SchemaError("unknown task family '" + s + "'");
}

const char* to_string(FailureClass failure) {
  switch (failure) {
    case FailureClass::None: return "none";
    case FailureClass::InvalidActions: return "invalid_actions";
    case FailureClass::CriticFailure: return "critic_failure";
    case FailureClass::MultiRobot: return "multi_robot";
    case FailureClass::BudgetExhausted: return "budget_exhausted";
    case FailureClass::Infrastructure: return "infrastructure";
  }
  return "?";
}

int Suite::planned_trials() const {
  int total = 0;
  for (const auto& t : tasks) total += t.trials;
  return total;
}

namespace {

nlohmann::json load_json_file(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw SchemaError(std::string(what) + ": cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string(what) + ": bad JSON in '" + path.string() + "': " + e.what());
  }
  return j;
}

}  // namespace

Suite load_suite(const fs::path& path) {
  const nlohmann::json j = load_json_file(path, "suite");
  Suite suite;
  suite.source = path;
  const fs::path base = path.parent_path();

  if (!j.contains("tasks") || !j.at("tasks").is_array() || j.at("tasks").empty())
    throw SchemaError("suite: 'tasks' must be a non-empty array");

  int index = 0;
  for (const auto& t : j.at("tasks")) {
    const std::string where = "tasks[" + std::to_string(index) + "]";
    TaskSpec spec;
    try {
      spec.id = t.at("id").get<std::string>();
      spec.family = task_family_from_string(t.at("family").get<std::string>());
      spec.task.instruction = t.at("instruction").get<std::string>();
      spec.trials = t.value("trials", 3);

      const fs::path world_path = base / t.at("world").get<std::string>();
      if (!fs::exists(world_path))
        throw SchemaError(where + ": world config '" + world_path.string() + "' not found");
      spec.world = load_world_config_file(world_path.string());

      for (const auto& m : t.at("milestones")) {
        Milestone milestone;
        milestone.name = m.at("name").get<std::string>();
        milestone.when = condition_from_json(m.at("when"));
        spec.task.milestones.push_back(std::move(milestone));
      }
      if (spec.task.milestones.empty()) throw SchemaError(where + ": needs >= 1 milestone");
      spec.task.goal = condition_from_json(t.at("goal"));
      if (spec.task.goal.empty()) throw SchemaError(where + ": goal must not be empty");
      // Config-level perturbations run first, then the task's own schedule.
      spec.task.perturbations = spec.world.perturbations;
      if (t.contains("perturbations")) {
        for (auto& ev : perturbations_from_json(t.at("perturbations")))
          spec.task.perturbations.push_back(std::move(ev));
      }

      validate_condition(spec.world, spec.task.goal);
      for (const auto& m : spec.task.milestones) validate_condition(spec.world, m.when);

      if (t.contains("script")) {
        const fs::path script_path = base / t.at("script").get<std::string>();
        const nlohmann::json rules = load_json_file(script_path, "fixture");
        spec.script = script_rules_from_json(rules.at("rules"));
      }
    } catch (const SchemaError&) {
      throw;
    } catch (const std::exception& e) {
      throw SchemaError(where + ": " + e.what());
    }
    suite.tasks.push_back(std::move(spec));
    ++index;
  }
  return suite;
}

nlohmann::json trial_result_to_json(const TrialResult& result) {
  return {{"task", result.task_id},
          {"family", to_string(result.family)},
          {"variant", to_string(result.variant)},
          {"seed", result.seed},
          {"trial", result.trial_index},
          {"success", result.success},
          {"score", result.score},
          {"max_score", result.max_score},
          {"steps", result.steps_used},
          {"failure_class", to_string(result.failure)}};
}

TraceTallies classify_trace(const EpisodeTrace& trace) {
  TraceTallies tallies;

  bool success = false;
  bool infrastructure = false;
  bool last_plan_errored = false;
  bool any_discard = false;
  bool immobile_error = false;
  int parse_diagnostics = 0;

  for (const auto& record : trace.records) {
    switch (record.kind) {
      case RecordKind::Verdict:
        if (!record.data.value("valid", true)) {
          const std::string category = record.data.value("category", "none");
          if (category == "outdated") tallies.rejections[CriticCategory::Outdated] += 1;
          else if (category == "redundant") tallies.rejections[CriticCategory::Redundant] += 1;
          else if (category == "invalid") tallies.rejections[CriticCategory::Invalid] += 1;
          else if (category == "wrong_planning")
            tallies.rejections[CriticCategory::WrongPlanning] += 1;
        }
        break;
      case RecordKind::PlanEvent:
        last_plan_errored = record.data.value("mode", "") == "error";
        if (record.data.contains("diagnostics"))
          parse_diagnostics += static_cast<int>(record.data.at("diagnostics").size());
        break;
      case RecordKind::PlanDiscard:
        any_discard = true;
        break;
      case RecordKind::Execute: {
        const auto& fb = record.data.at("feedback");
        if (!fb.value("ok", true) && fb.value("kind", "") == "ImmobileRobot")
          immobile_error = true;
        break;
      }
      case RecordKind::Outcome:
        success = record.data.value("success", false);
        infrastructure = record.data.value("infrastructure", false);
        break;
      default:
        break;
    }
  }

  if (infrastructure) tallies.failure = FailureClass::Infrastructure;
  else if (success) tallies.failure = FailureClass::None;
  else if (last_plan_errored || parse_diagnostics >= 3) tallies.failure = FailureClass::InvalidActions;
  else if (any_discard) tallies.failure = FailureClass::CriticFailure;
  else if (immobile_error) tallies.failure = FailureClass::MultiRobot;
  else tallies.failure = FailureClass::BudgetExhausted;
  return tallies;
}

Metrics compute_metrics(std::span<const TrialResult> results) {
  if (results.empty()) throw std::invalid_argument("compute_metrics: empty results");

  struct Acc {
    int trials = 0;
    int successes = 0;
    long long score_sum = 0;
  };
  std::map<std::string, std::map<std::string, Acc>> acc;
  for (const auto& r : results) {
    for (const std::string& family :
         {std::string(to_string(r.family)), std::string("overall")}) {
      Acc& cell = acc[to_string(r.variant)][family];
      cell.trials += 1;
      cell.successes += r.success ? 1 : 0;
      cell.score_sum += r.score;
    }
  }

  Metrics metrics;
  for (const auto& [variant, families] : acc) {
    for (const auto& [family, a] : families) {
      MetricsCell cell;
      cell.trials = a.trials;
      cell.successes = a.successes;
      cell.sr = static_cast<double>(a.successes) / static_cast<double>(a.trials);
      cell.as_mean = static_cast<double>(a.score_sum) / static_cast<double>(a.trials);
      metrics.cells[variant][family] = cell;
    }
  }
  return metrics;
}

namespace {

std::string percent(int count, int total) {
  char buf[32];
  const double value = total == 0 ? 0.0 : 100.0 * static_cast<double>(count) / total;
  std::snprintf(buf, sizeof(buf), "%.1f%%", value);
  return buf;
}

}  // namespace

std::string render_rejection_table(const std::map<CriticCategory, int>& counts) {
  static const std::pair<CriticCategory, const char*> rows[] = {
      {CriticCategory::Outdated, "Outdated actions"},
      {CriticCategory::Redundant, "Redundant actions"},
      {CriticCategory::Invalid, "Invalid actions"},
      {CriticCategory::WrongPlanning, "Wrong planning"},
  };
  int total = 0;
  for (const auto& [category, label] : rows) {
    auto it = counts.find(category);
    total += it == counts.end() ? 0 : it->second;
  }
  std::ostringstream os;
  os << "| Type | Reason | Count | Total |\n|---|---|---|---|\n";
  for (const auto& [category, label] : rows) {
    auto it = counts.find(category);
    const int count = it == counts.end() ? 0 : it->second;
    os << "| Critic | " << label << " | " << count << " | " << percent(count, total) << " |\n";
  }
  return os.str();
}

std::string render_failure_table(const std::map<FailureClass, int>& counts) {
  static const FailureClass rows[] = {
      FailureClass::InvalidActions, FailureClass::CriticFailure,   FailureClass::MultiRobot,
      FailureClass::BudgetExhausted, FailureClass::Infrastructure,
  };
  int total = 0;
  for (const auto& [failure, count] : counts) {
    if (failure != FailureClass::None) total += count;
  }
  std::ostringstream os;
  os << "| Type | Reason | Count | Total |\n|---|---|---|---|\n";
  for (FailureClass failure : rows) {
    auto it = counts.find(failure);
    const int count = it == counts.end() ? 0 : it->second;
    os << "| Failure | " << to_string(failure) << " | " << count << " | "
       << percent(count, total) << " |\n";
  }
  return os.str();
}

std::uint64_t mix_seed(std::uint64_t seed, const std::string& task_id, AgentVariant variant,
                       int trial_index) {
  std::uint64_t h = 14695981039346656037ULL ^ seed;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  mix(task_id);
  mix(to_string(variant));
  mix(std::to_string(trial_index));
  return h;
}

TrialResult run_trial(const TaskSpec& spec, AgentVariant variant, RoleBackends& backends,
                      std::uint64_t seed, int trial_index, EpisodeTrace* trace_out,
                      const Budgets& budgets) {
  TrialResult result;
  result.task_id = spec.id;
  result.family = spec.family;
  result.variant = variant;
  result.seed = seed;
  result.trial_index = trial_index;
  result.max_score = spec.task.max_points();

  EpisodeTrace local_trace;
  EpisodeTrace& trace = trace_out ? *trace_out : local_trace;
  trace.add(-1, RecordKind::Header,
            {{"task", spec.id},
             {"family", to_string(spec.family)},
             {"variant", to_string(variant)},
             {"seed", seed},
             {"trial", trial_index},
             {"instruction", spec.task.instruction},
             {"world", config_to_json(spec.world)},
             {"perturbations", perturbations_to_json(spec.task.perturbations)},
             {"max_steps", budgets.max_steps}});

  EpisodeOutcome outcome;
  try {
    WorldState state = load_world(spec.world);
    outcome = run_episode(spec.world, std::move(state), variant, backends, spec.task, budgets,
                          trace);
  } catch (const std::exception& e) {
    const int last_step = trace.records.empty() ? 0 : trace.records.back().step;
    trace.add(std::max(0, last_step), RecordKind::Outcome,
              {{"success", false},
               {"score", 0},
               {"max_score", result.max_score},
               {"steps", 0},
               {"infrastructure", true},
               {"error", e.what()}});
    outcome.infrastructure_failure = true;
  }

  result.success = outcome.success;
  result.score = outcome.score;
  result.steps_used = outcome.steps_used;
  result.failure = classify_trace(trace).failure;

  // The outcome record carries the final class so traces are self-contained.
  for (auto it = trace.records.rbegin(); it != trace.records.rend(); ++it) {
    if (it->kind == RecordKind::Outcome) {
      it->data["failure_class"] = to_string(result.failure);
      break;
    }
  }
  return result;
}

void write_trace_file(const fs::path& path, const nlohmann::json& header,
                      const EpisodeTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace '" + path.string() + "'");
  if (!header.is_null()) out << header.dump() << "\n";
  for (const auto& record : trace.records) out << trace_record_to_json(record).dump() << "\n";
}

RunReport run_suite(const Suite& suite, const RunOptions& options) {
  struct Job {
    const TaskSpec* spec;
    AgentVariant variant;
    int trial_index;
  };
  std::vector<Job> jobs;
  for (const auto& spec : suite.tasks) {
    for (AgentVariant variant : options.variants) {
      for (int trial = 0; trial < spec.trials; ++trial) {
        jobs.push_back({&spec, variant, trial});
      }
    }
  }

  std::optional<RemoteBackend> remote;
  if (options.mode == BackendMode::Remote) remote.emplace(options.remote);

  std::vector<TrialResult> results(jobs.size());
  std::vector<EpisodeTrace> traces(jobs.size());

  auto run_job = [&](std::size_t i) {
    const Job& job = jobs[i];
    const std::uint64_t seed =
        mix_seed(options.seed, job.spec->id, job.variant, job.trial_index);

    std::optional<ScriptedBackend> session;
    RoleBackends backends;
    if (options.mode == BackendMode::Scripted) {
      session.emplace(job.spec->script);
      backends = RoleBackends::all(*session);
    } else {
      backends = RoleBackends::all(*remote);
    }
    results[i] = run_trial(*job.spec, job.variant, backends, seed, job.trial_index, &traces[i],
                           options.budgets);
  };

  const int workers = std::max(1, options.workers);
  if (workers == 1 || jobs.size() <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int n = std::min<std::size_t>(static_cast<std::size_t>(workers), jobs.size());
    pool.reserve(static_cast<std::size_t>(n));
    for (int w = 0; w < n; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
          run_job(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  RunReport report;
  report.results = results;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const TraceTallies tallies = classify_trace(traces[i]);
    if (!tallies.rejections.empty()) {
      auto& rejections = report.rejections_by_variant[to_string(jobs[i].variant)];
      for (const auto& [category, count] : tallies.rejections) rejections[category] += count;
    }
    report.failures_by_variant[to_string(jobs[i].variant)][tallies.failure] += 1;
  }
  report.metrics = compute_metrics(report.results);

  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    if (options.write_traces) {
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        const Job& job = jobs[i];
        const std::string name = "trace-" + job.spec->id + "-" +
                                 to_string(job.variant) + "-t" +
                                 std::to_string(job.trial_index) + ".jsonl";
        write_trace_file(options.out_dir / name, nlohmann::json(), traces[i]);
      }
    }
    emit_report(report, options.out_dir);
  }
  return report;
}

fs::path emit_report(const RunReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);

  // trials.jsonl, deterministically ordered.
  std::vector<const TrialResult*> ordered;
  ordered.reserve(report.results.size());
  for (const auto& r : report.results) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(), [](const TrialResult* a, const TrialResult* b) {
    if (a->task_id != b->task_id) return a->task_id < b->task_id;
    const std::string va = to_string(a->variant), vb = to_string(b->variant);
    if (va != vb) return va < vb;
    return a->trial_index < b->trial_index;
  });
  {
    std::ofstream out(out_dir / "trials.jsonl");
    if (!out) throw std::runtime_error("cannot write trials.jsonl");
    for (const auto* r : ordered) out << trial_result_to_json(*r).dump() << "\n";
  }

  std::ostringstream md;
  md << "# Run summary\n\n";
  md << "Trials: " << report.results.size() << "\n\n";
  md << "## Success rate and average score\n\n";
  md << "| Variant | Family | Trials | SR | AS |\n|---|---|---|---|---|\n";
  for (const auto& [variant, families] : report.metrics.cells) {
    for (const auto& [family, cell] : families) {
      char sr[32], as[32];
      std::snprintf(sr, sizeof(sr), "%.3f", cell.sr);
      std::snprintf(as, sizeof(as), "%.3f", cell.as_mean);
      md << "| " << variant << " | " << family << " | " << cell.trials << " | " << sr << " | "
         << as << " |\n";
    }
  }
  md << "\n## Critic rejections\n\n";
  for (const auto& [variant, counts] : report.rejections_by_variant) {
    if (counts.empty()) continue;
    md << "Variant `" << variant << "`:\n\n" << render_rejection_table(counts) << "\n";
  }
  md << "## Failure classes\n\n";
  for (const auto& [variant, counts] : report.failures_by_variant) {
    md << "Variant `" << variant << "`:\n\n" << render_failure_table(counts) << "\n";
  }

  const fs::path summary = out_dir / "summary.md";
  std::ofstream out(summary);
  if (!out) throw std::runtime_error("cannot write summary.md");
  out << md.str();
  return summary;
}

ReplayResult replay_trace(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return {false, 0, "", "cannot open '" + path.string() + "'"};

  std::optional<WorldConfig> cfg;
  std::optional<WorldState> state;
  std::vector<PerturbationEvent> schedule;
  int perturbed_through = -1;  // highest step index whose schedule was applied
  int replayed = 0;
  std::string line;
  int line_no = 0;

  auto catch_up_perturbations = [&](int step_index) {
    for (int s = perturbed_through + 1; s <= step_index; ++s) {
      state = apply_perturbations(*cfg, std::move(*state), schedule, s);
    }
    perturbed_through = std::max(perturbed_through, step_index);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      return {false, replayed, "", "line " + std::to_string(line_no) + ": " + e.what()};
    }
    TraceRecord record;
    try {
      record = trace_record_from_json(j);
    } catch (const std::exception& e) {
      return {false, replayed, "", "line " + std::to_string(line_no) + ": " + e.what()};
    }

    if (record.kind == RecordKind::Header) {
      try {
        cfg = config_from_json(record.data.at("world"));
        state = load_world(*cfg);
        if (record.data.contains("perturbations"))
          schedule = perturbations_from_json(record.data.at("perturbations"));
      } catch (const std::exception& e) {
        return {false, replayed, "", std::string("bad header: ") + e.what()};
      }
      continue;
    }
    if (!cfg || !state) continue;

    if (record.kind == RecordKind::Execute) {
      // The episode applies the schedule at the top of every loop step, so
      // catch up through this record's step before re-executing.
      catch_up_perturbations(record.step);
      const std::string action_text = record.data.at("action").get<std::string>();
      auto parsed = parse_action(action_text);
      if (!parsed.ok())
        return {false, replayed, "", "unparseable action '" + action_text + "'"};
      auto [next, feedback] = step(*cfg, *state, parsed.value());
      (void)feedback;
      state = std::move(next);
      ++replayed;
      const std::string expected = record.data.value("digest", "");
      const std::string got = state_digest(*state);
      if (!expected.empty() && expected != got) {
        return {false, replayed, got,
                "digest mismatch after '" + action_text + "': expected " + expected};
      }
    }
  }
  if (!state) return {false, 0, "", "no header record found"};
  return {true, replayed, state_digest(*state), "ok"};
}

std::optional<fs::path> find_assets_dir(fs::path start) {
  if (const char* env = std::getenv("CLEA_ASSETS")) {
    fs::path p(env);
    if (fs::exists(p)) return p;
  }
  for (fs::path dir = start;; dir = dir.parent_path()) {
    const fs::path candidate = dir / "assets";
    if (fs::exists(candidate / "suites") || fs::exists(candidate / "prompts")) return candidate;
    if (dir == dir.parent_path()) break;
  }
  return std::nullopt;
}

}  // namespace clea
