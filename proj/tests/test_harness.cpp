#include "doctest.h"

#include <cmath>
#include <fstream>

#include "clea/harness.hpp"
#include "clea/prompts.hpp"
#include "test_support.hpp"

using namespace clea;
using namespace clea::testing;

namespace {

TrialResult make_result(const char* task, TaskFamily family, AgentVariant variant, bool success,
                        int score, int max_score) {
  TrialResult r;
  r.task_id = task;
  r.family = family;
  r.variant = variant;
  r.success = success;
  r.score = score;
  r.max_score = max_score;
  return r;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("suite: the default file plans 12 trials across three families") {
  const Suite suite = default_suite();
  CHECK(suite.tasks.size() == 4);
  CHECK(suite.planned_trials() == 12);

  std::map<TaskFamily, int> families;
  for (const auto& t : suite.tasks) families[t.family] += 1;
  CHECK(families[TaskFamily::Search] == 1);
  CHECK(families[TaskFamily::Manipulation] == 1);
  CHECK(families[TaskFamily::Integration] == 2);

  bool perturbed_integration = false;
  for (const auto& t : suite.tasks) {
    CHECK(!t.task.milestones.empty());
    CHECK(!t.task.goal.empty());
    if (t.family == TaskFamily::Integration && !t.task.perturbations.empty())
      perturbed_integration = true;
  }
  CHECK(perturbed_integration);
}

TEST_CASE("suite schema errors carry a location") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "clea_suite_test";
  fs::create_directories(dir);

  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name);
    out << text;
    return (dir / name);
  };
  write("world.json", slurp(*find_assets_dir() / "worlds" / "default_kitchen.json"));

  SUBCASE("unknown family") {
    const auto path = write("bad_family.json", R"({"tasks": [{
      "id": "x", "family": "exploration", "instruction": "do", "world": "world.json",
      "milestones": [{"name": "m", "when": [{"pred": "is_open", "container": "oven"}]}],
      "goal": [{"pred": "is_open", "container": "oven"}]}]})");
    CHECK_THROWS_AS(load_suite(path), SchemaError);
  }
  SUBCASE("missing world file") {
    const auto path = write("bad_world.json", R"({"tasks": [{
      "id": "x", "family": "search", "instruction": "do", "world": "nope.json",
      "milestones": [{"name": "m", "when": [{"pred": "is_open", "container": "oven"}]}],
      "goal": [{"pred": "is_open", "container": "oven"}]}]})");
    CHECK_THROWS_WITH_AS(load_suite(path), doctest::Contains("tasks[0]"), SchemaError);
  }
  SUBCASE("predicate referencing an unknown entity") {
    const auto path = write("bad_pred.json", R"({"tasks": [{
      "id": "x", "family": "search", "instruction": "do", "world": "world.json",
      "milestones": [{"name": "m", "when": [{"pred": "is_open", "container": "ghost"}]}],
      "goal": [{"pred": "is_open", "container": "oven"}]}]})");
    CHECK_THROWS_AS(load_suite(path), SchemaError);
  }
  SUBCASE("no milestones") {
    const auto path = write("no_miles.json", R"({"tasks": [{
      "id": "x", "family": "search", "instruction": "do", "world": "world.json",
      "milestones": [],
      "goal": [{"pred": "is_open", "container": "oven"}]}]})");
    CHECK_THROWS_AS(load_suite(path), SchemaError);
  }
}

TEST_CASE("compute_metrics matches the hand-scored table") {
  // Spreadsheet oracle, frozen: one group of three trials, max 5 points,
  // scores {3, 5 (success), 1}. SR = 1/3, AS = (3+5+1)/3 = 3.0 exactly.
  std::vector<TrialResult> results = {
      make_result("t", TaskFamily::Search, AgentVariant::Clea, false, 3, 5),
      make_result("t", TaskFamily::Search, AgentVariant::Clea, true, 5, 5),
      make_result("t", TaskFamily::Search, AgentVariant::Clea, false, 1, 5),
  };
  const Metrics m = compute_metrics(results);
  const MetricsCell& cell = m.cells.at("clea").at("search");
  CHECK(std::abs(cell.sr - 1.0 / 3.0) < 1e-9);
  CHECK(std::abs(cell.as_mean - 3.0) < 1e-9);
  CHECK(cell.trials == 3);

  SUBCASE("all successes give SR 1.0") {
    for (auto& r : results) {
      r.success = true;
      r.score = 5;
    }
    const Metrics all = compute_metrics(results);
    CHECK(std::abs(all.cells.at("clea").at("search").sr - 1.0) < 1e-9);
    CHECK(std::abs(all.cells.at("clea").at("search").as_mean - 5.0) < 1e-9);
  }

  SUBCASE("groups are keyed by variant and family") {
    results.push_back(make_result("u", TaskFamily::Integration, AgentVariant::Clea, true, 2, 2));
    results.push_back(
        make_result("t", TaskFamily::Search, AgentVariant::OpenLoopBaseline, false, 0, 5));
    const Metrics m2 = compute_metrics(results);
    CHECK(m2.cells.at("clea").at("integration").trials == 1);
    CHECK(m2.cells.at("baseline").at("search").trials == 1);
    CHECK(m2.cells.at("clea").at("overall").trials == 4);
  }

  CHECK_THROWS_AS(compute_metrics({}), std::invalid_argument);
}

TEST_CASE("rejection ratio renderer reproduces the reference percentages") {
  std::map<CriticCategory, int> counts = {
      {CriticCategory::Outdated, 8},
      {CriticCategory::Redundant, 6},
      {CriticCategory::Invalid, 2},
      {CriticCategory::WrongPlanning, 2},
  };
  const std::string table = render_rejection_table(counts);
  CHECK(table.find("Outdated actions | 8 | 44.4%") != std::string::npos);
  CHECK(table.find("Redundant actions | 6 | 33.3%") != std::string::npos);
  CHECK(table.find("Invalid actions | 2 | 11.1%") != std::string::npos);
  CHECK(table.find("Wrong planning | 2 | 11.1%") != std::string::npos);
}

TEST_CASE("classify_trace counts verdict categories") {
  EpisodeTrace trace;
  auto veto = [&](const char* category) {
    trace.add(0, RecordKind::Verdict,
              {{"action", "x"}, {"valid", false}, {"category", category}, {"feedback", ""}});
  };
  veto("outdated");
  veto("outdated");
  veto("redundant");
  trace.add(1, RecordKind::Verdict,
            {{"action", "x"}, {"valid", true}, {"category", "none"}, {"feedback", ""}});
  trace.add(2, RecordKind::Outcome, {{"success", true}, {"infrastructure", false}});

  const TraceTallies tallies = classify_trace(trace);
  CHECK(tallies.rejections.at(CriticCategory::Outdated) == 2);
  CHECK(tallies.rejections.at(CriticCategory::Redundant) == 1);
  CHECK(tallies.rejections.count(CriticCategory::Invalid) == 0);
  CHECK(tallies.failure == FailureClass::None);
}

TEST_CASE("classify_trace failure classes from injected traces") {
  SUBCASE("parse diagnostic burst -> invalid_actions") {
    EpisodeTrace trace;
    trace.add(0, RecordKind::PlanEvent,
              {{"mode", "error"},
               {"error", "unparseable"},
               {"message", "m"},
               {"diagnostics", nlohmann::json::array({"a", "b", "c"})}});
    trace.add(1, RecordKind::Outcome, {{"success", false}, {"infrastructure", false}});
    CHECK(classify_trace(trace).failure == FailureClass::InvalidActions);
  }
  SUBCASE("plan discard -> critic_failure") {
    EpisodeTrace trace;
    trace.add(0, RecordKind::PlanDiscard, {{"consecutive_rejections", 3}});
    trace.add(1, RecordKind::Outcome, {{"success", false}, {"infrastructure", false}});
    CHECK(classify_trace(trace).failure == FailureClass::CriticFailure);
  }
  SUBCASE("immobile-robot execution error -> multi_robot") {
    EpisodeTrace trace;
    trace.add(0, RecordKind::Execute,
              {{"action", "go_to(robot2, sink)"},
               {"feedback", {{"ok", false}, {"kind", "ImmobileRobot"}, {"message", ""}}},
               {"digest", ""}});
    trace.add(1, RecordKind::Outcome, {{"success", false}, {"infrastructure", false}});
    CHECK(classify_trace(trace).failure == FailureClass::MultiRobot);
  }
  SUBCASE("plain exhaustion -> budget_exhausted") {
    EpisodeTrace trace;
    trace.add(0, RecordKind::Outcome, {{"success", false}, {"infrastructure", false}});
    CHECK(classify_trace(trace).failure == FailureClass::BudgetExhausted);
  }
  SUBCASE("infrastructure flag wins") {
    EpisodeTrace trace;
    trace.add(0, RecordKind::PlanDiscard, {{"consecutive_rejections", 3}});
    trace.add(1, RecordKind::Outcome, {{"success", false}, {"infrastructure", true}});
    CHECK(classify_trace(trace).failure == FailureClass::Infrastructure);
  }
}

TEST_CASE("scripted suite reproduces the variant ordering") {
  const Suite suite = default_suite();
  RunOptions options;
  options.seed = 7;
  options.write_traces = false;

  const RunReport report = run_suite(suite, options);
  REQUIRE(report.results.size() == 36);  // 12 trials x 3 variants

  const Metrics& m = report.metrics;
  const MetricsCell clea = m.cells.at("clea").at("overall");
  const MetricsCell no_critic = m.cells.at("no-critic").at("overall");
  const MetricsCell baseline = m.cells.at("baseline").at("overall");

  CHECK(clea.successes == 12);
  CHECK(clea.trials == 12);
  CHECK(no_critic.successes < clea.successes);
  CHECK(baseline.successes <= no_critic.successes);
  CHECK(clea.sr >= no_critic.sr);
  CHECK(no_critic.sr >= baseline.sr);
  CHECK(clea.as_mean >= no_critic.as_mean);
  CHECK(no_critic.as_mean >= baseline.as_mean);
  CHECK(clea.sr > baseline.sr);
  CHECK(clea.as_mean > baseline.as_mean);

  // The baseline loses every integration trial.
  const MetricsCell bi = m.cells.at("baseline").at("integration");
  CHECK(bi.trials == 6);
  CHECK(bi.successes == 0);

  // CLEA's rejections are all classified.
  int clea_rejections = 0;
  for (const auto& [category, count] : report.rejections_by_variant.at("clea"))
    clea_rejections += count;
  CHECK(clea_rejections >= 3);
  CHECK(report.rejections_by_variant.count("no-critic") == 0);
}

TEST_CASE("emit_report writes one JSONL line per trial and a summary") {
  const Suite suite = default_suite();
  RunOptions options;
  options.seed = 3;
  options.variants = {AgentVariant::Clea};
  options.write_traces = true;
  options.out_dir = std::filesystem::temp_directory_path() / "clea_report_a";
  std::filesystem::remove_all(options.out_dir);

  const RunReport report = run_suite(suite, options);
  CHECK(report.results.size() == 12);

  const std::string trials = slurp(options.out_dir / "trials.jsonl");
  CHECK(std::count(trials.begin(), trials.end(), '\n') == 12);
  const std::string summary = slurp(options.out_dir / "summary.md");
  CHECK(summary.find("| clea | overall |") != std::string::npos);

  SUBCASE("reruns are byte-identical") {
    RunOptions again = options;
    again.out_dir = std::filesystem::temp_directory_path() / "clea_report_b";
    std::filesystem::remove_all(again.out_dir);
    run_suite(suite, again);
    CHECK(slurp(again.out_dir / "trials.jsonl") == trials);
    CHECK(slurp(again.out_dir / "summary.md") == summary);
    for (const auto& entry : std::filesystem::directory_iterator(options.out_dir)) {
      const auto name = entry.path().filename();
      CHECK(slurp(again.out_dir / name) == slurp(entry.path()));
    }
  }

  SUBCASE("all three variants appear when all were run") {
    RunOptions full = options;
    full.variants = {AgentVariant::Clea, AgentVariant::NoCritic,
                     AgentVariant::OpenLoopBaseline};
    full.out_dir = std::filesystem::temp_directory_path() / "clea_report_c";
    std::filesystem::remove_all(full.out_dir);
    run_suite(suite, full);
    const std::string text = slurp(full.out_dir / "summary.md");
    CHECK(text.find("| clea |") != std::string::npos);
    CHECK(text.find("| no-critic |") != std::string::npos);
    CHECK(text.find("| baseline |") != std::string::npos);
  }
}

TEST_CASE("parallel runs produce the same results as sequential") {
  const Suite suite = default_suite();
  RunOptions seq;
  seq.seed = 5;
  seq.write_traces = false;
  RunOptions par = seq;
  par.workers = 4;

  const RunReport a = run_suite(suite, seq);
  const RunReport b = run_suite(suite, par);
  REQUIRE(a.results.size() == b.results.size());
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    CHECK(trial_result_to_json(a.results[i]) == trial_result_to_json(b.results[i]));
  }
}

TEST_CASE("traces replay to the recorded digests") {
  const Suite suite = default_suite();
  RunOptions options;
  options.out_dir = std::filesystem::temp_directory_path() / "clea_replay";
  std::filesystem::remove_all(options.out_dir);
  options.write_traces = true;

  run_suite(suite, options);
  int checked = 0;
  for (const auto& entry : std::filesystem::directory_iterator(options.out_dir)) {
    if (entry.path().filename().string().rfind("trace-", 0) != 0) continue;
    const ReplayResult result = replay_trace(entry.path());
    CAPTURE(entry.path().filename().string());
    CAPTURE(result.message);
    CHECK(result.ok);
    ++checked;
  }
  CHECK(checked == 36);
}

TEST_CASE("prompt template assets match the built-in defaults") {
  const auto assets = find_assets_dir();
  REQUIRE(assets.has_value());
  const prompts::TemplateSet from_files = prompts::load_from_dir(*assets / "prompts");
  const prompts::TemplateSet& built_in = prompts::defaults();
  CHECK(from_files.observer == built_in.observer);
  CHECK(from_files.summarizer == built_in.summarizer);
  CHECK(from_files.planner == built_in.planner);
  CHECK(from_files.planner_refine == built_in.planner_refine);
  CHECK(from_files.critic == built_in.critic);
  CHECK(from_files.baseline == built_in.baseline);
  CHECK(from_files.baseline_replan == built_in.baseline_replan);
}

TEST_CASE("success implies full score on the default suite") {
  const Suite suite = default_suite();
  RunOptions options;
  options.write_traces = false;
  const RunReport report = run_suite(suite, options);
  for (const auto& r : report.results) {
    if (r.success) CHECK(r.score == r.max_score);
    CHECK(r.score <= r.max_score);
    CHECK((r.success ? r.failure == FailureClass::None : r.failure != FailureClass::None));
  }
}
