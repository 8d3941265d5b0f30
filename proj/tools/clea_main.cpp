#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "clea/harness.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_run(const std::string& suite_arg, const std::vector<std::string>& variant_args,
            const std::string& backend_arg, const std::string& endpoint,
            const std::string& model, const std::string& config_path, std::uint64_t seed,
            int workers, const std::string& out_dir, int max_steps) {
  fs::path suite_path = suite_arg;
  if (suite_path.empty()) {
    auto assets = clea::find_assets_dir();
    if (!assets) {
      std::cerr << "no --suite given and no assets/ directory found\n";
      return 2;
    }
    suite_path = *assets / "suites" / "default.json";
  }

  clea::RunOptions options;
  options.seed = seed;
  options.workers = workers;
  options.out_dir = out_dir;
  options.budgets.max_steps = max_steps;

  options.variants.clear();
  for (const auto& v : variant_args) {
    if (v == "clea") options.variants.push_back(clea::AgentVariant::Clea);
    else if (v == "no-critic") options.variants.push_back(clea::AgentVariant::NoCritic);
    else if (v == "baseline") options.variants.push_back(clea::AgentVariant::OpenLoopBaseline);
    else if (v == "all") {
      options.variants = {clea::AgentVariant::Clea, clea::AgentVariant::NoCritic,
                          clea::AgentVariant::OpenLoopBaseline};
    } else {
      std::cerr << "unknown variant '" << v << "'\n";
      return 2;
    }
  }

  if (backend_arg == "remote") {
    options.mode = clea::BackendMode::Remote;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) {
        std::cerr << "cannot open config '" << config_path << "'\n";
        return 2;
      }
      nlohmann::json j;
      in >> j;
      options.remote = clea::remote_config_from_json(j);
    }
    if (!endpoint.empty()) options.remote.base_url = endpoint;
    if (!model.empty()) options.remote.model = model;
  }

  try {
    const clea::Suite suite = clea::load_suite(suite_path);
    std::cout << "suite: " << suite_path.string() << " (" << suite.planned_trials()
              << " trials per variant)\n";
    const clea::RunReport report = clea::run_suite(suite, options);

    for (const auto& [variant, families] : report.metrics.cells) {
      const auto& overall = families.at("overall");
      std::cout << variant << ": SR " << overall.successes << "/" << overall.trials << ", AS "
                << overall.as_mean << "\n";
    }
    std::cout << "report: " << (fs::path(out_dir) / "summary.md").string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return 1;
  }
}

int cmd_replay(const std::string& trace_path) {
  const clea::ReplayResult result = clea::replay_trace(trace_path);
  if (result.ok) {
    std::cout << "replay ok: " << result.actions_replayed << " actions, final digest "
              << result.final_digest << "\n";
    return 0;
  }
  std::cerr << "replay failed: " << result.message << "\n";
  return 1;
}

int cmd_validate(const std::string& world_path) {
  try {
    const clea::WorldConfig cfg = clea::load_world_config_file(world_path);
    std::cout << "ok: " << cfg.objects.size() << " objects, " << cfg.containers.size()
              << " containers, " << cfg.spaces.size() << " spaces, " << cfg.devices.size()
              << " devices, " << cfg.robots.size() << " robots\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop embodied-agent harness"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a task suite and write reports");
  std::string suite, backend = "scripted", endpoint, model, config, out = "out";
  std::vector<std::string> variants = {"all"};
  std::uint64_t seed = 0;
  int workers = 1;
  int max_steps = 50;
  run->add_option("--suite", suite, "Suite JSON (default: assets/suites/default.json)");
  run->add_option("--variant", variants, "clea | no-critic | baseline | all (repeatable)");
  run->add_option("--backend", backend, "scripted | remote")
      ->check(CLI::IsMember({"scripted", "remote"}));
  run->add_option("--endpoint", endpoint, "Remote base URL, e.g. http://host:8000/v1");
  run->add_option("--model", model, "Remote model id");
  run->add_option("--config", config, "Remote config JSON file");
  run->add_option("--seed", seed, "Base seed");
  run->add_option("--workers", workers, "Parallel trial workers");
  run->add_option("--max-steps", max_steps, "Per-episode step budget");
  run->add_option("--out", out, "Output directory");

  auto* replay = app.add_subcommand("replay", "Re-execute a trace and check digests");
  std::string trace;
  replay->add_option("--trace", trace, "Trace JSONL file")->required();

  auto* validate = app.add_subcommand("validate", "Validate a world config");
  std::string world;
  validate->add_option("--world", world, "World config JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed())
    return cmd_run(suite, variants, backend, endpoint, model, config, seed, workers, out,
                   max_steps);
  if (replay->parsed()) return cmd_replay(trace);
  return cmd_validate(world);
}
