#include <chrono>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sglscv/experiment.hpp"

namespace ex = sglscv::experiment;

namespace {

int cmd_run(const std::string& config_path, const std::string& preset, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> replicates, const std::string& out, bool print_config) {
  ex::ExperimentConfig cfg;
  if (!preset.empty() && !config_path.empty()) throw CLI::ValidationError("run", "give a config file or --preset, not both");
  if (!preset.empty())
    cfg = ex::preset(preset);
  else if (!config_path.empty())
    cfg = ex::load_config(config_path);
  else
    throw CLI::ValidationError("run", "a config file or --preset is required");
  if (seed) cfg.seed = *seed;
  if (replicates) {
    if (*replicates == 0) throw CLI::ValidationError("--replicates", "must be positive");
    cfg.replicates = *replicates;
  }
  if (!out.empty()) cfg.output = out;
  if (print_config) {
    std::cout << ex::serialize(cfg) << '\n';
    return 0;
  }

  const auto t0 = std::chrono::steady_clock::now();
  const auto result = ex::run_experiment(cfg);
  const auto paths = ex::write_results(cfg, result);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& rows = result.tables[i].rows;
    std::printf("%-22s final error %.3e  grad evals %zu  -> %s\n", result.tables[i].label.c_str(),
                rows.empty() ? 0.0 : rows.back().error, rows.empty() ? std::size_t{0} : rows.back().grad_evals,
                paths[i].string().c_str());
  }
  std::printf("done in %.1f s\n", secs);
  return 0;
}

int cmd_check(const std::string& module) {
  const auto modules = module == "all" ? ex::check_modules() : std::vector<std::string>{module};
  bool ok = true;
  for (const auto& m : modules) {
    for (const auto& c : ex::self_check(m)) {
      std::printf("%s %s/%s: %s\n", c.passed ? "PASS" : "FAIL", m.c_str(), c.name.c_str(), c.detail.c_str());
      ok = ok && c.passed;
    }
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SG-LSCV experiment runner"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment and write one CSV per run");
  std::string config_path, preset, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicates;
  bool print_config = false;
  run->add_option("config", config_path, "JSON config file")->check(CLI::ExistingFile);
  run->add_option("--preset", preset, "Named preset instead of a file")
      ->check(CLI::IsMember(ex::preset_names()));
  run->add_option("--seed", seed, "Master seed override");
  run->add_option("--replicates", replicates, "Replicate count override");
  run->add_option("--out", out, "Output directory override");
  run->add_flag("--print-config", print_config, "Print the resolved config and exit");

  auto* list = app.add_subcommand("list-presets", "List the built-in presets");

  auto* check = app.add_subcommand("check", "Run the invariant checks of a module");
  std::string module = "all";
  std::vector<std::string> modules = ex::check_modules();
  modules.push_back("all");
  check->add_option("module", module, "Module name or 'all'")->check(CLI::IsMember(modules));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, preset, seed, replicates, out, print_config);
    if (*list) {
      for (const auto& n : ex::preset_names()) std::cout << n << '\n';
      return 0;
    }
    if (*check) return cmd_check(module);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
