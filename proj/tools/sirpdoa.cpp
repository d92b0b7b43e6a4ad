#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sirpdoa/errors.hpp"
#include "sirpdoa/harness.hpp"
#include "sirpdoa/oracle.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed, std::size_t parallel) {
  sirpdoa::ExperimentConfig config = sirpdoa::load_config(config_path);
  if (seed) config.master_seed = *seed;
  const sirpdoa::ExperimentResult result = sirpdoa::run_experiment(config, parallel);
  sirpdoa::write_results(result, config, out_dir);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << sirpdoa::mse_table_to_csv(result.table);
  std::fprintf(stderr, "wrote %s (%.1f s)\n", out_dir.c_str(), result.wall_seconds);
  return 0;
}

int cmd_validate(const std::string& config_path) {
  const sirpdoa::ExperimentConfig config = sirpdoa::load_config(config_path);
  std::cout << "ok: " << config_path << '\n' << sirpdoa::config_to_json(config) << '\n';
  return 0;
}

int cmd_oracle(const std::string& suite, std::size_t instances, std::uint64_t seed) {
  std::vector<std::string> names;
  if (suite == "all") {
    names = sirpdoa::oracle::suite_names();
  } else {
    names.push_back(suite);
  }
  bool all_passed = true;
  for (const auto& name : names) {
    const auto r = sirpdoa::oracle::run_suite(name, instances, seed);
    std::printf("%-5s %-10s instances=%zu max_err=%.3e tol=%.0e\n", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.instances, r.max_error, r.tolerance);
    all_passed = all_passed && r.passed;
  }
  return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DOA estimation under compound-Gaussian (SIRP) noise"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t parallel = 1;
  auto* run = app.add_subcommand("run", "run a Monte-Carlo MSE-vs-SNR experiment");
  run->add_option("--config", config_path, "experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory")->required();
  auto* seed_opt = run->add_option("--seed", seed, "override the master seed");
  run->add_option("--parallel", parallel, "worker threads")->check(CLI::PositiveNumber);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate-config", "check an experiment JSON");
  validate->add_option("file", validate_path)->required();

  std::string suite;
  std::size_t instances = 100;
  std::uint64_t oracle_seed = 1;
  auto* oracle = app.add_subcommand("oracle", "compare closed-form updates to brute-force optima");
  oracle->add_option("suite", suite, "suite name or 'all'")->required();
  oracle->add_option("--instances", instances, "random instances per suite");
  oracle->add_option("--seed", oracle_seed, "seed for the random instances");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      return cmd_run(config_path, out_dir,
                     seed_opt->count() ? std::optional<std::uint64_t>(seed) : std::nullopt,
                     parallel);
    }
    if (*validate) return cmd_validate(validate_path);
    if (*oracle) return cmd_oracle(suite, instances, oracle_seed);
  } catch (const sirpdoa::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
