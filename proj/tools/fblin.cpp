#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fblin/commands.hpp"

namespace {

struct Common {
  std::string config_path;
  std::string output;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<int> restarts;
  std::vector<std::string> overrides;
  bool override_assumptions = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "run configuration file");
  cmd->add_option("-o,--output", c.output, "output directory");
  cmd->add_option("--mode", c.mode, "analytic | black_box")->check(CLI::IsMember({"analytic", "black_box", "black-box"}));
  cmd->add_option("--seed", c.seed, "base random seed");
  cmd->add_option("--restarts", c.restarts, "number of restarts K");
  cmd->add_option("--set", c.overrides, "extra setting, section.key=value (repeatable)");
  cmd->add_flag("--override-assumptions", c.override_assumptions, "continue when an assumption check fails");
}

fblin::RunConfig build_config(const Common& c) {
  fblin::RunConfig cfg = c.config_path.empty() ? fblin::RunConfig{} : fblin::load_config(c.config_path);
  for (const std::string& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw fblin::ConfigError("--set expects section.key=value, got '" + kv + "'");
    fblin::apply_setting(cfg, fblin::detail::trim(kv.substr(0, eq)), fblin::detail::trim(kv.substr(eq + 1)),
                         "--set");
  }
  if (!c.mode.empty()) fblin::apply_setting(cfg, "system.mode", c.mode, "--mode");
  if (c.seed) cfg.seed = *c.seed;
  if (c.restarts) cfg.restarts = *c.restarts;
  if (!c.output.empty()) cfg.output_dir = c.output;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn feedback-linearizing transformations of discrete-time plants"};
  app.require_subcommand(1);

  Common common;
  bool benchmark_default = false;
  std::string params_file;
  bool exact = false;
  std::vector<double> x0;
  std::optional<long> horizon;
  std::string grid_kind = "chebyshev";
  long grid_points = 50;
  double grid_lower = fblin::benchmark::kDomainLower;

  auto* check = app.add_subcommand("check", "verify the solvability assumptions");
  add_common(check, common);

  auto* train = app.add_subcommand("train", "greedy training of the network transformation");
  add_common(train, common);
  train->add_flag("--benchmark-default", benchmark_default, "use the 15-stage benchmark schedule");

  auto* baseline = app.add_subcommand("baseline", "fit the power-series baseline");
  add_common(baseline, common);

  auto* evaluate = app.add_subcommand("evaluate", "error fields and norm tables against the reference");
  add_common(evaluate, common);
  evaluate->add_option("--params", params_file, "network parameter file");
  evaluate->add_flag("--exact", exact, "evaluate the closed-form transformation");

  auto* simulate = app.add_subcommand("simulate", "closed-loop simulation");
  add_common(simulate, common);
  simulate->add_option("--params", params_file, "network parameter file");
  simulate->add_flag("--exact", exact, "use the closed-form transformation");
  simulate->add_option("--x0", x0, "initial state")->delimiter(',');
  simulate->add_option("--horizon", horizon, "number of steps");

  auto* grid = app.add_subcommand("grid-export", "write a collocation grid as CSV");
  add_common(grid, common);
  grid->add_option("--kind", grid_kind, "equispaced | chebyshev")->check(CLI::IsMember({"equispaced", "chebyshev"}));
  grid->add_option("--points", grid_points, "points per axis");
  grid->add_option("--x-lower", grid_lower, "lower corner of the box");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? fblin::kExitOk : fblin::kExitUsage;
  }

  try {
    fblin::RunConfig cfg = build_config(common);
    if (check->parsed()) return fblin::cmd_check(cfg);
    if (train->parsed()) {
      if (benchmark_default) cfg.schedule.preset = fblin::SchedulePlan::Preset::benchmark_default;
      return fblin::cmd_train(cfg, common.override_assumptions);
    }
    if (baseline->parsed()) return fblin::cmd_baseline(cfg, common.override_assumptions);
    if (evaluate->parsed()) return fblin::cmd_evaluate(cfg, params_file, exact);
    if (simulate->parsed()) {
      if (!x0.empty()) cfg.x0 = Eigen::Map<const fblin::Vector>(x0.data(), static_cast<Eigen::Index>(x0.size()));
      if (horizon) cfg.horizon = *horizon;
      cfg.validate();
      return fblin::cmd_simulate(cfg, params_file, exact);
    }
    if (grid->parsed()) {
      return fblin::cmd_grid_export(cfg, grid_kind == "equispaced" ? fblin::GridKind::equispaced : fblin::GridKind::chebyshev,
                                    grid_points, grid_lower);
    }
  } catch (const fblin::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return fblin::kExitUsage;
  } catch (const fblin::DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << '\n';
    return fblin::kExitUsage;
  } catch (const fblin::Error& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return fblin::kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fblin::kExitNumeric;
  }
  return fblin::kExitUsage;
}
