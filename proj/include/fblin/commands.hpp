#pragma once

// Subcommand implementations behind the fblin command-line tool. Each returns
// a process exit code and writes its artifacts into the configured output
// directory.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fblin/config.hpp"
#include "fblin/continuation.hpp"
#include "fblin/evaluation.hpp"
#include "fblin/external_process.hpp"
#include "fblin/linalg.hpp"
#include "fblin/network.hpp"
#include "fblin/residuals.hpp"
#include "fblin/series.hpp"
#include "fblin/system.hpp"

namespace fblin {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitAssumption = 2,
  kExitNumeric = 3,
};

inline SystemModel make_system(const RunConfig& cfg) {
  if (cfg.system_name == "benchmark") {
    if (cfg.dimension != 2) throw ConfigError("the benchmark system is two-dimensional");
    SystemModel s = benchmark_system();
    return cfg.mode == SystemMode::black_box ? s.as_black_box(cfg.fd_step) : s;
  }
  return external_system(cfg.system_command, cfg.dimension, cfg.fd_step);
}

inline std::optional<TransformFn> reference_solution(const RunConfig& cfg) {
  if (!cfg.benchmark_reference || cfg.dimension != 2) return std::nullopt;
  return TransformFn(analytic_solution);
}

inline Grid training_grid(const RunConfig& cfg, double x_lower) {
  return make_grid(BoxDomain::corner(x_lower, cfg.dimension), cfg.train_points, GridKind::equispaced);
}

inline Grid test_grid(const RunConfig& cfg, double x_lower) {
  return make_grid(BoxDomain::corner(x_lower, cfg.dimension), cfg.test_points, GridKind::chebyshev);
}

/// Outer box of the configured schedule.
inline double domain_lower(const RunConfig& cfg) {
  const ContinuationSchedule s = cfg.make_schedule();
  return s.stages.back().box.lower.minCoeff();
}

inline std::filesystem::path prepare_output(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

namespace detail {

inline nlohmann::json norms_json(const EvaluationReport& rep) {
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t c = 0; c < rep.norms.size(); ++c) {
    j.push_back({{"component", "T" + std::to_string(c + 1)},
                 {"L1", rep.norms[c].l1},
                 {"L2", rep.norms[c].l2},
                 {"Linf", rep.norms[c].linf}});
  }
  return j;
}

inline GridDescriptor descriptor(const char* kind, Eigen::Index pts, double x_lower, Eigen::Index n) {
  return {kind, pts, Vector::Constant(n, x_lower), Vector::Zero(n)};
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  out << content;
}

template <class Writer>
void write_with(const std::filesystem::path& p, Writer&& w) {
  std::ostringstream os;
  w(os);
  write_file(p, os.str());
}

inline void print_norms(std::ostream& log, const std::string& label, const EvaluationReport& rep) {
  log << label << '\n';
  for (std::size_t c = 0; c < rep.norms.size(); ++c) {
    log << "  T" << c + 1 << std::scientific << std::setprecision(2) << "  L1 " << rep.norms[c].l1
        << "  L2 " << rep.norms[c].l2 << "  Linf " << rep.norms[c].linf << std::defaultfloat << '\n';
  }
}

}  // namespace detail

inline void print_report(std::ostream& os, const SpectralReport& rep) {
  os << "eigenvalues of A:";
  for (const Complex& k : rep.eigenvalues_of_A) os << ' ' << format_complex(k);
  os << "\neigenvalues of J:";
  for (const Complex& l : rep.eigenvalues_of_J) os << ' ' << format_complex(l);
  os << '\n';
  const char* names[] = {"1 controllability rank", "2 eigenvalues of A inside the unit disc",
                         "3 disjoint spectra of A and J", "4 no eigenvalue resonance",
                         "5 observability rank of (c, A)"};
  const auto checks = rep.checks();
  for (std::size_t i = 0; i < checks.size(); ++i) {
    os << "assumption " << names[i] << ": " << (checks[i]->passed ? "PASS" : "FAIL");
    if (!checks[i]->passed) os << " (" << checks[i]->reason << ")";
    os << '\n';
  }
  os << "resonance products checked up to total order " << rep.resonance_order_checked;
  if (rep.resonance_decay_order) {
    os << "; products of total order >= " << *rep.resonance_decay_order
       << " cannot reach any |lambda_j|";
    if (*rep.resonance_decay_order <= rep.resonance_order_checked + 1) os << " (check is exhaustive)";
  }
  os << '\n';
}

inline SpectralReport run_check(const RunConfig& cfg, const SystemModel& sys) {
  const EquilibriumData eq = equilibrium_data(sys);
  return check_assumptions(eq.J, eq.G, cfg.A, cfg.c, cfg.resonance_bound);
}

inline int cmd_check(const RunConfig& cfg, std::ostream& log = std::cout) {
  cfg.validate();
  const SystemModel sys = make_system(cfg);
  const SpectralReport rep = run_check(cfg, sys);
  print_report(log, rep);
  return rep.all_passed() ? kExitOk : kExitAssumption;
}

/// Returns kExitOk when the assumptions pass or are overridden.
inline int gate_assumptions(const RunConfig& cfg, const SystemModel& sys, bool override_assumptions,
                            std::ostream& log) {
  const SpectralReport rep = run_check(cfg, sys);
  if (rep.all_passed()) return kExitOk;
  print_report(log, rep);
  if (override_assumptions) {
    log << "warning: assumption check failed; continuing because of --override-assumptions\n";
    return kExitOk;
  }
  log << "error: assumption check failed (use --override-assumptions to run anyway)\n";
  return kExitAssumption;
}

inline int cmd_train(const RunConfig& cfg, bool override_assumptions, std::ostream& log = std::cout) {
  cfg.validate();
  const SystemModel sys = make_system(cfg);
  if (int rc = gate_assumptions(cfg, sys, override_assumptions, log); rc != kExitOk) return rc;
  const DesignSpec spec = cfg.design();
  const PinningTarget target = solve_pinning(equilibrium_data(sys), spec);
  const ContinuationSchedule schedule = cfg.make_schedule();
  const auto reference = reference_solution(cfg);

  TrainOptions opts;
  opts.reference = reference;
  const RestartSummary runs =
      train_best_of(sys, spec, schedule, cfg.arch, target, cfg.seed, cfg.restarts, opts);
  for (const std::string& f : runs.failures) log << "restart failed: " << f << '\n';
  const TrainReport& best = runs.best_run();
  if (!runs.best_invertible) log << "warning: no restart produced a transformation invertible on the training grid\n";

  const auto dir = prepare_output(cfg);
  detail::write_with(dir / "params.txt", [&](std::ostream& os) { write_params(os, best.final_params); });
  detail::write_with(dir / "stages.csv", [&](std::ostream& os) { write_stage_csv(os, best); });

  nlohmann::ordered_json summary;
  summary["command"] = "train";
  summary["system"] = cfg.system_name;
  summary["mode"] = to_string(cfg.mode);
  summary["architecture"] = {{"n", cfg.arch.n}, {"N1", cfg.arch.N1}, {"N2", cfg.arch.N2},
                             {"activation", to_string(cfg.arch.activation)}};
  summary["stages"] = schedule.stages.size();
  summary["warm_restart"] = schedule.warm_restart;
  summary["seed"] = cfg.seed;
  summary["restarts"] = cfg.restarts;
  summary["best_seed"] = best.seed;
  nlohmann::ordered_json restarts = nlohmann::ordered_json::array();
  for (const TrainReport& r : runs.runs) restarts.push_back({{"seed", r.seed}, {"final_loss", r.final_loss()}, {"min_jacobian_det", r.min_jacobian_det}});
  summary["restart_losses"] = restarts;
  summary["best_invertible"] = runs.best_invertible;
  summary["final_loss"] = best.final_loss();
  {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < target.jac0.rows(); ++i) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (Eigen::Index j = 0; j < target.jac0.cols(); ++j) row.push_back(target.jac0(i, j));
      rows.push_back(row);
    }
    summary["jac0"] = rows;
  }

  log << "best of " << runs.runs.size() << " restarts: seed " << best.seed << ", final loss "
      << best.final_loss() << '\n';
  if (reference) {
    const double xl = schedule.stages.back().box.lower.minCoeff();
    const TransformFn net = [p = best.final_params](const Vector& x) { return forward(p, x); };
    const EvaluationReport tr = evaluate(net, training_grid(cfg, xl), *reference,
                                         detail::descriptor("equispaced", cfg.train_points, xl, cfg.dimension));
    const EvaluationReport te = evaluate(net, test_grid(cfg, xl), *reference,
                                         detail::descriptor("chebyshev", cfg.test_points, xl, cfg.dimension));
    summary["training_grid_norms"] = detail::norms_json(tr);
    summary["test_grid_norms"] = detail::norms_json(te);
    detail::write_with(dir / "norms_train.csv", [&](std::ostream& os) { write_norm_table_csv(os, tr, "train"); });
    detail::write_with(dir / "norms_test.csv", [&](std::ostream& os) { write_norm_table_csv(os, te, "test"); });
    detail::write_with(dir / "errors_train.csv", [&](std::ostream& os) { write_error_field_csv(os, tr); });
    detail::write_with(dir / "errors_test.csv", [&](std::ostream& os) { write_error_field_csv(os, te); });
    detail::print_norms(log, "training grid", tr);
    detail::print_norms(log, "test grid", te);
  }
  detail::write_file(dir / "summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

inline int cmd_baseline(const RunConfig& cfg, bool override_assumptions, std::ostream& log = std::cout) {
  cfg.validate();
  const SystemModel sys = make_system(cfg);
  if (int rc = gate_assumptions(cfg, sys, override_assumptions, log); rc != kExitOk) return rc;
  const DesignSpec spec = cfg.design();
  const PinningTarget target = solve_pinning(equilibrium_data(sys), spec);
  const double xl = cfg.baseline_x_lower;
  const Grid grid = make_grid(BoxDomain::corner(xl, cfg.dimension), cfg.baseline_points, GridKind::equispaced);
  const SeriesFit fit = fit_series(sys, spec, grid, target, cfg.baseline_order, cfg.optimizer);

  const auto dir = prepare_output(cfg);
  detail::write_with(dir / "series_coefficients.csv", [&](std::ostream& os) { write_series_csv(os, fit.coeffs); });
  nlohmann::ordered_json summary;
  summary["command"] = "baseline";
  summary["mode"] = to_string(cfg.mode);
  summary["order"] = cfg.baseline_order;
  summary["coefficients"] = fit.coeffs.parameter_count();
  summary["final_loss"] = fit.lm.final_loss;
  summary["iterations"] = fit.lm.iterations;
  summary["termination"] = to_string(fit.lm.reason);
  log << "order-" << cfg.baseline_order << " series, " << fit.coeffs.parameter_count()
      << " coefficients, final loss " << fit.lm.final_loss << '\n';
  if (const auto reference = reference_solution(cfg)) {
    const TransformFn ser = [s = fit.coeffs](const Vector& x) { return evaluate_series(s, x); };
    const EvaluationReport tr = evaluate(ser, grid, *reference,
                                         detail::descriptor("equispaced", cfg.baseline_points, xl, cfg.dimension));
    const EvaluationReport te = evaluate(ser, test_grid(cfg, xl), *reference,
                                         detail::descriptor("chebyshev", cfg.test_points, xl, cfg.dimension));
    summary["training_grid_norms"] = detail::norms_json(tr);
    summary["test_grid_norms"] = detail::norms_json(te);
    detail::write_with(dir / "norms_train.csv", [&](std::ostream& os) { write_norm_table_csv(os, tr, "train"); });
    detail::write_with(dir / "norms_test.csv", [&](std::ostream& os) { write_norm_table_csv(os, te, "test"); });
    detail::write_with(dir / "errors_train.csv", [&](std::ostream& os) { write_error_field_csv(os, tr); });
    detail::write_with(dir / "errors_test.csv", [&](std::ostream& os) { write_error_field_csv(os, te); });
    detail::print_norms(log, "training grid", tr);
    detail::print_norms(log, "test grid", te);
  }
  detail::write_file(dir / "summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

/// Loads a snapshot and checks it against the configured architecture.
inline NetworkParams load_params(const RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open parameter file '" + path + "'");
  NetworkParams p = read_params(in);
  if (!(p.arch == cfg.arch)) {
    std::ostringstream os;
    os << "parameter file '" << path << "' has architecture n=" << p.arch.n << " N1=" << p.arch.N1
       << " N2=" << p.arch.N2 << " activation=" << to_string(p.arch.activation)
       << ", configuration expects n=" << cfg.arch.n << " N1=" << cfg.arch.N1 << " N2=" << cfg.arch.N2
       << " activation=" << to_string(cfg.arch.activation);
    throw ConfigError(os.str());
  }
  return p;
}

/// The transformation under test: the closed form when exact, else a network snapshot.
inline TransformFn select_transform(const RunConfig& cfg, const std::string& params_file, bool exact) {
  if (exact) {
    if (cfg.dimension != 2) throw ConfigError("--exact is only available for the benchmark");
    return analytic_solution;
  }
  if (params_file.empty()) throw ConfigError("either --params FILE or --exact is required");
  return [p = load_params(cfg, params_file)](const Vector& x) { return forward(p, x); };
}

inline int cmd_evaluate(const RunConfig& cfg, const std::string& params_file, bool exact,
                        std::ostream& log = std::cout) {
  cfg.validate();
  const TransformFn transform = select_transform(cfg, params_file, exact);
  const auto reference = reference_solution(cfg);
  if (!reference) throw ConfigError("evaluate needs a reference solution (evaluate.reference = benchmark)");
  const double xl = domain_lower(cfg);
  const auto dir = prepare_output(cfg);
  const EvaluationReport eq = evaluate(transform, training_grid(cfg, xl), *reference,
                                       detail::descriptor("equispaced", cfg.train_points, xl, cfg.dimension));
  const EvaluationReport ch = evaluate(transform, test_grid(cfg, xl), *reference,
                                       detail::descriptor("chebyshev", cfg.test_points, xl, cfg.dimension));
  detail::write_with(dir / "errors_equispaced.csv", [&](std::ostream& os) { write_error_field_csv(os, eq); });
  detail::write_with(dir / "errors_chebyshev.csv", [&](std::ostream& os) { write_error_field_csv(os, ch); });
  detail::write_with(dir / "norms.csv", [&](std::ostream& os) {
    write_norm_table_csv(os, eq, "equispaced");
    write_norm_table_csv(os, ch, "chebyshev");
  });
  detail::print_norms(log, "equispaced grid", eq);
  detail::print_norms(log, "chebyshev grid", ch);
  return kExitOk;
}

inline int cmd_simulate(const RunConfig& cfg, const std::string& params_file, bool exact,
                        std::ostream& log = std::cout) {
  cfg.validate();
  const SystemModel sys = make_system(cfg);
  const TransformFn transform = select_transform(cfg, params_file, exact);
  const ClosedLoopTrace tr = simulate_closed_loop(sys, cfg.design(), transform, cfg.x0, cfg.horizon);
  const auto dir = prepare_output(cfg);
  detail::write_with(dir / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, tr); });
  if (tr.states.empty()) {
    log << "simulation could not start: " << tr.exit_reason << '\n';
    return kExitNumeric;
  }
  log << "steps: " << tr.states.size() - 1 << " of " << tr.horizon << '\n';
  log << std::scientific << std::setprecision(6);
  log << "final state inf-norm: " << tr.final_state().cwiseAbs().maxCoeff() << '\n';
  log << "max transformed-linearity residual: " << tr.max_linearity_residual(cfg.A) << '\n';
  log << std::defaultfloat;
  if (tr.exited_domain) log << "trajectory left the valid domain: " << tr.exit_reason << '\n';
  return kExitOk;
}

inline int cmd_grid_export(const RunConfig& cfg, GridKind kind, Eigen::Index points, double x_lower,
                           std::ostream& log = std::cout) {
  const Grid g = make_grid(BoxDomain::corner(x_lower, cfg.dimension), points, kind);
  const auto dir = prepare_output(cfg);
  const std::string name = std::string("grid_") + to_string(kind) + ".csv";
  detail::write_with(dir / name, [&](std::ostream& os) {
    for (Eigen::Index k = 0; k < cfg.dimension; ++k) os << (k ? "," : "") << "x" << k + 1;
    os << '\n';
    std::ostringstream cell;
    cell.precision(17);
    for (const Vector& x : g) {
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        cell.str("");
        cell << x(k);
        os << (k ? "," : "") << cell.str();
      }
      os << '\n';
    }
  });
  log << "wrote " << g.size() << " points to " << (dir / name).string() << '\n';
  return kExitOk;
}

}  // namespace fblin
