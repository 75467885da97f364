#pragma once

// Continuation ("greedy") training: fit the network on a nested sequence of
// growing boxes, warm-starting every stage from the previous one.

#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fblin/errors.hpp"
#include "fblin/evaluation.hpp"
#include "fblin/levenberg_marquardt.hpp"
#include "fblin/linalg.hpp"
#include "fblin/network.hpp"
#include "fblin/residuals.hpp"
#include "fblin/system.hpp"

namespace fblin {

struct BoxDomain {
  Vector lower;
  Vector upper;

  /// [x_lower, 0]^n
  static BoxDomain corner(double x_lower, Eigen::Index n = 2) {
    return {Vector::Constant(n, x_lower), Vector::Zero(n)};
  }

  bool contains(const BoxDomain& other) const {
    return (lower.array() <= other.lower.array()).all() &&
           (upper.array() >= other.upper.array()).all();
  }

  void validate() const {
    if (lower.size() != upper.size() || lower.size() == 0) {
      throw DimensionError("box: lower and upper must have equal, non-zero length");
    }
    if ((lower.array() > upper.array()).any()) throw ConfigError("box: lower exceeds upper");
    if ((lower.array() > 0.0).any() || (upper.array() < 0.0).any()) {
      throw ConfigError("box: must contain the equilibrium at the origin");
    }
  }
};

enum class GridKind { equispaced, chebyshev };

inline const char* to_string(GridKind k) {
  return k == GridKind::equispaced ? "equispaced" : "chebyshev";
}

inline GridKind parse_grid_kind(const std::string& s) {
  if (s == "equispaced") return GridKind::equispaced;
  if (s == "chebyshev") return GridKind::chebyshev;
  throw ConfigError("unknown grid kind '" + s + "'");
}

/// 1-D nodes on [a, b]. Equispaced includes both ends; Chebyshev uses the
/// roots of T_k: 0.5(a+b) - 0.5(a-b) cos((2i-1) pi / (2k)), i = 1..k.
inline std::vector<double> axis_nodes(double a, double b, Eigen::Index k, GridKind kind) {
  if (!(a < b)) throw ConfigError("grid: degenerate interval on an axis");
  std::vector<double> nodes(static_cast<std::size_t>(k));
  if (kind == GridKind::equispaced) {
    if (k < 2) throw ConfigError("grid: equispaced grids need at least 2 points per axis");
    for (Eigen::Index i = 0; i < k; ++i) {
      nodes[static_cast<std::size_t>(i)] =
          i == k - 1 ? b : a + (b - a) * static_cast<double>(i) / static_cast<double>(k - 1);
    }
  } else {
    if (k < 1) throw ConfigError("grid: Chebyshev grids need at least 1 point per axis");
    const double pi = std::acos(-1.0);
    for (Eigen::Index i = 1; i <= k; ++i) {
      nodes[static_cast<std::size_t>(i - 1)] =
          0.5 * (a + b) - 0.5 * (a - b) * std::cos((2.0 * i - 1.0) * pi / (2.0 * k));
    }
  }
  return nodes;
}

/// Tensor grid, first coordinate varying slowest.
inline Grid make_grid(const BoxDomain& box, Eigen::Index points_per_axis, GridKind kind) {
  if (box.lower.size() != box.upper.size() || box.lower.size() == 0) {
    throw DimensionError("grid: malformed box");
  }
  const Eigen::Index n = box.lower.size();
  std::vector<std::vector<double>> axes;
  for (Eigen::Index d = 0; d < n; ++d) axes.push_back(axis_nodes(box.lower(d), box.upper(d), points_per_axis, kind));
  Grid grid;
  std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
  const std::size_t k = static_cast<std::size_t>(points_per_axis);
  while (true) {
    Vector x(n);
    for (Eigen::Index d = 0; d < n; ++d) x(d) = axes[static_cast<std::size_t>(d)][idx[static_cast<std::size_t>(d)]];
    grid.push_back(std::move(x));
    Eigen::Index d = n - 1;
    while (d >= 0 && ++idx[static_cast<std::size_t>(d)] == k) idx[static_cast<std::size_t>(d--)] = 0;
    if (d < 0) break;
  }
  return grid;
}

struct Stage {
  BoxDomain box;
  Eigen::Index points_per_axis = 20;
  LmSettings settings;
};

struct ContinuationSchedule {
  std::vector<Stage> stages;
  bool warm_restart = true;

  void validate() const {
    if (stages.empty()) throw ConfigError("schedule: at least one stage is required");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      stages[i].box.validate();
      stages[i].settings.validate();
      if (i > 0 && !stages[i].box.contains(stages[i - 1].box)) {
        throw ConfigError("schedule: stage " + std::to_string(i) +
                          " does not contain the previous stage's box");
      }
    }
  }
};

/// Box lower bounds -0.20 .. -0.45 by 0.05, -0.46 .. -0.49 by 0.01, -0.491 .. -0.495 by 0.001.
inline std::vector<double> benchmark_lower_bounds() {
  std::vector<double> xs;
  for (int m = 200; m <= 450; m += 50) xs.push_back(-m / 1000.0);
  for (int m = 460; m <= 490; m += 10) xs.push_back(-m / 1000.0);
  for (int m = 491; m <= 495; m += 1) xs.push_back(-m / 1000.0);
  return xs;
}

// LM settings for network training: identity damping, mu0 = 1e-3. With
// diag(J^T J) damping the 2-5-5-2 benchmark runs collapse onto folded maps.
inline LmSettings network_training_settings() {
  LmSettings s;
  s.diagonal_scaling = false;
  return s;
}

inline ContinuationSchedule default_benchmark_schedule(const LmSettings& settings = network_training_settings(),
                                                       Eigen::Index points_per_axis = 20) {
  ContinuationSchedule s;
  for (double xl : benchmark_lower_bounds()) {
    s.stages.push_back({BoxDomain::corner(xl), points_per_axis, settings});
  }
  return s;
}

/// The whole box in one stage.
inline ContinuationSchedule single_stage_schedule(double x_lower, const LmSettings& settings = network_training_settings(),
                                                  Eigen::Index points_per_axis = 20,
                                                  Eigen::Index n = 2) {
  ContinuationSchedule s;
  s.stages.push_back({BoxDomain::corner(x_lower, n), points_per_axis, settings});
  return s;
}

struct StageReport {
  std::size_t index = 0;
  BoxDomain box;
  LmResult lm;
  std::optional<EvaluationReport> training_errors;
};

struct TrainReport {
  std::vector<StageReport> stages;
  NetworkParams final_params;
  std::uint64_t seed = 0;
  // min over the last stage's grid of det(dT/dx), sign-normalized by det(jac0)
  double min_jacobian_det = std::numeric_limits<double>::quiet_NaN();

  bool invertible() const { return min_jacobian_det > 0.0; }

  double final_loss() const { return stages.empty() ? 0.0 : stages.back().lm.final_loss; }
};

class TrainingError : public NumericError {
 public:
  TrainingError(std::size_t stage, const std::string& what, NetworkParams last_good)
      : NumericError("training stage " + std::to_string(stage) + ": " + what),
        stage_(stage),
        last_good_(std::move(last_good)) {}
  std::size_t stage() const { return stage_; }
  const NetworkParams& last_good_params() const { return last_good_; }

 private:
  std::size_t stage_;
  NetworkParams last_good_;
};

struct TrainOptions {
  ResidualWeights weights;
  std::uint64_t seed = 0;                  // used for fresh initial guesses when not warm-restarting
  std::optional<TransformFn> reference;     // training-grid errors per stage when present
  LmCallback on_iteration;                  // per-iteration log
};

/// min_i det(dT/dx(x_i)) * sign(det jac0). A value <= 0 means the learned map
/// folds somewhere on the grid and is not a change of coordinates there.
inline double min_oriented_jacobian_det(const NetworkParams& p, const Grid& grid, const Matrix& jac0) {
  const double orientation = jac0.determinant() < 0.0 ? -1.0 : 1.0;
  double m = std::numeric_limits<double>::infinity();
  for (const Vector& x : grid) m = std::min(m, orientation * input_jacobian(p, x).determinant());
  return m;
}

/// Runs one LM fit of the network on a fixed grid.
inline LmResult fit_network(const SystemModel& sys, const DesignSpec& spec, const Grid& grid,
                            const PinningTarget& target, const NetworkParams& init,
                            const LmSettings& settings, const ResidualWeights& weights = {},
                            const LmCallback& on_iteration = {}) {
  const Architecture arch = init.arch;
  const Eigen::Index rows = static_cast<Eigen::Index>(grid.size()) * sys.dimension() +
                            sys.dimension() + sys.dimension() * sys.dimension();
  auto residual_fn = [&](const Vector& p) -> Vector {
    try {
      return assemble_residuals(sys, spec, NetworkParams::unflatten(arch, p), grid, target, weights).flat();
    } catch (const DomainError&) {
      // closed-loop image left the plant's domain: reject the trial point
      return Vector::Constant(rows, std::numeric_limits<double>::quiet_NaN());
    }
  };
  auto jacobian_fn = [&](const Vector& p) -> Matrix {
    return residual_jacobian(sys, spec, NetworkParams::unflatten(arch, p), grid, target, weights);
  };
  // Surface a domain problem at the starting point with its location.
  (void)assemble_residuals(sys, spec, init, grid, target, weights);
  return minimize(residual_fn, jacobian_fn, init.flatten(), settings, on_iteration);
}

inline TrainReport train(const SystemModel& sys, const DesignSpec& spec,
                         const ContinuationSchedule& schedule, const NetworkParams& init,
                         const PinningTarget& target, const TrainOptions& options = {}) {
  schedule.validate();
  if (!init.all_finite()) throw NumericError("train: initial parameters are not finite");
  TrainReport report;
  report.seed = options.seed;
  NetworkParams current = init;
  for (std::size_t s = 0; s < schedule.stages.size(); ++s) {
    const Stage& stage = schedule.stages[s];
    if (s > 0 && !schedule.warm_restart) {
      current = NetworkParams::random_uniform(init.arch, options.seed + s);
    }
    const Grid grid = make_grid(stage.box, stage.points_per_axis, GridKind::equispaced);
    StageReport sr;
    sr.index = s;
    sr.box = stage.box;
    try {
      sr.lm = fit_network(sys, spec, grid, target, current, stage.settings, options.weights,
                          options.on_iteration);
    } catch (const Error& e) {
      throw TrainingError(s, e.what(), current);
    }
    if (!std::isfinite(sr.lm.final_loss)) throw TrainingError(s, "non-finite loss", current);
    current = NetworkParams::unflatten(init.arch, sr.lm.params);
    if (options.reference) {
      const NetworkParams snapshot = current;
      sr.training_errors = evaluate([&](const Vector& x) { return forward(snapshot, x); }, grid,
                                    *options.reference,
                                    {"equispaced", stage.points_per_axis, stage.box.lower, stage.box.upper});
    }
    report.stages.push_back(std::move(sr));
  }
  report.final_params = current;
  const Stage& last = schedule.stages.back();
  report.min_jacobian_det =
      min_oriented_jacobian_det(current, make_grid(last.box, last.points_per_axis, GridKind::equispaced), target.jac0);
  return report;
}

struct RestartSummary {
  std::vector<TrainReport> runs;  // in seed order; failed runs are absent
  std::vector<std::string> failures;
  std::size_t best = 0;
  bool best_invertible = false;  // false: no run was invertible, best is the lowest loss overall

  const TrainReport& best_run() const { return runs.at(best); }
};

/// K independent trainings from uniform [0,1] initial guesses with seeds
/// seed, seed+1, ..., keeping the lowest final training loss among the runs
/// whose transformation is invertible on the final grid.
inline RestartSummary train_best_of(const SystemModel& sys, const DesignSpec& spec,
                                    const ContinuationSchedule& schedule, const Architecture& arch,
                                    const PinningTarget& target, std::uint64_t seed, int restarts,
                                    TrainOptions options = {}, bool parallel = false) {
  if (restarts < 1) throw ConfigError("restarts must be >= 1");
  auto run_one = [&](std::uint64_t sd) {
    TrainOptions o = options;
    o.seed = sd;
    o.on_iteration = {};
    return train(sys, spec, schedule, NetworkParams::random_uniform(arch, sd), target, o);
  };
  std::vector<std::optional<TrainReport>> results(static_cast<std::size_t>(restarts));
  std::vector<std::string> errors(static_cast<std::size_t>(restarts));
  auto guarded = [&](std::size_t i) {
    try {
      results[i] = run_one(seed + i);
    } catch (const TrainingError& e) {
      errors[i] = "seed " + std::to_string(seed + i) + ": " + e.what();
    }
  };
  if (parallel) {
    std::vector<std::future<void>> futs;
    for (std::size_t i = 0; i < results.size(); ++i) futs.push_back(std::async(std::launch::async, guarded, i));
    for (auto& f : futs) f.get();
  } else {
    for (std::size_t i = 0; i < results.size(); ++i) guarded(i);
  }
  RestartSummary out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!errors[i].empty()) out.failures.push_back(errors[i]);
    if (results[i]) out.runs.push_back(std::move(*results[i]));
  }
  if (out.runs.empty()) {
    throw NumericError("all " + std::to_string(restarts) + " restarts failed; first: " + errors.front());
  }
  for (const TrainReport& r : out.runs) out.best_invertible |= r.invertible();
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.runs.size(); ++i) {
    if (out.best_invertible && !out.runs[i].invertible()) continue;
    if (out.runs[i].final_loss() < best_loss) {
      best_loss = out.runs[i].final_loss();
      out.best = i;
    }
  }
  return out;
}

/// stage,x_lower,final_loss,iterations,function_evals,termination,then L1/L2/Linf per component
inline void write_stage_csv(std::ostream& os, const TrainReport& rep) {
  const std::size_t ncomp =
      rep.stages.empty() || !rep.stages.front().training_errors ? 0 : rep.stages.front().training_errors->norms.size();
  os << "stage,x_lower,final_loss,iterations,function_evals,termination";
  for (std::size_t j = 0; j < ncomp; ++j) os << ",L1_T" << j + 1 << ",L2_T" << j + 1 << ",Linf_T" << j + 1;
  os << '\n';
  std::ostringstream cell;
  cell.precision(17);
  auto put = [&](double v) {
    cell.str("");
    cell << v;
    return cell.str();
  };
  for (const StageReport& s : rep.stages) {
    os << s.index << ',' << put(s.box.lower.minCoeff()) << ',' << put(s.lm.final_loss) << ','
       << s.lm.iterations << ',' << s.lm.function_evals << ',' << to_string(s.lm.reason);
    if (s.training_errors) {
      for (const ErrorNorms& n : s.training_errors->norms) os << ',' << put(n.l1) << ',' << put(n.l2) << ',' << put(n.linf);
    }
    os << '\n';
  }
}

}  // namespace fblin
