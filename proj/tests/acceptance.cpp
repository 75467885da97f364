// End-to-end acceptance run on the benchmark plant. Prints one PASS/FAIL line
// per criterion and exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "fblin/continuation.hpp"
#include "fblin/evaluation.hpp"
#include "fblin/levenberg_marquardt.hpp"
#include "fblin/linalg.hpp"
#include "fblin/network.hpp"
#include "fblin/residuals.hpp"
#include "fblin/series.hpp"
#include "fblin/system.hpp"

using namespace fblin;

namespace {

constexpr double kDomain = -0.495;
constexpr int kRestarts = 5;
constexpr std::uint64_t kBaseSeed = 0;

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::cout << "criterion " << id << ' ' << (ok ? "PASS" : "FAIL") << ": " << detail << std::endl;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

Grid training_grid() { return make_grid(BoxDomain::corner(kDomain), 20, GridKind::equispaced); }
Grid test_grid() { return make_grid(BoxDomain::corner(kDomain), 50, GridKind::chebyshev); }

struct TrainedArm {
  RestartSummary runs;
  EvaluationReport train;
  EvaluationReport test;
  double seconds = 0.0;

  const NetworkParams& params() const { return runs.best_run().final_params; }
};

TrainedArm train_arm(const SystemModel& sys, const ContinuationSchedule& schedule) {
  const auto t0 = std::chrono::steady_clock::now();
  const DesignSpec spec = benchmark::design();
  const PinningTarget target = solve_pinning(equilibrium_data(sys), spec);
  TrainedArm arm{train_best_of(sys, spec, schedule, Architecture{}, target, kBaseSeed, kRestarts, {},
                               std::thread::hardware_concurrency() > 1),
                 {},
                 {},
                 0.0};
  const NetworkParams p = arm.params();
  const TransformFn net = [p](const Vector& x) { return forward(p, x); };
  arm.train = evaluate(net, training_grid());
  arm.test = evaluate(net, test_grid());
  arm.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "  [" << arm.runs.runs.size() << " restarts, best seed " << arm.runs.best_run().seed << ", loss "
            << sci(arm.runs.best_run().final_loss()) << ", " << std::lround(arm.seconds) << " s]" << std::endl;
  for (const TrainReport& r : arm.runs.runs)
    std::cout << "  [seed " << r.seed << ": loss " << sci(r.final_loss()) << ", min det " << sci(r.min_jacobian_det) << "]"
              << std::endl;
  for (const std::string& f : arm.runs.failures) std::cout << "  [restart failed: " << f << "]" << std::endl;
  return arm;
}

double rel_err(double a, double ref) { return std::abs(a - ref) / std::max(std::abs(ref), 1e-3); }

void criterion_pinning() {
  const EquilibriumData eq = equilibrium_data(benchmark_system());
  const PinningTarget t = solve_pinning(eq, benchmark::design());
  const double entry = (t.jac0 - Matrix{{1.0, 1.0}, {0.0, 1.0}}).cwiseAbs().maxCoeff();
  const double identity = pinning_identity_residual(t.jac0, eq, benchmark::design());
  report(1, entry <= 1e-9 && identity <= 1e-9, "entrywise error " + sci(entry) + ", quadratic identity " + sci(identity));
}

void criterion_spectra() {
  auto rounded = [](const Matrix& m) {
    std::vector<double> v;
    for (const Complex& z : eigenvalues(m)) v.push_back(std::round(z.real() * 1e4) / 1e4 + std::round(z.imag() * 1e4) * 1e6);
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto j = rounded(equilibrium_data(benchmark_system()).J);
  const auto a = rounded(benchmark::design_A());
  const bool ok = j == std::vector<double>{0.2101, 1.1899} && a == std::vector<double>{0.0595, 0.8405};
  std::ostringstream os;
  os << "J {" << j[0] << ", " << j[1] << "}, A {" << a[0] << ", " << a[1] << "}";
  report(2, ok, os.str());
}

void criterion_gradients() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ux(-0.495, 0.0);
  const int draws = 100;
  const double h = 1e-6;
  double w_in = 0.0, w_par = 0.0, w_mix = 0.0;
  for (int d = 0; d < draws; ++d) {
    const NetworkParams p = NetworkParams::random_uniform(Architecture{}, 1000 + static_cast<std::uint64_t>(d));
    const Vector x{{ux(rng), ux(rng)}};
    const Vector flat = p.flatten();
    const Matrix Jx = input_jacobian(p, x);
    for (Eigen::Index k = 0; k < 2; ++k) {
      Vector xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      const Vector fd = (forward(p, xp) - forward(p, xm)) / (2 * h);
      for (Eigen::Index i = 0; i < 2; ++i) w_in = std::max(w_in, rel_err(Jx(i, k), fd(i)));
    }
    for (Eigen::Index q = 0; q < flat.size(); ++q) {
      Vector pp = flat, pm = flat;
      pp(q) += h;
      pm(q) -= h;
      const NetworkParams Pp = NetworkParams::unflatten(p.arch, pp), Pm = NetworkParams::unflatten(p.arch, pm);
      const Vector gfd = (forward(Pp, x) - forward(Pm, x)) / (2 * h);
      const Matrix mfd = (input_jacobian(Pp, x) - input_jacobian(Pm, x)) / (2 * h);
      for (Eigen::Index j = 0; j < 2; ++j) {
        w_par = std::max(w_par, rel_err(param_gradient(p, x, j)(q), gfd(j)));
        for (Eigen::Index k = 0; k < 2; ++k) w_mix = std::max(w_mix, rel_err(mixed_derivative(p, x, j, k)(q), mfd(j, k)));
      }
    }
  }
  report(3, w_in <= 1e-5 && w_par <= 1e-5 && w_mix <= 1e-5,
         std::to_string(draws) + " draws; max relative error input " + sci(w_in) + ", parameter " + sci(w_par) +
             ", mixed " + sci(w_mix));
}

void criterion_annihilation() {
  const SystemModel sys = benchmark_system();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ux(kDomain, 0.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vector x{{ux(rng), ux(rng)}};
    worst = std::max(worst, nfe_residual(sys, benchmark::design(), analytic_solution, x).cwiseAbs().maxCoeff());
  }
  report(4, worst <= 1e-12, "max |r| over 1000 points " + sci(worst));
}

void criterion_greedy(const TrainedArm& g) {
  const ErrorNorms tr = g.train.norms[0], te = g.test.norms[0];
  report(5, tr.linf <= 1e-2 && tr.l2 <= 1e-2 && te.linf <= 2e-2,
         "training T1 Linf " + sci(tr.linf) + " L2 " + sci(tr.l2) + ", test T1 Linf " + sci(te.linf));
}

void criterion_separation(const TrainedArm& greedy, const TrainedArm& whole) {
  const double g = greedy.test.norms[0].l2, w = whole.test.norms[0].l2;
  report(6, 10.0 * g <= w, "test T1 L2 greedy " + sci(g) + ", whole domain " + sci(w) + ", ratio " + sci(w / g));
}

void criterion_series() {
  const SystemModel sys = benchmark_system();
  const DesignSpec spec = benchmark::design();
  const PinningTarget t = solve_pinning(equilibrium_data(sys), spec);
  const SeriesFit fit = fit_series(sys, spec, training_grid(), t, 6);
  const EvaluationReport rep =
      evaluate([&](const Vector& x) { return evaluate_series(fit.coeffs, x); }, test_grid());
  const ErrorNorms t2 = rep.norms[1];
  const bool ok = t2.l1 <= 1e-8 && t2.l2 <= 1e-8 && t2.linf <= 1e-8 && rep.norms[0].linf >= 1e-1;
  report(7, ok, "T2 L1 " + sci(t2.l1) + " L2 " + sci(t2.l2) + " Linf " + sci(t2.linf) + ", T1 Linf " +
                    sci(rep.norms[0].linf));
}

void criterion_black_box(const TrainedArm& analytic, const TrainedArm& bb) {
  const double a = analytic.train.norms[0].linf, b = bb.train.norms[0].linf;
  const double ratio = std::max(a, b) / std::min(a, b);
  report(8, ratio <= 3.0, "training T1 Linf analytic " + sci(a) + ", black-box " + sci(b) + ", ratio " + sci(ratio));
}

void criterion_closed_loop(const TrainedArm& g) {
  const SystemModel sys = benchmark_system();
  const DesignSpec spec = benchmark::design();
  const Vector x0{{-0.4, -0.4}};
  const NetworkParams p = g.params();
  const ClosedLoopTrace net = simulate_closed_loop(sys, spec, [p](const Vector& x) { return forward(p, x); }, x0, 50);
  const ClosedLoopTrace exact = simulate_closed_loop(sys, spec, analytic_solution, x0, 50);
  const double xf = net.exited_domain ? INFINITY : net.final_state().cwiseAbs().maxCoeff();
  const double lin = net.max_linearity_residual(spec.A);
  const double lin_exact = exact.exited_domain ? INFINITY : exact.max_linearity_residual(spec.A);
  const bool ok = !net.exited_domain && xf <= 1e-3 && lin <= 5e-2 && lin_exact <= 1e-10;
  report(9, ok, "||x(50)||inf " + sci(xf) + ", linearity residual " + sci(lin) + ", exact transform " + sci(lin_exact) +
                    (net.exited_domain ? ", left domain: " + net.exit_reason : ""));
}

void criterion_optimizer() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  const Matrix M = Matrix::NullaryExpr(40, 6, [&] { return nd(rng); });
  const Vector b = Vector::NullaryExpr(40, [&] { return nd(rng); });
  const Vector oracle = (M.transpose() * M).ldlt().solve(M.transpose() * b);
  const LmResult lin = minimize([&](const Vector& p) { return Vector(M * p - b); }, [&](const Vector&) { return M; },
                                Vector::Zero(6));
  const double lin_err = (lin.params - oracle).cwiseAbs().maxCoeff();
  const LmResult ros = minimize([](const Vector& p) { return Vector{{1.0 - p(0), 10.0 * (p(1) - p(0) * p(0))}}; },
                                [](const Vector& p) { return Matrix{{-1.0, 0.0}, {-20.0 * p(0), 10.0}}; },
                                Vector{{-1.2, 1.0}});
  const double ros_err = (ros.params - Vector::Ones(2)).cwiseAbs().maxCoeff();
  report(10, lin_err <= 1e-10 && ros_err <= 1e-8,
         "least squares " + sci(lin_err) + ", Rosenbrock " + sci(ros_err));
}

}  // namespace

int main() {
  criterion_pinning();
  criterion_spectra();
  criterion_gradients();
  criterion_annihilation();
  criterion_optimizer();
  criterion_series();

  const LmSettings lm = network_training_settings();
  const SystemModel analytic = benchmark_system();
  std::cout << "training greedy (analytic)" << std::endl;
  const TrainedArm greedy = train_arm(analytic, default_benchmark_schedule(lm));
  criterion_greedy(greedy);
  criterion_closed_loop(greedy);

  std::cout << "training whole domain (analytic)" << std::endl;
  const TrainedArm whole = train_arm(analytic, single_stage_schedule(kDomain, lm));
  criterion_separation(greedy, whole);

  std::cout << "training greedy (black-box)" << std::endl;
  const TrainedArm bb = train_arm(analytic.as_black_box(1e-4), default_benchmark_schedule(lm));
  criterion_black_box(greedy, bb);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
