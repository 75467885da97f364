#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "fblin/levenberg_marquardt.hpp"

using namespace fblin;

namespace {

struct Linear {
  Matrix M;
  Vector b;
  Vector operator()(const Vector& p) const { return M * p - b; }
};

Vector rosenbrock(const Vector& p) { return Vector{{1.0 - p(0), 10.0 * (p(1) - p(0) * p(0))}}; }
Matrix rosenbrock_jac(const Vector& p) { return Matrix{{-1.0, 0.0}, {-20.0 * p(0), 10.0}}; }

LmSettings variant(bool diag) {
  LmSettings s;
  s.diagonal_scaling = diag;
  return s;
}

}  // namespace

class LmVariants : public ::testing::TestWithParam<bool> {};

TEST_P(LmVariants, LinearLeastSquaresOracle) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 20; ++t) {
    Linear lin{Matrix(30, 6), Vector(30)};
    for (Eigen::Index i = 0; i < lin.M.size(); ++i) lin.M.data()[i] = nd(rng);
    for (Eigen::Index i = 0; i < lin.b.size(); ++i) lin.b(i) = nd(rng);
    const Vector oracle = lin.M.colPivHouseholderQr().solve(lin.b);
    const LmResult r = minimize(lin, [&](const Vector&) { return lin.M; }, Vector::Zero(6), variant(GetParam()));
    // Identity damping stops on func_tol one contraction earlier.
    EXPECT_LE((r.params - oracle).cwiseAbs().maxCoeff(), GetParam() ? 1e-10 : 1e-8);
    EXPECT_NEAR(r.final_loss, lin(oracle).squaredNorm(), 1e-10);
  }
}

TEST_P(LmVariants, ConsistentLinearSystemInFewSteps) {
  // Orthonormal columns: each accepted step contracts the error by mu d / (1 + mu d)
  // with d <= 1 and mu = 1e-3, 1e-4, 1e-5, so three steps reach 1e-20.
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  Linear lin{Matrix(8, 4), Vector(8)};
  for (Eigen::Index i = 0; i < lin.M.size(); ++i) lin.M.data()[i] = nd(rng);
  lin.M = Matrix(lin.M.householderQr().householderQ() * Matrix::Identity(8, 4));
  const Vector truth{{1.0, -2.0, 0.5, 3.0}};
  lin.b = lin.M * truth;
  const LmResult r = minimize(lin, [&](const Vector&) { return lin.M; }, Vector::Zero(4), variant(GetParam()));
  ASSERT_GE(r.loss_history.size(), 4u);
  EXPECT_LE(r.loss_history[3], 1e-20);
  EXPECT_LE(r.final_loss, 1e-20);
  EXPECT_LE((r.params - truth).cwiseAbs().maxCoeff(), 1e-10);
}

TEST_P(LmVariants, ConsistentLinearSystemGeneric) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  Linear lin{Matrix(8, 4), Vector(8)};
  for (Eigen::Index i = 0; i < lin.M.size(); ++i) lin.M.data()[i] = nd(rng);
  const Vector truth{{1.0, -2.0, 0.5, 3.0}};
  lin.b = lin.M * truth;
  const LmResult r = minimize(lin, [&](const Vector&) { return lin.M; }, Vector::Zero(4), variant(GetParam()));
  EXPECT_LE(r.final_loss, 1e-20);
  EXPECT_LE((r.params - truth).cwiseAbs().maxCoeff(), 1e-10);
}

TEST_P(LmVariants, ScalarIdentity) {
  const LmResult r = minimize([](const Vector& p) { return p; }, [](const Vector&) { return Matrix(Matrix::Identity(1, 1)); },
                              Vector::Constant(1, 5.0), variant(GetParam()));
  EXPECT_LE(std::abs(r.params(0)), 1e-10);
  EXPECT_LE(r.final_loss, 1e-20);
}

TEST_P(LmVariants, Rosenbrock) {
  const LmResult r = minimize(rosenbrock, rosenbrock_jac, Vector{{-1.2, 1.0}}, variant(GetParam()));
  EXPECT_LE(std::abs(r.params(0) - 1.0), 1e-8);
  EXPECT_LE(std::abs(r.params(1) - 1.0), 1e-8);
}

TEST_P(LmVariants, AcceptedLossesNeverIncrease) {
  const LmResult r = minimize(rosenbrock, rosenbrock_jac, Vector{{-1.2, 1.0}}, variant(GetParam()));
  ASSERT_GE(r.loss_history.size(), 2u);
  EXPECT_EQ(r.loss_history.front(), r.initial_loss);
  EXPECT_EQ(r.loss_history.back(), r.final_loss);
  for (std::size_t i = 1; i < r.loss_history.size(); ++i) EXPECT_LE(r.loss_history[i], r.loss_history[i - 1]);
}

TEST_P(LmVariants, Deterministic) {
  const LmResult a = minimize(rosenbrock, rosenbrock_jac, Vector{{-1.2, 1.0}}, variant(GetParam()));
  const LmResult b = minimize(rosenbrock, rosenbrock_jac, Vector{{-1.2, 1.0}}, variant(GetParam()));
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.iterations, b.iterations);
}

INSTANTIATE_TEST_SUITE_P(Damping, LmVariants, ::testing::Values(true, false),
                         [](const auto& info) { return info.param ? "Marquardt" : "Levenberg"; });

TEST(Lm, VanishingDampingIsGaussNewton) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  Linear lin{Matrix(10, 3), Vector(10)};
  for (Eigen::Index i = 0; i < lin.M.size(); ++i) lin.M.data()[i] = nd(rng);
  for (Eigen::Index i = 0; i < lin.b.size(); ++i) lin.b(i) = nd(rng);
  const Vector p0{{0.3, -0.1, 2.0}};
  const Vector gn = p0 - (lin.M.transpose() * lin.M).ldlt().solve(lin.M.transpose() * lin(p0));
  LmSettings s;
  s.initial_damping = 1e-14;
  s.max_iterations = 1;
  const LmResult r = minimize(lin, [&](const Vector&) { return lin.M; }, p0, s);
  EXPECT_LE((r.params - gn).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Lm, NonFiniteInitialResidualIsAnError) {
  auto bad = [](const Vector& p) { return Vector(Vector::Constant(1, std::log(p(0)))); };
  EXPECT_THROW(minimize(bad, [](const Vector&) { return Matrix(Matrix::Ones(1, 1)); }, Vector::Constant(1, -1.0)),
               NumericError);
  EXPECT_THROW(minimize([](const Vector& p) { return p; }, [](const Vector&) { return Matrix(Matrix::Identity(1, 1)); },
                        Vector::Constant(1, std::nan(""))),
               NumericError);
}

TEST(Lm, NonFiniteTrialIsRejected) {
  // r(p) = 10 sqrt(p) - 1 is undefined for p < 0; the first full step from
  // p = 1 overshoots into that region with tiny damping.
  auto r = [](const Vector& p) {
    return Vector(Vector::Constant(1, p(0) >= 0 ? std::sqrt(p(0)) * 10.0 - 1.0 : std::numeric_limits<double>::quiet_NaN()));
  };
  auto j = [](const Vector& p) { return Matrix(Matrix::Constant(1, 1, 5.0 / std::sqrt(std::max(p(0), 1e-300)))); };
  LmSettings s;
  s.initial_damping = 1e-12;
  std::vector<LmIteration> its;
  const LmResult res = minimize(r, j, Vector::Constant(1, 1.0), s, [&](const LmIteration& it) { its.push_back(it); });
  EXPECT_NEAR(res.params(0), 0.01, 1e-10);
  bool rejected = false;
  for (const auto& it : its) rejected |= !it.accepted;
  EXPECT_TRUE(rejected);
}

TEST(Lm, TerminationReasons) {
  const Vector start{{-1.2, 1.0}};
  LmSettings s;
  s.max_iterations = 3;
  EXPECT_EQ(minimize(rosenbrock, rosenbrock_jac, start, s).reason, Termination::max_iter);
  s = LmSettings{};
  s.max_function_evals = 4;
  const LmResult e = minimize(rosenbrock, rosenbrock_jac, start, s);
  EXPECT_EQ(e.reason, Termination::max_evals);
  EXPECT_LE(e.function_evals, 4);
  s = LmSettings{};
  s.func_tol = 1e-2;
  EXPECT_EQ(minimize(rosenbrock, rosenbrock_jac, start, s).reason, Termination::func_tol);
  // A wrong-signed Jacobian makes every step uphill.
  s = LmSettings{};
  s.max_damping = 1e6;
  const LmResult st = minimize(rosenbrock, [](const Vector& p) { return Matrix(-rosenbrock_jac(p)); }, start, s);
  EXPECT_EQ(st.reason, Termination::stalled);
  EXPECT_EQ(st.final_loss, st.initial_loss);
}

TEST(Lm, DimensionMismatch) {
  EXPECT_THROW(minimize([](const Vector& p) { return p; }, [](const Vector&) { return Matrix(Matrix::Identity(2, 2)); },
                        Vector::Ones(3)),
               DimensionError);
}

TEST(Lm, SettingsValidation) {
  LmSettings s;
  s.func_tol = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = LmSettings{};
  s.damping_up = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = LmSettings{};
  s.damping_down = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = LmSettings{};
  s.max_iterations = 0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Lm, CsvLog) {
  std::ostringstream os;
  const LmCallback cb = csv_iteration_log(os, ';');
  LmSettings s;
  s.max_iterations = 2;
  minimize(rosenbrock, rosenbrock_jac, Vector{{-1.2, 1.0}}, s, cb);
  const std::string out = os.str();
  EXPECT_EQ(out.substr(0, out.find('\n')), "iteration;loss;damping;step_norm;accepted");
  EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 3);
}
