#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fblin/continuation.hpp"
#include "fblin/series.hpp"

using namespace fblin;

namespace {

int binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return static_cast<int>(std::lround(r));
}

}  // namespace

TEST(Basis, CountsAndOrder) {
  for (int n = 1; n <= 3; ++n)
    for (int p = 1; p <= 6; ++p) EXPECT_EQ(static_cast<int>(monomial_basis(n, p).size()), binomial(n + p, p) - 1);
  const auto b = monomial_basis(2, 2);
  ASSERT_EQ(b.size(), 5u);
  EXPECT_EQ(b[0], (MultiIndex{1, 0}));
  EXPECT_EQ(b[1], (MultiIndex{0, 1}));
  EXPECT_EQ(b[2], (MultiIndex{2, 0}));
  EXPECT_EQ(b[3], (MultiIndex{1, 1}));
  EXPECT_EQ(b[4], (MultiIndex{0, 2}));
  EXPECT_EQ(SeriesCoefficients::zeros(2, 6).parameter_count(), 54);
  EXPECT_THROW(monomial_basis(2, 0), DimensionError);
}

TEST(Series, NoConstantTerm) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  SeriesCoefficients s = SeriesCoefficients::zeros(2, 6);
  for (int t = 0; t < 20; ++t) {
    for (Eigen::Index i = 0; i < s.coeffs.size(); ++i) s.coeffs.data()[i] = nd(rng);
    EXPECT_EQ(evaluate_series(s, Vector::Zero(2)).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Series, TaylorPolynomialOfLog) {
  // d^alpha ln(1 + x1 + x2) at 0 is (-1)^(k-1) (k-1)! with k = |alpha|.
  SeriesCoefficients s = SeriesCoefficients::zeros(2, 6);
  for (std::size_t b = 0; b < s.basis.size(); ++b) {
    const int k = s.basis[b][0] + s.basis[b][1];
    s.coeffs(0, static_cast<Eigen::Index>(b)) = (k % 2 ? 1.0 : -1.0) * factorial(k - 1);
  }
  s.coeffs(1, s.linear_index(1)) = 1.0;
  const Vector x{{-0.1, -0.1}};
  const Vector v = evaluate_series(s, x);
  // Truncation of ln(1+z), z = -0.2: remainder below |z|^7 / (7 (1-|z|)^7).
  const double bound = std::pow(0.2, 7) / (7.0 * std::pow(0.8, 7));
  const double err = std::abs(v(0) - std::log(0.8));
  EXPECT_LE(err, bound);
  EXPECT_GE(err, std::pow(0.2, 7) / 7.0);
  EXPECT_EQ(v(1), -0.1);
}

TEST(Series, MonomialGradientsMatchFiniteDifferences) {
  SeriesCoefficients s = SeriesCoefficients::zeros(2, 6);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 0.0);
  for (int t = 0; t < 20; ++t) {
    const Vector x{{u(rng), u(rng)}};
    const Matrix D = s.monomial_gradients(x);
    for (int k = 0; k < 2; ++k) {
      Vector xp = x, xm = x;
      xp(k) += 1e-6;
      xm(k) -= 1e-6;
      const Vector fd = (s.monomials(xp) - s.monomials(xm)) / 2e-6;
      EXPECT_LE((D.col(k) - fd).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Series, FlattenRoundTrip) {
  SeriesCoefficients s = SeriesCoefficients::zeros(2, 3);
  for (Eigen::Index i = 0; i < s.coeffs.size(); ++i) s.coeffs.data()[i] = static_cast<double>(i);
  const SeriesCoefficients r = s.with_flat(s.flatten());
  EXPECT_EQ(r.coeffs, s.coeffs);
  EXPECT_EQ(s.flatten()(s.coeffs.cols()), s.coeffs(1, 0));
  EXPECT_THROW(s.with_flat(Vector::Zero(3)), DimensionError);
}

TEST(SeriesFit, FirstOrderIsPinningBlock) {
  const SystemModel sys = benchmark_system();
  const DesignSpec spec = benchmark::design();
  const PinningTarget t = solve_pinning(equilibrium_data(sys), spec);
  const Grid g = make_grid(BoxDomain::corner(-0.495), 8, GridKind::equispaced);
  const SeriesFit fit = fit_series(sys, spec, g, t, 1);
  const Matrix expected{{1.0, 1.0}, {0.0, 1.0}};
  EXPECT_LE((fit.coeffs.first_order_block() - expected).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(fit.lm.params.size(), 0);
  EXPECT_LE((first_order_block(equilibrium_data(sys), spec) - expected).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SeriesFit, LinearScalarPlant) {
  // x+ = 0.8 x + u with A = 0.3, c = 1: T(x) = 0.5 x is exact.
  const SystemModel sys = SystemModel::analytic(
      1, [](const Vector& x, double u) { return Vector(Vector::Constant(1, 0.8 * x(0) + u)); },
      [](const Vector&, double) { return Matrix(Matrix::Constant(1, 1, 0.8)); },
      [](const Vector&, double) { return Vector(Vector::Ones(1)); });
  const DesignSpec spec{Matrix::Constant(1, 1, 0.3), RowVector::Ones(1)};
  const PinningTarget t = solve_pinning(equilibrium_data(sys), spec);
  EXPECT_NEAR(t.jac0(0, 0), 0.5, 1e-12);
  Grid g;
  for (int i = 0; i <= 10; ++i) g.push_back(Vector::Constant(1, -1.0 + 0.2 * i));
  const SeriesFit fit = fit_series(sys, spec, g, t, 4);
  EXPECT_NEAR(fit.coeffs.coeffs(0, 0), 0.5, 1e-10);
  EXPECT_LE(fit.coeffs.coeffs.rightCols(3).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE(fit.lm.final_loss, 1e-20);
}

TEST(SeriesFit, ReportedLossMatchesResidualEvaluation) {
  const SystemModel sys = benchmark_system();
  const DesignSpec spec = benchmark::design();
  const PinningTarget t = solve_pinning(equilibrium_data(sys), spec);
  const Grid g = make_grid(BoxDomain::corner(-0.495), 10, GridKind::equispaced);
  const SeriesFit fit = fit_series(sys, spec, g, t, 4);
  double ss = 0.0;
  for (const Vector& x : g)
    ss += nfe_residual(sys, spec, [&](const Vector& y) { return evaluate_series(fit.coeffs, y); }, x).squaredNorm();
  ss += (fit.coeffs.first_order_block() - t.jac0).squaredNorm();
  EXPECT_NEAR(ss, fit.lm.final_loss, 1e-12 + 1e-9 * fit.lm.final_loss);
  const double rms = std::sqrt(ss / static_cast<double>(2 * g.size()));
  EXPECT_LE(rms * rms, fit.lm.final_loss);
  EXPECT_LE(fit.lm.final_loss, fit.lm.initial_loss);
}

TEST(SeriesFit, CsvLayout) {
  SeriesCoefficients s = SeriesCoefficients::zeros(2, 2);
  s.coeffs(0, 3) = 0.25;
  std::ostringstream os;
  write_series_csv(os, s);
  const std::string out = os.str();
  EXPECT_EQ(out.substr(0, out.find('\n')), "output,multi_index,coefficient");
  EXPECT_NE(out.find("\n1,1 2,0.25\n"), std::string::npos) << out;
  EXPECT_NE(out.find("\n2,2 2,0\n"), std::string::npos) << out;
  EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 11);
}
