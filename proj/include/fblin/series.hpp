#pragma once

// Multivariate power-series baseline for the linearizing transformation:
//   T_l(x) = sum_alpha h_{l,alpha} x^alpha / alpha!,  1 <= |alpha| <= p,
// so h_{l,alpha} is the Taylor derivative d^alpha T_l(0). The linear block is
// pinned to the Sylvester solution; the rest is fitted by least squares on
// the residual of the functional equation.

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fblin/errors.hpp"
#include "fblin/levenberg_marquardt.hpp"
#include "fblin/linalg.hpp"
#include "fblin/residuals.hpp"
#include "fblin/system.hpp"

namespace fblin {

/// Exponent vector of a monomial.
using MultiIndex = std::vector<int>;

/// Monomials of total degree 1..order in n variables, graded, and within a
/// degree in lexicographic order of the sorted variable tuple (i1 <= ... <= ik).
inline std::vector<MultiIndex> monomial_basis(int n, int order) {
  if (n < 1 || order < 1) throw DimensionError("monomial_basis: n and order must be >= 1");
  std::vector<MultiIndex> basis;
  std::vector<int> tuple;
  auto recurse = [&](auto&& self, int degree, int start) -> void {
    if (static_cast<int>(tuple.size()) == degree) {
      MultiIndex alpha(static_cast<std::size_t>(n), 0);
      for (int v : tuple) ++alpha[static_cast<std::size_t>(v)];
      basis.push_back(std::move(alpha));
      return;
    }
    for (int v = start; v < n; ++v) {
      tuple.push_back(v);
      self(self, degree, v);
      tuple.pop_back();
    }
  };
  for (int d = 1; d <= order; ++d) recurse(recurse, d, 0);
  return basis;
}

inline double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

struct SeriesCoefficients {
  int n = 0;
  int order = 0;
  std::vector<MultiIndex> basis;
  Matrix coeffs;  // n x basis.size(), row l holds h_{l, .}

  static SeriesCoefficients zeros(int n, int order) {
    SeriesCoefficients s;
    s.n = n;
    s.order = order;
    s.basis = monomial_basis(n, order);
    s.coeffs = Matrix::Zero(n, static_cast<Eigen::Index>(s.basis.size()));
    return s;
  }

  Eigen::Index parameter_count() const { return coeffs.size(); }

  /// Column of the linear monomial x_k.
  Eigen::Index linear_index(int k) const {
    for (std::size_t b = 0; b < basis.size(); ++b) {
      int deg = 0;
      for (int e : basis[b]) deg += e;
      if (deg == 1 && basis[b][static_cast<std::size_t>(k)] == 1) return static_cast<Eigen::Index>(b);
    }
    throw DimensionError("series basis has no linear term");
  }

  Matrix first_order_block() const {
    Matrix M(n, n);
    for (int k = 0; k < n; ++k) M.col(k) = coeffs.col(linear_index(k));
    return M;
  }

  void set_first_order_block(const Matrix& M) {
    for (int k = 0; k < n; ++k) coeffs.col(linear_index(k)) = M.col(k);
  }

  /// Output-major flattening: h_{0,.}, h_{1,.}, ...
  Vector flatten() const {
    Vector p(coeffs.size());
    for (Eigen::Index l = 0; l < coeffs.rows(); ++l) p.segment(l * coeffs.cols(), coeffs.cols()) = coeffs.row(l).transpose();
    return p;
  }

  SeriesCoefficients with_flat(const Vector& p) const {
    if (p.size() != coeffs.size()) throw DimensionError("series: wrong number of coefficients");
    SeriesCoefficients s = *this;
    for (Eigen::Index l = 0; l < coeffs.rows(); ++l) s.coeffs.row(l) = p.segment(l * coeffs.cols(), coeffs.cols()).transpose();
    return s;
  }

  /// x^alpha / alpha! for every basis element.
  Vector monomials(const Vector& x) const {
    if (x.size() != n) throw DimensionError("series: input has wrong length");
    Vector m(static_cast<Eigen::Index>(basis.size()));
    for (std::size_t b = 0; b < basis.size(); ++b) {
      double v = 1.0;
      for (int k = 0; k < n; ++k) {
        const int e = basis[b][static_cast<std::size_t>(k)];
        if (e > 0) v *= std::pow(x(k), e) / factorial(e);
      }
      m(static_cast<Eigen::Index>(b)) = v;
    }
    return m;
  }

  /// d/dx_k of the scaled monomials; uses d/dx (x^e / e!) = x^(e-1) / (e-1)!.
  Matrix monomial_gradients(const Vector& x) const {
    Matrix D = Matrix::Zero(static_cast<Eigen::Index>(basis.size()), n);
    for (std::size_t b = 0; b < basis.size(); ++b) {
      for (int k = 0; k < n; ++k) {
        if (basis[b][static_cast<std::size_t>(k)] == 0) continue;
        double v = 1.0;
        for (int q = 0; q < n; ++q) {
          const int e = basis[b][static_cast<std::size_t>(q)] - (q == k ? 1 : 0);
          if (e > 0) v *= std::pow(x(q), e) / factorial(e);
        }
        D(static_cast<Eigen::Index>(b), k) = v;
      }
    }
    return D;
  }
};

inline Vector evaluate_series(const SeriesCoefficients& s, const Vector& x) {
  return s.coeffs * s.monomials(x);
}

inline PointDerivatives series_point(const SeriesCoefficients& s, const Vector& x, bool derivatives) {
  const Vector m = s.monomials(x);
  PointDerivatives d;
  d.value = s.coeffs * m;
  if (derivatives) {
    d.dx = s.coeffs * s.monomial_gradients(x);
    const Eigen::Index B = m.size();
    d.dp = Matrix::Zero(s.n, s.coeffs.size());
    for (Eigen::Index l = 0; l < s.n; ++l) d.dp.block(l, l * B, 1, B) = m.transpose();
  }
  return d;
}

/// dT/dx(0) from the Sylvester route; identical to the network's pinning target.
inline Matrix first_order_block(const EquilibriumData& eq, const DesignSpec& spec) {
  return solve_pinning(eq, spec).jac0;
}

struct SeriesFit {
  SeriesCoefficients coeffs;
  LmResult lm;  // over the coefficients of degree >= 2 only
};

/// Least-squares fit of an order-p series on the grid residuals of the
/// functional equation. T(0) = 0 holds by construction and the linear block is
/// held at jac0, so only coefficients of degree 2..p are free.
inline SeriesFit fit_series(const SystemModel& sys, const DesignSpec& spec, const Grid& grid,
                            const PinningTarget& target, int order, const LmSettings& settings = {},
                            const ResidualWeights& weights = {}) {
  const int n = static_cast<int>(sys.dimension());
  SeriesCoefficients init = SeriesCoefficients::zeros(n, order);
  if (target.jac0.rows() != n || target.jac0.cols() != n) throw DimensionError("fit_series: jac0 has the wrong shape");
  init.set_first_order_block(target.jac0);
  const Eigen::Index B = static_cast<Eigen::Index>(init.basis.size());
  std::vector<Eigen::Index> free_cols;  // flat indices into SeriesCoefficients::flatten()
  for (Eigen::Index l = 0; l < n; ++l)
    for (Eigen::Index b = n; b < B; ++b) free_cols.push_back(l * B + b);
  const Eigen::Index F = static_cast<Eigen::Index>(free_cols.size());
  const Vector base = init.flatten();
  auto expand = [&](const Vector& q) {
    Vector full = base;
    for (Eigen::Index i = 0; i < F; ++i) full(free_cols[static_cast<std::size_t>(i)]) = q(i);
    return init.with_flat(full);
  };
  const Eigen::Index rows = static_cast<Eigen::Index>(grid.size()) * n;
  const double s1 = std::sqrt(weights.grid);

  auto residual_fn = [&](const Vector& q) -> Vector {
    const SeriesCoefficients s = expand(q);
    Vector r(rows);
    try {
      const Matrix r1 = closed_loop_block(
          sys, spec, grid, [&](const Vector& x, bool d) { return series_point(s, x, d); }, nullptr, s.parameter_count());
      for (Eigen::Index i = 0; i < r1.rows(); ++i) r.segment(i * n, n) = s1 * r1.row(i).transpose();
    } catch (const DomainError&) {
      r.setConstant(std::numeric_limits<double>::quiet_NaN());
    }
    return r;
  };
  auto jacobian_fn = [&](const Vector& q) -> Matrix {
    const SeriesCoefficients s = expand(q);
    Matrix Jg;
    closed_loop_block(sys, spec, grid, [&](const Vector& x, bool d) { return series_point(s, x, d); }, &Jg,
                      s.parameter_count());
    Matrix J(rows, F);
    for (Eigen::Index i = 0; i < F; ++i) J.col(i) = s1 * Jg.col(free_cols[static_cast<std::size_t>(i)]);
    return J;
  };
  // Domain problems at the starting point are reported with their location.
  (void)closed_loop_block(sys, spec, grid, [&](const Vector& x, bool d) { return series_point(init, x, d); }, nullptr,
                          init.parameter_count());
  SeriesFit fit;
  if (F == 0) {
    fit.lm.params = Vector();
    fit.lm.initial_loss = fit.lm.final_loss = residual_fn(Vector()).squaredNorm();
    fit.lm.loss_history = {fit.lm.final_loss};
    fit.lm.reason = Termination::func_tol;
    fit.coeffs = init;
    return fit;
  }
  fit.lm = minimize(residual_fn, jacobian_fn, Vector::Zero(F), settings);
  fit.coeffs = expand(fit.lm.params);
  return fit;
}

/// output,multi_index,coefficient; multi-index as 1-based sorted variable tuple.
inline void write_series_csv(std::ostream& os, const SeriesCoefficients& s) {
  os << "output,multi_index,coefficient\n";
  std::ostringstream cell;
  cell.precision(17);
  for (int l = 0; l < s.n; ++l) {
    for (std::size_t b = 0; b < s.basis.size(); ++b) {
      std::string mi;
      for (int k = 0; k < s.n; ++k)
        for (int e = 0; e < s.basis[b][static_cast<std::size_t>(k)]; ++e) mi += (mi.empty() ? "" : " ") + std::to_string(k + 1);
      cell.str("");
      cell << s.coeffs(l, static_cast<Eigen::Index>(b));
      os << l + 1 << ',' << mi << ',' << cell.str() << '\n';
    }
  }
}

}  // namespace fblin
