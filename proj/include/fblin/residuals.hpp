#pragma once

// Residuals of the functional equation T(f(x, -c T(x))) = A T(x) on a grid of
// collocation points, the pinning terms T(0) = 0 and dT/dx(0) = jac0, and
// their Jacobians with respect to the trainable parameters.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fblin/errors.hpp"
#include "fblin/linalg.hpp"
#include "fblin/network.hpp"
#include "fblin/system.hpp"

namespace fblin {

using Grid = std::vector<Vector>;

struct PinningTarget {
  Matrix jac0;  // dT/dx at the equilibrium
};

/// || jac0 J - A jac0 - jac0 G c jac0 ||_inf
inline double pinning_identity_residual(const Matrix& jac0, const EquilibriumData& eq,
                                        const DesignSpec& spec) {
  return (jac0 * eq.J - spec.A * jac0 - jac0 * eq.G * spec.c * jac0).cwiseAbs().maxCoeff();
}

/// Linear part of the transformation: W^{-1} where J W - W A = G c.
inline PinningTarget solve_pinning(const EquilibriumData& eq, const DesignSpec& spec) {
  const Eigen::Index n = eq.J.rows();
  if (spec.A.rows() != n || spec.A.cols() != n || spec.c.size() != n || eq.G.size() != n) {
    throw DimensionError("solve_pinning: J, G, A, c dimensions disagree");
  }
  const Matrix W = solve_sylvester(eq.J, spec.A, eq.G * spec.c);
  Eigen::FullPivLU<Matrix> lu(W);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible()) {
    throw InvertibilityError("solve_pinning: Sylvester solution W has rank " +
                             std::to_string(lu.rank()) + " < " + std::to_string(n));
  }
  PinningTarget t{lu.inverse()};
  const double scale = std::max({1.0, t.jac0.cwiseAbs().maxCoeff(), eq.J.cwiseAbs().maxCoeff()});
  const double res = pinning_identity_residual(t.jac0, eq, spec);
  if (!(res <= 1e-9 * scale * scale)) {
    std::ostringstream os;
    os << "solve_pinning: quadratic phase condition residual " << res << " exceeds tolerance";
    throw NumericError(os.str());
  }
  return t;
}

struct ResidualWeights {
  double grid = 1.0;
  double equilibrium = 1.0;
  double jacobian = 1.0;
};

struct ResidualVector {
  Matrix r1;  // M x n
  Vector r2;  // n
  Matrix r3;  // n x n
  ResidualWeights weights;

  Eigen::Index size() const { return r1.size() + r2.size() + r3.size(); }

  /// r1 point-major, then r2, then r3 row-major; each block scaled by sqrt(weight).
  Vector flat() const {
    Vector v(size());
    Eigen::Index k = 0;
    const double s1 = std::sqrt(weights.grid), s2 = std::sqrt(weights.equilibrium),
                 s3 = std::sqrt(weights.jacobian);
    for (Eigen::Index i = 0; i < r1.rows(); ++i)
      for (Eigen::Index j = 0; j < r1.cols(); ++j) v(k++) = s1 * r1(i, j);
    for (Eigen::Index j = 0; j < r2.size(); ++j) v(k++) = s2 * r2(j);
    for (Eigen::Index j = 0; j < r3.rows(); ++j)
      for (Eigen::Index l = 0; l < r3.cols(); ++l) v(k++) = s3 * r3(j, l);
    return v;
  }

  double loss() const {
    return weights.grid * r1.squaredNorm() + weights.equilibrium * r2.squaredNorm() +
           weights.jacobian * r3.squaredNorm();
  }
};

/// Value and derivatives of a parameterized transformation at one point.
struct PointDerivatives {
  Vector value;  // T(x)
  Matrix dx;     // dT/dx, n x n
  Matrix dp;     // dT/dP, n x |P|
};

namespace detail {

inline std::string describe_point(std::size_t i, const Vector& x) {
  std::ostringstream os;
  os.precision(10);
  os << "collocation point " << i << " (";
  for (Eigen::Index k = 0; k < x.size(); ++k) os << (k ? ", " : "") << x(k);
  os << ")";
  return os.str();
}

}  // namespace detail

/// r1 at a single point for an arbitrary transformation T: T(f(x, -c T(x))) - A T(x).
template <class Transform>
Vector nfe_residual(const SystemModel& sys, const DesignSpec& spec, Transform&& transform,
                    const Vector& x) {
  const Vector tx = transform(x);
  const double u = -(spec.c * tx)(0);
  const Vector y = sys.step(x, u);
  return transform(y) - spec.A * tx;
}

/// Grid block of the residual and, when jac != nullptr, its parameter
/// Jacobian (rows point-major, matching ResidualVector::flat()).
/// eval(x, want_derivatives) -> PointDerivatives.
template <class PointEval>
Matrix closed_loop_block(const SystemModel& sys, const DesignSpec& spec, const Grid& grid,
                         PointEval&& eval, Matrix* jac, Eigen::Index n_params) {
  const Eigen::Index n = sys.dimension();
  Matrix r1(static_cast<Eigen::Index>(grid.size()), n);
  if (jac) jac->resize(static_cast<Eigen::Index>(grid.size()) * n, n_params);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vector& x = grid[i];
    try {
      const PointDerivatives at_x = eval(x, jac != nullptr);
      const double u = -(spec.c * at_x.value)(0);
      const Vector y = sys.step(x, u);
      const PointDerivatives at_y = eval(y, jac != nullptr);
      const Eigen::Index row = static_cast<Eigen::Index>(i);
      r1.row(row) = (at_y.value - spec.A * at_x.value).transpose();
      if (jac) {
        const Vector fu = sys.input_derivative(x, u);
        // d/dP [T(y(P); P)] with y = f(x, -c T(x; P)), minus A dT(x)/dP.
        const RowVector du = -(spec.c * at_x.dp);
        jac->middleRows(row * n, n) = (at_y.dx * fu) * du + at_y.dp - spec.A * at_x.dp;
      }
    } catch (const DomainError& e) {
      throw DomainError(detail::describe_point(i, x) + ": " + e.what());
    }
  }
  return r1;
}

inline PointDerivatives network_point(const NetworkParams& p, const Vector& x, bool derivatives) {
  ForwardPass f = forward_pass(p, x);
  PointDerivatives d;
  if (derivatives) {
    d.dx = input_jacobian(p, f);
    d.dp = param_jacobian(p, x, f);
  }
  d.value = std::move(f.output);
  return d;
}

inline ResidualVector assemble_residuals(const SystemModel& sys, const DesignSpec& spec,
                                         const NetworkParams& params, const Grid& grid,
                                         const PinningTarget& target,
                                         const ResidualWeights& weights = {}) {
  if (params.arch.n != sys.dimension()) throw DimensionError("network and system dimensions differ");
  ResidualVector rv;
  rv.weights = weights;
  rv.r1 = closed_loop_block(
      sys, spec, grid,
      [&](const Vector& x, bool d) { return network_point(params, x, d); }, nullptr, params.size());
  const Vector zero = Vector::Zero(sys.dimension());
  const ForwardPass f0 = forward_pass(params, zero);
  rv.r2 = f0.output;
  rv.r3 = input_jacobian(params, f0) - target.jac0;
  return rv;
}

/// Rows ordered as ResidualVector::flat(), columns in the flat parameter order.
inline Matrix residual_jacobian(const SystemModel& sys, const DesignSpec& spec,
                                const NetworkParams& params, const Grid& grid,
                                const PinningTarget& target, const ResidualWeights& weights = {}) {
  (void)target;  // the pinning targets are constants
  if (params.arch.n != sys.dimension()) throw DimensionError("network and system dimensions differ");
  const Eigen::Index n = sys.dimension();
  const Eigen::Index P = params.size();
  const Eigen::Index m1 = static_cast<Eigen::Index>(grid.size()) * n;
  Matrix Jg;
  closed_loop_block(
      sys, spec, grid, [&](const Vector& x, bool d) { return network_point(params, x, d); }, &Jg, P);

  Matrix J(m1 + n + n * n, P);
  J.topRows(m1) = std::sqrt(weights.grid) * Jg;
  const Vector zero = Vector::Zero(n);
  const ForwardPass f0 = forward_pass(params, zero);
  J.middleRows(m1, n) = std::sqrt(weights.equilibrium) * param_jacobian(params, zero, f0);
  std::vector<Matrix> mixed;
  for (Eigen::Index k = 0; k < n; ++k) mixed.push_back(mixed_jacobian(params, zero, f0, k));
  const double s3 = std::sqrt(weights.jacobian);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < n; ++k) J.row(m1 + n + j * n + k) = s3 * mixed[k].row(j);
  return J;
}

/// Decimal text dump: one row per line, space separated.
inline void write_matrix(std::ostream& os, const Matrix& m) {
  std::ostringstream cell;
  cell.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      cell.str("");
      cell << m(i, j);
      os << (j ? " " : "") << cell.str();
    }
    os << '\n';
  }
}

}  // namespace fblin
