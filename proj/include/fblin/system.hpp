#pragma once

// Discrete-time single-input plants x(t+1) = f(x(t), u(t)) with the origin as
// equilibrium, in analytic or black-box (finite-difference) flavor.

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>

#include "fblin/errors.hpp"
#include "fblin/linalg.hpp"

namespace fblin {

enum class SystemMode { analytic, black_box };

inline constexpr double kDefaultFdStep = 1e-4;

inline const char* to_string(SystemMode m) {
  return m == SystemMode::analytic ? "analytic" : "black-box";
}

struct EquilibriumData {
  Matrix J;  // df/dx(0,0)
  Vector G;  // df/du(0,0)
};

/// The target linear dynamics z(t+1) = A z(t) and feedback row c in u = -c z.
struct DesignSpec {
  Matrix A;
  RowVector c;
};

class SystemModel {
 public:
  using StepFn = std::function<Vector(const Vector&, double)>;
  using StateJacobianFn = std::function<Matrix(const Vector&, double)>;
  using InputDerivativeFn = std::function<Vector(const Vector&, double)>;

  static SystemModel analytic(Eigen::Index dimension, StepFn step, StateJacobianFn dfdx,
                              InputDerivativeFn dfdu, std::string name = "analytic") {
    if (!step || !dfdx || !dfdu) throw ConfigError("analytic system needs f, df/dx and df/du");
    SystemModel s;
    s.name_ = std::move(name);
    s.dimension_ = dimension;
    s.mode_ = SystemMode::analytic;
    s.step_ = std::move(step);
    s.dfdx_ = std::move(dfdx);
    s.dfdu_ = std::move(dfdu);
    return s;
  }

  static SystemModel black_box(Eigen::Index dimension, StepFn step, double fd_step = kDefaultFdStep,
                               std::string name = "black-box") {
    if (!step) throw ConfigError("black-box system needs f");
    if (!(fd_step > 0.0)) throw ConfigError("black-box system needs fd_step > 0");
    SystemModel s;
    s.name_ = std::move(name);
    s.dimension_ = dimension;
    s.mode_ = SystemMode::black_box;
    s.step_ = std::move(step);
    s.fd_step_ = fd_step;
    return s;
  }

  /// Same map, but every derivative estimated by central differences.
  SystemModel as_black_box(double fd_step = kDefaultFdStep) const {
    return black_box(dimension_, step_, fd_step, name_);
  }

  Eigen::Index dimension() const { return dimension_; }
  SystemMode mode() const { return mode_; }
  double fd_step() const { return fd_step_; }
  const std::string& name() const { return name_; }
  bool has_analytic_derivatives() const { return static_cast<bool>(dfdx_); }

  Vector step(const Vector& x, double u) const {
    if (x.size() != dimension_) {
      throw DimensionError("step: state has length " + std::to_string(x.size()) + ", expected " +
                           std::to_string(dimension_));
    }
    return step_(x, u);
  }

  /// df/du at (x, u): closed form in analytic mode, central differences otherwise.
  Vector input_derivative(const Vector& x, double u) const {
    if (mode_ == SystemMode::analytic) return dfdu_(x, u);
    return fd_input_derivative(x, u);
  }

  Vector fd_input_derivative(const Vector& x, double u) const {
    const double h = fd_step_ > 0.0 ? fd_step_ : kDefaultFdStep;
    return (step(x, u + h) - step(x, u - h)) / (2.0 * h);
  }

  Matrix state_jacobian(const Vector& x, double u) const {
    if (mode_ == SystemMode::analytic) return dfdx_(x, u);
    const double h = fd_step_;
    Matrix Jx(dimension_, dimension_);
    Vector xp = x, xm = x;
    for (Eigen::Index k = 0; k < dimension_; ++k) {
      xp(k) = x(k) + h;
      xm(k) = x(k) - h;
      Jx.col(k) = (step(xp, u) - step(xm, u)) / (2.0 * h);
      xp(k) = xm(k) = x(k);
    }
    return Jx;
  }

 private:
  SystemModel() = default;

  std::string name_;
  Eigen::Index dimension_ = 0;
  SystemMode mode_ = SystemMode::analytic;
  StepFn step_;
  StateJacobianFn dfdx_;
  InputDerivativeFn dfdu_;
  double fd_step_ = 0.0;
};

inline EquilibriumData equilibrium_data(const SystemModel& sys) {
  const Vector zero = Vector::Zero(sys.dimension());
  EquilibriumData eq{sys.state_jacobian(zero, 0.0), sys.input_derivative(zero, 0.0)};
  if (eq.G.cwiseAbs().maxCoeff() == 0.0) throw NumericError("equilibrium_data: G = df/du(0,0) is zero");
  return eq;
}

/// Moves the equilibrium (x0, u0) of sys to the origin: g(xh, uh) = f(xh + x0, uh + u0) - x0.
inline SystemModel shifted(const SystemModel& sys, const Vector& x0, double u0) {
  if (x0.size() != sys.dimension()) throw DimensionError("shifted: x0 has wrong length");
  auto base = std::make_shared<SystemModel>(sys);
  auto step = [base, x0, u0](const Vector& x, double u) -> Vector {
    return base->step(x + x0, u + u0) - x0;
  };
  if (sys.mode() == SystemMode::black_box) {
    return SystemModel::black_box(sys.dimension(), step, sys.fd_step(), sys.name() + "-shifted");
  }
  return SystemModel::analytic(
      sys.dimension(), step,
      [base, x0, u0](const Vector& x, double u) { return base->state_jacobian(x + x0, u + u0); },
      [base, x0, u0](const Vector& x, double u) { return base->input_derivative(x + x0, u + u0); },
      sys.name() + "-shifted");
}

namespace benchmark {

inline void check_domain(const Vector& x) {
  if (x.size() != 2) throw DimensionError("benchmark plant is two-dimensional");
  if (!(1.0 + x(0) + x(1) > 0.0)) {
    std::ostringstream os;
    os.precision(17);
    os << "benchmark plant evaluated at (" << x(0) << ", " << x(1)
       << ") on or beyond the singular manifold x1 + x2 = -1";
    throw DomainError(os.str());
  }
}

/// x1+ = exp(0.3 x2) sqrt(1 + x1 + x2) - 1 - 0.4 x2 + 0.5 u
/// x2+ = 0.5 ln(1 + x1 + x2) + 0.4 x2
inline Vector step(const Vector& x, double u) {
  check_domain(x);
  const double s = 1.0 + x(0) + x(1);
  Vector y(2);
  y(0) = std::exp(0.3 * x(1)) * std::sqrt(s) - 1.0 - 0.4 * x(1) + 0.5 * u;
  y(1) = 0.5 * std::log(s) + 0.4 * x(1);
  return y;
}

inline Matrix state_jacobian(const Vector& x, double /*u*/) {
  check_domain(x);
  const double s = 1.0 + x(0) + x(1);
  const double e = std::exp(0.3 * x(1));
  const double rs = std::sqrt(s);
  Matrix Jx(2, 2);
  Jx(0, 0) = e / (2.0 * rs);
  Jx(0, 1) = 0.3 * e * rs + e / (2.0 * rs) - 0.4;
  Jx(1, 0) = 0.5 / s;
  Jx(1, 1) = 0.5 / s + 0.4;
  return Jx;
}

inline Vector input_derivative(const Vector& x, double /*u*/) {
  check_domain(x);
  return Vector{{0.5, 0.0}};
}

inline Matrix design_A() { return Matrix{{0.5, 0.3}, {0.5, 0.4}}; }
inline RowVector design_c() { return RowVector{{1.0, 0.0}}; }
inline DesignSpec design() { return {design_A(), design_c()}; }

/// Closed-form linearizing transformation (ln(1 + x1 + x2), x2).
inline Vector analytic_solution(const Vector& x) {
  check_domain(x);
  return Vector{{std::log(1.0 + x(0) + x(1)), x(1)}};
}

inline Matrix analytic_solution_jacobian(const Vector& x) {
  check_domain(x);
  const double s = 1.0 + x(0) + x(1);
  return Matrix{{1.0 / s, 1.0 / s}, {0.0, 1.0}};
}

inline constexpr double kDomainLower = -0.495;

}  // namespace benchmark

inline SystemModel benchmark_system() {
  return SystemModel::analytic(2, benchmark::step, benchmark::state_jacobian,
                               benchmark::input_derivative, "benchmark");
}

}  // namespace fblin
