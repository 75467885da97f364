#pragma once

// Accuracy of a learned transformation against a reference solution, and
// closed-loop simulation under u = -c T(x).

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fblin/errors.hpp"
#include "fblin/linalg.hpp"
#include "fblin/residuals.hpp"
#include "fblin/system.hpp"

namespace fblin {

using TransformFn = std::function<Vector(const Vector&)>;

/// Closed-form benchmark transformation (ln(1 + x1 + x2), x2).
inline Vector analytic_solution(const Vector& x) { return benchmark::analytic_solution(x); }

struct ErrorNorms {
  double l1 = 0.0;    // sum |e|
  double l2 = 0.0;    // sqrt(sum e^2)
  double linf = 0.0;  // max |e|
};

inline ErrorNorms error_norms(const Vector& e) {
  ErrorNorms n;
  if (e.size() == 0) return n;
  n.l1 = e.cwiseAbs().sum();
  n.l2 = e.norm();
  n.linf = e.cwiseAbs().maxCoeff();
  return n;
}

struct GridDescriptor {
  std::string kind;  // "equispaced", "chebyshev", "custom"
  Eigen::Index points_per_axis = 0;
  Vector lower, upper;
};

struct EvaluationReport {
  GridDescriptor grid_info;
  Grid points;
  Matrix errors;  // M x n, e_j(x_i) = T_hat_j(x_i) - T_j(x_i)
  std::vector<ErrorNorms> norms;  // per component
};

inline EvaluationReport evaluate(const TransformFn& transform, const Grid& grid,
                                 const TransformFn& reference = analytic_solution,
                                 GridDescriptor info = {"custom", 0, {}, {}}) {
  EvaluationReport rep;
  rep.grid_info = std::move(info);
  rep.points = grid;
  if (grid.empty()) return rep;
  const Eigen::Index m = static_cast<Eigen::Index>(grid.size());
  Eigen::Index n = -1;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Vector& x = grid[static_cast<std::size_t>(i)];
    Vector e;
    try {
      e = transform(x) - reference(x);
    } catch (const DomainError& err) {
      throw DomainError(detail::describe_point(static_cast<std::size_t>(i), x) + ": " + err.what());
    }
    if (n < 0) {
      n = e.size();
      rep.errors.resize(m, n);
    }
    if (e.size() != n) throw DimensionError("evaluate: transform output length changed");
    rep.errors.row(i) = e.transpose();
  }
  for (Eigen::Index j = 0; j < n; ++j) rep.norms.push_back(error_norms(rep.errors.col(j)));
  return rep;
}

/// x1,...,xn,e1,...,en
inline void write_error_field_csv(std::ostream& os, const EvaluationReport& rep) {
  const Eigen::Index n = rep.errors.cols();
  const Eigen::Index d = rep.points.empty() ? 0 : rep.points.front().size();
  for (Eigen::Index k = 0; k < d; ++k) os << (k ? "," : "") << "x" << k + 1;
  for (Eigen::Index j = 0; j < n; ++j) os << ",e" << j + 1;
  os << '\n';
  std::ostringstream cell;
  cell.precision(17);
  auto put = [&](double v) {
    cell.str("");
    cell << v;
    return cell.str();
  };
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) os << (k ? "," : "") << put(rep.points[i](k));
    for (Eigen::Index j = 0; j < n; ++j) os << ',' << put(rep.errors(static_cast<Eigen::Index>(i), j));
    os << '\n';
  }
}

/// Rows L1, L2, Linf; one column per component, scientific notation.
inline void write_norm_table_csv(std::ostream& os, const EvaluationReport& rep,
                                 const std::string& label) {
  os << "label,norm";
  for (std::size_t j = 0; j < rep.norms.size(); ++j) os << ",T" << j + 1;
  os << '\n';
  const char* names[] = {"L1", "L2", "Linf"};
  for (int r = 0; r < 3; ++r) {
    os << label << ',' << names[r];
    for (const ErrorNorms& n : rep.norms) {
      const double v = r == 0 ? n.l1 : (r == 1 ? n.l2 : n.linf);
      std::ostringstream cell;
      cell << std::scientific << std::setprecision(2) << std::uppercase << v;
      os << ',' << cell.str();
    }
    os << '\n';
  }
}

struct ClosedLoopTrace {
  std::vector<Vector> states;       // x(0..T')
  std::vector<double> inputs;       // u(t) = -c T(x(t)), one per step taken
  std::vector<Vector> transformed;  // z(t) = T(x(t)), aligned with states
  long horizon = 0;
  bool exited_domain = false;
  std::string exit_reason;

  /// max_t || z(t+1) - A z(t) ||_inf over consecutive recorded states.
  double max_linearity_residual(const Matrix& A) const {
    double r = 0.0;
    for (std::size_t t = 0; t + 1 < transformed.size(); ++t) {
      r = std::max(r, (transformed[t + 1] - A * transformed[t]).cwiseAbs().maxCoeff());
    }
    return r;
  }

  const Vector& final_state() const { return states.back(); }
};

inline ClosedLoopTrace simulate_closed_loop(const SystemModel& sys, const DesignSpec& spec,
                                            const TransformFn& transform, const Vector& x0,
                                            long horizon) {
  ClosedLoopTrace tr;
  tr.horizon = horizon;
  Vector x = x0;
  Vector z;
  try {
    z = transform(x);
  } catch (const DomainError& e) {
    tr.exited_domain = true;
    tr.exit_reason = std::string("t=0: ") + e.what();
    return tr;
  }
  tr.states.push_back(x);
  tr.transformed.push_back(z);
  for (long t = 0; t < horizon; ++t) {
    const double u = 0.0 - (spec.c * z)(0);  // +0 rather than -0 at the origin
    try {
      Vector next = sys.step(x, u);
      if (!next.allFinite()) throw DomainError("state became non-finite");
      Vector znext = transform(next);
      tr.inputs.push_back(u);
      x = std::move(next);
      z = std::move(znext);
    } catch (const DomainError& e) {
      tr.exited_domain = true;
      tr.exit_reason = "t=" + std::to_string(t + 1) + ": " + e.what();
      break;
    }
    tr.states.push_back(x);
    tr.transformed.push_back(z);
  }
  return tr;
}

/// t,x1..xn,u,z1..zn; u is empty on the last row.
inline void write_trace_csv(std::ostream& os, const ClosedLoopTrace& tr) {
  const Eigen::Index n = tr.states.empty() ? 0 : tr.states.front().size();
  os << "t";
  for (Eigen::Index k = 0; k < n; ++k) os << ",x" << k + 1;
  os << ",u";
  for (Eigen::Index k = 0; k < n; ++k) os << ",z" << k + 1;
  os << '\n';
  std::ostringstream cell;
  cell.precision(17);
  auto put = [&](double v) {
    cell.str("");
    cell << v;
    return cell.str();
  };
  for (std::size_t t = 0; t < tr.states.size(); ++t) {
    os << t;
    for (Eigen::Index k = 0; k < n; ++k) os << ',' << put(tr.states[t](k));
    os << ',';
    if (t < tr.inputs.size()) os << put(tr.inputs[t]);
    for (Eigen::Index k = 0; k < n; ++k) os << ',' << put(tr.transformed[t](k));
    os << '\n';
  }
}

}  // namespace fblin
