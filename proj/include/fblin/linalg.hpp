#pragma once

// Small dense linear algebra: spectra, numerical rank, Sylvester solves and
// the existence checks for a linearizing transformation.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fblin/errors.hpp"

namespace fblin {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Complex = std::complex<double>;

inline constexpr double kRankTolerance = 1e-8;
inline constexpr double kSpectrumTolerance = 1e-8;
inline constexpr std::size_t kMaxSmallDimension = 8;

inline std::string format_complex(Complex z) {
  std::ostringstream os;
  os.precision(10);
  os << z.real();
  if (z.imag() != 0.0) os << (z.imag() < 0 ? " - " : " + ") << std::abs(z.imag()) << "i";
  return os.str();
}

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << what << ": expected a square matrix, got " << m.rows() << "x" << m.cols();
    throw DimensionError(os.str());
  }
}

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + ": matrix has non-finite entries");
}

/// All eigenvalues of a small real square matrix, in no particular order.
inline std::vector<Complex> eigenvalues(const Matrix& m) {
  require_square(m, "eigenvalues");
  require_finite(m, "eigenvalues");
  if (static_cast<std::size_t>(m.rows()) > kMaxSmallDimension) {
    throw DimensionError("eigenvalues: dimension " + std::to_string(m.rows()) + " exceeds " +
                         std::to_string(kMaxSmallDimension));
  }
  if (m.rows() == 0) return {};
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/true);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigenvalues: QR iteration did not converge");
  }
  const Eigen::MatrixXcd vecs = solver.eigenvectors();
  const Eigen::VectorXcd vals = solver.eigenvalues();
  const double residual =
      (m.cast<Complex>() * vecs - vecs * vals.asDiagonal()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (!(residual <= 1e-8 * scale)) {
    std::ostringstream os;
    os << "eigenvalues: eigen-decomposition residual " << residual << " too large";
    throw NumericError(os.str());
  }
  return {vals.data(), vals.data() + vals.size()};
}

inline double spectral_radius(const Matrix& m) {
  double r = 0.0;
  for (const Complex& z : eigenvalues(m)) r = std::max(r, std::abs(z));
  return r;
}

/// Numerical rank from singular values, relative threshold on the largest one.
inline Eigen::Index rank(const Matrix& m, double rel_tol = kRankTolerance) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double cutoff = rel_tol * s(0);
  return (s.array() > cutoff).count();
}

/// Solves J W - W A = Q by Kronecker vectorization. J is n x n, A is m x m,
/// Q is n x m. The spectra of J and A must be disjoint.
inline Matrix solve_sylvester(const Matrix& J, const Matrix& A, const Matrix& Q) {
  require_square(J, "solve_sylvester(J)");
  require_square(A, "solve_sylvester(A)");
  if (Q.rows() != J.rows() || Q.cols() != A.rows()) {
    throw DimensionError("solve_sylvester: Q must be " + std::to_string(J.rows()) + "x" +
                         std::to_string(A.rows()));
  }
  const auto spec_j = eigenvalues(J);
  const auto spec_a = eigenvalues(A);
  for (const Complex& lj : spec_j) {
    for (const Complex& ka : spec_a) {
      if (std::abs(lj - ka) <= kSpectrumTolerance) {
        throw SingularityError("solve_sylvester: J and A share the eigenvalue " +
                               format_complex(lj));
      }
    }
  }

  const Eigen::Index n = J.rows();
  const Eigen::Index m = A.rows();
  // vec(J W) = (I_m (x) J) vec(W), vec(W A) = (A^T (x) I_n) vec(W), column-major vec.
  Matrix K = Matrix::Zero(n * m, n * m);
  for (Eigen::Index b = 0; b < m; ++b) {
    K.block(b * n, b * n, n, n) += J;
    for (Eigen::Index a = 0; a < m; ++a) {
      K.block(b * n, a * n, n, n) -= A(a, b) * Matrix::Identity(n, n);
    }
  }
  const Vector q = Eigen::Map<const Vector>(Q.data(), Q.size());
  Eigen::FullPivLU<Matrix> lu(K);
  Vector w = lu.solve(q);
  w += lu.solve(q - K * w);  // one step of iterative refinement
  Matrix W = Eigen::Map<const Matrix>(w.data(), n, m);

  const double residual = (J * W - W * A - Q).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
  if (!(residual <= 1e-10 * scale)) {
    std::ostringstream os;
    os << "solve_sylvester: residual " << residual << " exceeds tolerance";
    throw NumericError(os.str());
  }
  return W;
}

/// [G | JG | ... | J^{n-1} G]
inline Matrix controllability_matrix(const Matrix& J, const Vector& G) {
  const Eigen::Index n = J.rows();
  Matrix C(n, n);
  Vector col = G;
  for (Eigen::Index k = 0; k < n; ++k) {
    C.col(k) = col;
    col = J * col;
  }
  return C;
}

/// [c; cA; ...; cA^{n-1}]
inline Matrix observability_matrix(const RowVector& c, const Matrix& A) {
  const Eigen::Index n = A.rows();
  Matrix O(n, n);
  RowVector row = c;
  for (Eigen::Index k = 0; k < n; ++k) {
    O.row(k) = row;
    row = row * A;
  }
  return O;
}

struct AssumptionCheck {
  bool passed = false;
  std::string reason;  // empty when passed
};

struct SpectralReport {
  std::vector<Complex> eigenvalues_of_A;
  std::vector<Complex> eigenvalues_of_J;
  AssumptionCheck controllability;   // 1
  AssumptionCheck poincare_domain;   // 2
  AssumptionCheck disjoint_spectra;  // 3
  AssumptionCheck non_resonance;     // 4
  AssumptionCheck observability;     // 5
  int resonance_order_checked = 0;
  // Total order beyond which no eigenvalue product of A can reach the smallest
  // |lambda_j|. Absent when that bound does not exist (|k| = 0 not counted,
  // a zero eigenvalue of J, or rho(A) >= 1).
  std::optional<int> resonance_decay_order;

  bool all_passed() const {
    return controllability.passed && poincare_domain.passed && disjoint_spectra.passed &&
           non_resonance.passed && observability.passed;
  }

  std::vector<const AssumptionCheck*> checks() const {
    return {&controllability, &poincare_domain, &disjoint_spectra, &non_resonance, &observability};
  }
};

namespace detail {

// Calls visit(product, exponents) for every exponent vector with 0 < sum <= max_order.
template <class Visit>
void for_each_eigen_product(const std::vector<Complex>& k, int max_order, Visit&& visit) {
  const std::size_t n = k.size();
  std::vector<int> m(n, 0);
  auto recurse = [&](auto&& self, std::size_t pos, int remaining, Complex prod) -> void {
    if (pos == n) {
      if (remaining < max_order) visit(prod, m);
      return;
    }
    Complex p = prod;
    for (int e = 0; e <= remaining; ++e) {
      m[pos] = e;
      self(self, pos + 1, remaining - e, p);
      p *= k[pos];
    }
    m[pos] = 0;
  };
  recurse(recurse, 0, max_order, Complex(1.0, 0.0));
}

inline std::string format_exponents(const std::vector<int>& m) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < m.size(); ++i) os << (i ? "," : "") << m[i];
  os << ")";
  return os.str();
}

}  // namespace detail

/// Runs the five existence conditions on the equilibrium data (J, G) and the
/// design pair (A, c). Failures are reported, never thrown.
inline SpectralReport check_assumptions(const Matrix& J, const Vector& G, const Matrix& A,
                                        const RowVector& c, int resonance_bound = 10) {
  require_square(J, "check_assumptions(J)");
  require_square(A, "check_assumptions(A)");
  const Eigen::Index n = J.rows();
  if (A.rows() != n || G.size() != n || c.size() != n) {
    throw DimensionError("check_assumptions: J, G, A, c must share dimension " +
                         std::to_string(n));
  }
  if (resonance_bound < 1) throw DimensionError("check_assumptions: resonance_bound must be >= 1");

  SpectralReport rep;
  rep.eigenvalues_of_A = eigenvalues(A);
  rep.eigenvalues_of_J = eigenvalues(J);
  rep.resonance_order_checked = resonance_bound;

  const Eigen::Index rc = rank(controllability_matrix(J, G));
  rep.controllability.passed = rc == n;
  if (!rep.controllability.passed) {
    rep.controllability.reason = "rank of [G|JG|...|J^(n-1)G] is " + std::to_string(rc) +
                                 ", expected " + std::to_string(n);
  }

  double rho = 0.0;
  for (const Complex& k : rep.eigenvalues_of_A) rho = std::max(rho, std::abs(k));
  rep.poincare_domain.passed = true;
  for (const Complex& k : rep.eigenvalues_of_A) {
    if (!(std::abs(k) < 1.0)) {
      rep.poincare_domain.passed = false;
      rep.poincare_domain.reason = "eigenvalue " + format_complex(k) + " of A has modulus " +
                                   std::to_string(std::abs(k)) + " >= 1";
      break;
    }
  }

  rep.disjoint_spectra.passed = true;
  for (const Complex& l : rep.eigenvalues_of_J) {
    for (const Complex& k : rep.eigenvalues_of_A) {
      if (std::abs(l - k) <= kSpectrumTolerance && rep.disjoint_spectra.passed) {
        rep.disjoint_spectra.passed = false;
        rep.disjoint_spectra.reason = "eigenvalue " + format_complex(l) + " is shared by A and J";
      }
    }
  }

  rep.non_resonance.passed = true;
  detail::for_each_eigen_product(
      rep.eigenvalues_of_A, resonance_bound, [&](Complex prod, const std::vector<int>& m) {
        if (!rep.non_resonance.passed) return;
        int total = 0;
        for (int e : m) total += e;
        if (total == 0) return;
        for (const Complex& l : rep.eigenvalues_of_J) {
          if (std::abs(prod - l) <= kSpectrumTolerance) {
            rep.non_resonance.passed = false;
            rep.non_resonance.reason = "product of A eigenvalues with exponents " +
                                       detail::format_exponents(m) + " equals eigenvalue " +
                                       format_complex(l) + " of J";
            return;
          }
        }
      });

  double min_lambda = std::numeric_limits<double>::infinity();
  for (const Complex& l : rep.eigenvalues_of_J) min_lambda = std::min(min_lambda, std::abs(l));
  if (rho > 0.0 && rho < 1.0 && min_lambda > kSpectrumTolerance) {
    // rho^s < min|lambda| - tol for all s >= bound.
    const double s = std::log(min_lambda - kSpectrumTolerance) / std::log(rho);
    rep.resonance_decay_order = static_cast<int>(std::floor(s)) + 1;
  } else if (rho == 0.0) {
    rep.resonance_decay_order = 1;
  }

  const Eigen::Index ro = rank(observability_matrix(c, A));
  rep.observability.passed = ro == n;
  if (!rep.observability.passed) {
    rep.observability.reason = "rank of [c; cA; ...; cA^(n-1)] is " + std::to_string(ro) +
                               ", expected " + std::to_string(n);
  }
  return rep;
}

}  // namespace fblin
