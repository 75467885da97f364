#pragma once

// Two-hidden-layer feed-forward network with a linear output layer,
//   T(x) = Wo^T phi(W2^T phi(W1^T x + b1) + b2) + bo,
// and its analytic derivatives with respect to inputs and parameters.
//
// Flat parameter order (each matrix column-major):
//   Wo (N2 x n), W2 (N1 x N2), W1 (n x N1), bo (n), b2 (N2), b1 (N1).

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fblin/errors.hpp"
#include "fblin/linalg.hpp"

namespace fblin {

enum class Activation { sigmoid, tanh, identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "unknown";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

/// Values, first and second derivatives of the activation at pre-activations a.
struct ActivationValues {
  Vector value, d1, d2;
};

inline ActivationValues activate(Activation act, const Vector& a) {
  ActivationValues r;
  switch (act) {
    case Activation::sigmoid: {
      r.value = a.unaryExpr([](double v) {
        // stable in both tails
        return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      });
      const auto s = r.value.array();
      r.d1 = s * (1.0 - s);
      r.d2 = s * (1.0 - s) * (1.0 - 2.0 * s);
      break;
    }
    case Activation::tanh: {
      r.value = a.array().tanh();
      const auto t = r.value.array();
      r.d1 = 1.0 - t * t;
      r.d2 = -2.0 * t * (1.0 - t * t);
      break;
    }
    case Activation::identity:
      r.value = a;
      r.d1 = Vector::Ones(a.size());
      r.d2 = Vector::Zero(a.size());
      break;
  }
  return r;
}

struct Architecture {
  Eigen::Index n = 2;
  Eigen::Index N1 = 5;
  Eigen::Index N2 = 5;
  Activation activation = Activation::sigmoid;

  Eigen::Index parameter_count() const { return N2 * n + N1 * N2 + n * N1 + n + N2 + N1; }
  bool operator==(const Architecture&) const = default;
};

struct NetworkParams {
  Architecture arch;
  Matrix W1;  // n x N1
  Matrix W2;  // N1 x N2
  Matrix Wo;  // N2 x n
  Vector b1;  // N1
  Vector b2;  // N2
  Vector bo;  // n

  static NetworkParams zeros(const Architecture& a) {
    return {a,
            Matrix::Zero(a.n, a.N1),
            Matrix::Zero(a.N1, a.N2),
            Matrix::Zero(a.N2, a.n),
            Vector::Zero(a.N1),
            Vector::Zero(a.N2),
            Vector::Zero(a.n)};
  }

  /// Every weight and bias drawn uniformly from [lo, hi).
  static NetworkParams random_uniform(const Architecture& a, std::uint64_t seed, double lo = 0.0,
                                      double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Vector flat(a.parameter_count());
    for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = dist(rng);
    return unflatten(a, flat);
  }

  Eigen::Index size() const { return arch.parameter_count(); }

  struct Offsets {
    Eigen::Index Wo, W2, W1, bo, b2, b1, end;
  };

  static Offsets offsets(const Architecture& a) {
    Offsets o{};
    o.Wo = 0;
    o.W2 = o.Wo + a.N2 * a.n;
    o.W1 = o.W2 + a.N1 * a.N2;
    o.bo = o.W1 + a.n * a.N1;
    o.b2 = o.bo + a.n;
    o.b1 = o.b2 + a.N2;
    o.end = o.b1 + a.N1;
    return o;
  }

  Vector flatten() const {
    const Offsets o = offsets(arch);
    Vector p(o.end);
    p.segment(o.Wo, Wo.size()) = Eigen::Map<const Vector>(Wo.data(), Wo.size());
    p.segment(o.W2, W2.size()) = Eigen::Map<const Vector>(W2.data(), W2.size());
    p.segment(o.W1, W1.size()) = Eigen::Map<const Vector>(W1.data(), W1.size());
    p.segment(o.bo, arch.n) = bo;
    p.segment(o.b2, arch.N2) = b2;
    p.segment(o.b1, arch.N1) = b1;
    return p;
  }

  static NetworkParams unflatten(const Architecture& a, const Vector& p) {
    const Offsets o = offsets(a);
    if (p.size() != o.end) {
      throw DimensionError("unflatten: expected " + std::to_string(o.end) + " parameters, got " +
                           std::to_string(p.size()));
    }
    NetworkParams np;
    np.arch = a;
    np.Wo = Eigen::Map<const Matrix>(p.data() + o.Wo, a.N2, a.n);
    np.W2 = Eigen::Map<const Matrix>(p.data() + o.W2, a.N1, a.N2);
    np.W1 = Eigen::Map<const Matrix>(p.data() + o.W1, a.n, a.N1);
    np.bo = p.segment(o.bo, a.n);
    np.b2 = p.segment(o.b2, a.N2);
    np.b1 = p.segment(o.b1, a.N1);
    return np;
  }

  bool all_finite() const {
    return W1.allFinite() && W2.allFinite() && Wo.allFinite() && b1.allFinite() &&
           b2.allFinite() && bo.allFinite();
  }
};

/// Intermediate quantities of one forward pass.
struct ForwardPass {
  Vector h1, d1, dd1;  // first hidden layer: value, phi', phi''
  Vector h2, d2, dd2;  // second hidden layer
  Vector output;
};

inline ForwardPass forward_pass(const NetworkParams& p, const Vector& x) {
  if (x.size() != p.arch.n) {
    throw DimensionError("network input has length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(p.arch.n));
  }
  ForwardPass f;
  ActivationValues l1 = activate(p.arch.activation, p.W1.transpose() * x + p.b1);
  f.h1 = std::move(l1.value);
  f.d1 = std::move(l1.d1);
  f.dd1 = std::move(l1.d2);
  ActivationValues l2 = activate(p.arch.activation, p.W2.transpose() * f.h1 + p.b2);
  f.h2 = std::move(l2.value);
  f.d2 = std::move(l2.d1);
  f.dd2 = std::move(l2.d2);
  f.output = p.Wo.transpose() * f.h2 + p.bo;
  return f;
}

inline Vector forward(const NetworkParams& p, const Vector& x) { return forward_pass(p, x).output; }

/// dT/dx, entry (j, k) = dT_j / dx_k.
inline Matrix input_jacobian(const NetworkParams& p, const ForwardPass& f) {
  return p.Wo.transpose() * f.d2.asDiagonal() * p.W2.transpose() * f.d1.asDiagonal() *
         p.W1.transpose();
}

inline Matrix input_jacobian(const NetworkParams& p, const Vector& x) {
  return input_jacobian(p, forward_pass(p, x));
}

/// dT/dP as an n x |P| matrix; row j is the gradient of T_j in flat order.
inline Matrix param_jacobian(const NetworkParams& p, const Vector& x, const ForwardPass& f) {
  const Architecture& a = p.arch;
  const auto o = NetworkParams::offsets(a);
  Matrix G = Matrix::Zero(a.n, o.end);

  for (Eigen::Index q = 0; q < a.n; ++q) G.block(q, o.Wo + q * a.N2, 1, a.N2) = f.h2.transpose();

  const Matrix out2 = p.Wo.transpose() * f.d2.asDiagonal();  // n x N2, dT/da2
  for (Eigen::Index i = 0; i < a.N2; ++i) {
    for (Eigen::Index s = 0; s < a.N1; ++s) G.col(o.W2 + s + i * a.N1) = out2.col(i) * f.h1(s);
  }

  const Matrix out1 = out2 * p.W2.transpose() * f.d1.asDiagonal();  // n x N1, dT/da1
  for (Eigen::Index s = 0; s < a.N1; ++s) {
    for (Eigen::Index k = 0; k < a.n; ++k) G.col(o.W1 + k + s * a.n) = out1.col(s) * x(k);
  }

  G.block(0, o.bo, a.n, a.n).setIdentity();
  G.block(0, o.b2, a.n, a.N2) = out2;
  G.block(0, o.b1, a.n, a.N1) = out1;
  return G;
}

inline Matrix param_jacobian(const NetworkParams& p, const Vector& x) {
  return param_jacobian(p, x, forward_pass(p, x));
}

/// Gradient of a single output T_j with respect to all parameters.
inline Vector param_gradient(const NetworkParams& p, const Vector& x, Eigen::Index j) {
  if (j < 0 || j >= p.arch.n) throw DimensionError("param_gradient: output index out of range");
  return param_jacobian(p, x).row(j).transpose();
}

/// d^2 T_j / (dP dx_k) for all j at a fixed input index k, as an n x |P| matrix.
inline Matrix mixed_jacobian(const NetworkParams& p, const Vector& x, const ForwardPass& f,
                             Eigen::Index k) {
  const Architecture& a = p.arch;
  const auto o = NetworkParams::offsets(a);
  Matrix M = Matrix::Zero(a.n, o.end);

  const Vector v = f.d1.cwiseProduct(p.W1.row(k).transpose());  // dh1/dx_k
  const Vector w = p.W2.transpose() * v;                         // da2/dx_k

  for (Eigen::Index q = 0; q < a.n; ++q) {
    M.block(q, o.Wo + q * a.N2, 1, a.N2) = f.d2.cwiseProduct(w).transpose();
  }

  const Matrix curv2 = p.Wo.transpose() * (f.dd2.cwiseProduct(w)).asDiagonal();  // n x N2
  const Matrix out2 = p.Wo.transpose() * f.d2.asDiagonal();                      // n x N2
  for (Eigen::Index i = 0; i < a.N2; ++i) {
    for (Eigen::Index s = 0; s < a.N1; ++s) {
      M.col(o.W2 + s + i * a.N1) = curv2.col(i) * f.h1(s) + out2.col(i) * v(s);
    }
  }

  M.block(0, o.b2, a.n, a.N2) = curv2;

  const Matrix C = curv2 * p.W2.transpose();  // n x N1
  const Matrix E = out2 * p.W2.transpose();   // n x N1
  Matrix B1(a.n, a.N1);
  for (Eigen::Index s = 0; s < a.N1; ++s) {
    B1.col(s) = C.col(s) * f.d1(s) + E.col(s) * (f.dd1(s) * p.W1(k, s));
  }
  M.block(0, o.b1, a.n, a.N1) = B1;

  for (Eigen::Index s = 0; s < a.N1; ++s) {
    for (Eigen::Index q = 0; q < a.n; ++q) {
      Vector col = B1.col(s) * x(q);
      if (q == k) col += E.col(s) * f.d1(s);
      M.col(o.W1 + q + s * a.n) = col;
    }
  }
  return M;
}

/// d^2 T_j / (dP dx_k) as a flat vector.
inline Vector mixed_derivative(const NetworkParams& p, const Vector& x, Eigen::Index j,
                               Eigen::Index k) {
  if (j < 0 || j >= p.arch.n || k < 0 || k >= p.arch.n) {
    throw DimensionError("mixed_derivative: index out of range");
  }
  return mixed_jacobian(p, x, forward_pass(p, x), k).row(j).transpose();
}

// --- snapshots -------------------------------------------------------------

inline void write_params(std::ostream& os, const NetworkParams& p) {
  os << "fblin-network n=" << p.arch.n << " N1=" << p.arch.N1 << " N2=" << p.arch.N2
     << " activation=" << to_string(p.arch.activation) << " count=" << p.size() << '\n';
  const Vector flat = p.flatten();
  std::ostringstream line;
  line.precision(17);
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    line.str("");
    line << flat(i);
    os << line.str() << '\n';
  }
}

inline NetworkParams read_params(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw ConfigError("parameter file is empty");
  std::istringstream hs(header);
  std::string tag;
  hs >> tag;
  if (tag != "fblin-network") throw ConfigError("parameter file: missing 'fblin-network' header");
  Architecture a;
  long long count = -1;
  bool seen_n = false, seen_n1 = false, seen_n2 = false;
  std::string tok;
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("parameter file: bad header field '" + tok + "'");
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    try {
      if (key == "n") a.n = std::stol(val), seen_n = true;
      else if (key == "N1") a.N1 = std::stol(val), seen_n1 = true;
      else if (key == "N2") a.N2 = std::stol(val), seen_n2 = true;
      else if (key == "activation") a.activation = parse_activation(val);
      else if (key == "count") count = std::stoll(val);
      else throw ConfigError("parameter file: unknown header field '" + key + "'");
    } catch (const std::logic_error&) {
      throw ConfigError("parameter file: bad value in header field '" + tok + "'");
    }
  }
  if (!seen_n || !seen_n1 || !seen_n2 || a.n < 1 || a.N1 < 1 || a.N2 < 1) {
    throw ConfigError("parameter file: header must give positive n, N1, N2");
  }
  if (count >= 0 && count != a.parameter_count()) {
    throw ConfigError("parameter file: count=" + std::to_string(count) +
                      " does not match architecture (" + std::to_string(a.parameter_count()) + ")");
  }
  Vector flat(a.parameter_count());
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    if (!(is >> flat(i))) {
      throw ConfigError("parameter file: expected " + std::to_string(flat.size()) +
                        " values, read " + std::to_string(i));
    }
  }
  NetworkParams p = NetworkParams::unflatten(a, flat);
  if (!p.all_finite()) throw ConfigError("parameter file: non-finite parameter");
  return p;
}

}  // namespace fblin
