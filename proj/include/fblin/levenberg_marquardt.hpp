#pragma once

// Full-batch Levenberg-Marquardt for min_p ||r(p)||^2.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "fblin/errors.hpp"
#include "fblin/linalg.hpp"

namespace fblin {

struct LmSettings {
  double func_tol = 1e-12;
  long max_iterations = 100000;
  long max_function_evals = 12000;
  double initial_damping = 1e-3;
  double damping_up = 10.0;
  double damping_down = 0.1;
  double max_damping = 1e16;
  // Damping matrix: diag(J^T J) (Marquardt) when true, the identity (Levenberg) otherwise.
  bool diagonal_scaling = true;

  void validate() const {
    if (!(func_tol > 0.0)) throw ConfigError("LM: func_tol must be > 0");
    if (max_iterations < 1 || max_function_evals < 1) throw ConfigError("LM: limits must be >= 1");
    if (!(damping_up > 1.0)) throw ConfigError("LM: damping_up must be > 1");
    if (!(damping_down > 0.0 && damping_down < 1.0)) throw ConfigError("LM: damping_down must be in (0,1)");
    if (!(initial_damping >= 0.0)) throw ConfigError("LM: initial_damping must be >= 0");
  }
};

enum class Termination { func_tol, max_iter, max_evals, stalled };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::func_tol: return "func_tol";
    case Termination::max_iter: return "max_iter";
    case Termination::max_evals: return "max_evals";
    case Termination::stalled: return "stalled";
  }
  return "unknown";
}

struct LmIteration {
  long iteration = 0;
  double loss = 0.0;
  double damping = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
};

struct LmResult {
  Vector params;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  long iterations = 0;
  long function_evals = 0;
  Termination reason = Termination::max_iter;
  std::vector<double> loss_history;  // loss after each accepted step, starting with the initial loss
};

using LmCallback = std::function<void(const LmIteration&)>;

/// Delimiter-separated per-iteration log: iteration,loss,damping,step_norm,accepted
inline LmCallback csv_iteration_log(std::ostream& os, char delim = ',') {
  os << "iteration" << delim << "loss" << delim << "damping" << delim << "step_norm" << delim
     << "accepted\n";
  return [&os, delim](const LmIteration& it) {
    os << it.iteration << delim << it.loss << delim << it.damping << delim << it.step_norm << delim
       << (it.accepted ? 1 : 0) << '\n';
  };
}

/// residual_fn(p) -> Vector r, jacobian_fn(p) -> Matrix dr/dp.
/// Damped normal equations (J^T J + mu diag(J^T J)) dp = -J^T r, multiplicative damping schedule.
template <class ResidualFn, class JacobianFn>
LmResult minimize(ResidualFn&& residual_fn, JacobianFn&& jacobian_fn, const Vector& init,
                  const LmSettings& settings = {}, const LmCallback& callback = {}) {
  settings.validate();
  if (!init.allFinite()) throw NumericError("LM: initial parameters are not finite");

  LmResult res;
  Vector p = init;
  Vector r = residual_fn(p);
  res.function_evals = 1;
  if (!r.allFinite()) throw NumericError("LM: residuals at the initial point are not finite");
  double loss = r.squaredNorm();
  res.initial_loss = loss;
  res.loss_history.push_back(loss);

  double mu = settings.initial_damping;
  bool need_jacobian = true;
  Matrix Jr;
  Matrix JtJ;
  Vector Jtr;
  Vector scale;

  res.reason = Termination::max_iter;
  for (long it = 1; it <= settings.max_iterations; ++it) {
    res.iterations = it;
    if (loss == 0.0) {
      res.reason = Termination::func_tol;
      break;
    }
    if (need_jacobian) {
      Jr = jacobian_fn(p);
      if (Jr.rows() != r.size() || Jr.cols() != p.size()) {
        throw DimensionError("LM: Jacobian is " + std::to_string(Jr.rows()) + "x" +
                             std::to_string(Jr.cols()) + ", expected " + std::to_string(r.size()) +
                             "x" + std::to_string(p.size()));
      }
      JtJ = Jr.transpose() * Jr;
      Jtr = Jr.transpose() * r;
      if (settings.diagonal_scaling) {
        scale = JtJ.diagonal();
        const double floor = std::max(scale.maxCoeff(), 1.0) * 1e-15;
        scale = scale.cwiseMax(floor);
      } else {
        scale = Vector::Ones(p.size());
      }
      need_jacobian = false;
    }
    if (res.function_evals >= settings.max_function_evals) {
      res.reason = Termination::max_evals;
      break;
    }

    Matrix H = JtJ;
    H.diagonal() += mu * scale;
    Eigen::LDLT<Matrix> ldlt(H);
    Vector dp = ldlt.solve(-Jtr);
    bool ok = ldlt.info() == Eigen::Success && dp.allFinite();

    double trial_loss = std::numeric_limits<double>::infinity();
    Vector p_trial;
    Vector r_trial;
    if (ok) {
      p_trial = p + dp;
      r_trial = residual_fn(p_trial);
      ++res.function_evals;
      if (r_trial.size() != r.size()) throw DimensionError("LM: residual length changed");
      if (r_trial.allFinite()) trial_loss = r_trial.squaredNorm();
    }

    const bool accepted = ok && trial_loss < loss;
    if (callback) callback({it, accepted ? trial_loss : loss, mu, ok ? dp.norm() : 0.0, accepted});

    if (accepted) {
      const double decrease = loss - trial_loss;
      p = std::move(p_trial);
      r = std::move(r_trial);
      loss = trial_loss;
      res.loss_history.push_back(loss);
      need_jacobian = true;
      mu *= settings.damping_down;
      if (decrease <= settings.func_tol * std::max(1.0, loss)) {
        res.reason = Termination::func_tol;
        break;
      }
    } else {
      mu = std::max(mu, 1e-300) * settings.damping_up;
      if (mu > settings.max_damping) {
        res.reason = Termination::stalled;
        break;
      }
    }
  }
  res.params = std::move(p);
  res.final_loss = loss;
  return res;
}

}  // namespace fblin
