#pragma once

// Levenberg-Marquardt for small dense nonlinear least-squares problems.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace nvphoto::lsq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Options {
  int max_iterations = 200;
  double relative_tolerance = 1e-10;  ///< cost decrease counted as stalled below this
  double step_tolerance = 1e-13;      ///< stop when every parameter moves less than this, relative
  int stall_iterations = 8;           ///< stop after this many consecutive stalled iterations
  double initial_damping = 1e-3;
};

struct Result {
  Vector params;
  Vector residuals;
  Matrix jacobian;
  double cost = 0.0;  ///< sum of squared residuals
  int iterations = 0;
  bool converged = false;
};

/// Central-difference Jacobian.
template <class Residual>
Matrix numeric_jacobian(Residual&& f, const Vector& x, const Vector& fx) {
  Matrix j(fx.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

/// Minimizes |f(x)|^2. `jac` returns df/dx at x.
template <class Residual, class Jacobian>
Result minimize(Residual&& f, Jacobian&& jac, Vector x, const Options& opt = {}) {
  Result out;
  Vector r = f(x);
  double cost = r.squaredNorm();
  double lambda = opt.initial_damping;
  Matrix j = jac(x, r);

  auto finish = [&](bool converged) {
    out.params = x;
    out.residuals = r;
    out.jacobian = j;
    out.cost = cost;
    out.converged = converged;
    return out;
  };
  if (!std::isfinite(cost)) return finish(false);
  if (cost == 0.0) return finish(true);

  const double floor = 1e-6 * std::max(1.0, x.cwiseAbs().maxCoeff());
  int stalled = 0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it + 1;
    const Matrix a = j.transpose() * j;
    const Vector g = j.transpose() * r;
    Vector diag = a.diagonal().cwiseMax(1e-12 * std::max(1.0, a.diagonal().maxCoeff()));

    bool accepted = false;
    while (lambda < 1e16) {
      Matrix damped = a;
      damped.diagonal() += lambda * diag;
      const Vector step = damped.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const Vector x_new = x + step;
      const Vector r_new = f(x_new);
      const double cost_new = r_new.squaredNorm();
      if (std::isfinite(cost_new) && cost_new <= cost) {
        const double decrease = (cost - cost_new) / cost;
        const bool small_step =
            (step.cwiseAbs().array() <= opt.step_tolerance * x.cwiseAbs().array().max(floor)).all();
        stalled = decrease < opt.relative_tolerance ? stalled + 1 : 0;
        x = x_new;
        r = r_new;
        cost = cost_new;
        lambda = std::max(lambda / 3.0, 1e-12);
        if (cost == 0.0 || small_step || stalled >= opt.stall_iterations) {
          j = jac(x, r);
          return finish(true);
        }
        j = jac(x, r);
        accepted = true;
        break;
      }
      lambda *= 4.0;
    }
    // No downhill step at any damping: x is a (local) minimum to working precision.
    if (!accepted) return finish(true);
  }
  return finish(false);
}

template <class Residual>
Result minimize(Residual&& f, Vector x, const Options& opt = {}) {
  return minimize(
      f, [&](const Vector& p, const Vector& fp) { return numeric_jacobian(f, p, fp); }, std::move(x), opt);
}

}  // namespace nvphoto::lsq
