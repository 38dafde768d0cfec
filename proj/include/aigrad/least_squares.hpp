#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace aigrad {

struct LmOptions {
  int max_iterations = 100;
  double relative_step_tolerance = 1e-10;
  double initial_damping = 1e-3;
  // Accepted steps that lower the cost by less than this fraction end the
  // iteration.
  double relative_cost_tolerance = 1e-14;
};

struct LmResult {
  Eigen::VectorXd params;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  double cost = 0.0;  // 0.5 * |r|^2
  int iterations = 0;
  bool converged = false;
};

/// Damped Gauss-Newton (Levenberg-Marquardt with Marquardt diagonal
/// scaling). `model(p, r, J)` fills the residual vector and, when J is not
/// null, the Jacobian dr/dp.
template <typename Model>
LmResult levenberg_marquardt(Model&& model, Eigen::VectorXd start, const LmOptions& opts = {}) {
  LmResult out;
  out.params = std::move(start);

  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  model(out.params, r, &J);
  double cost = 0.5 * r.squaredNorm();
  double lambda = opts.initial_damping;

  Eigen::VectorXd r_trial;
  for (out.iterations = 0; out.iterations < opts.max_iterations; ++out.iterations) {
    const Eigen::MatrixXd jtj = J.transpose() * J;
    const Eigen::VectorXd grad = J.transpose() * r;
    if (grad.lpNorm<Eigen::Infinity>() == 0.0) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd diag = jtj.diagonal().cwiseMax(1e-300);

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * diag;
      const Eigen::VectorXd step = damped.ldlt().solve(-grad);
      const Eigen::VectorXd trial = out.params + step;
      model(trial, r_trial, nullptr);
      const double trial_cost = 0.5 * r_trial.squaredNorm();
      if (std::isfinite(trial_cost) && trial_cost <= cost) {
        const bool small_step =
            step.norm() <= opts.relative_step_tolerance *
                               (out.params.norm() + opts.relative_step_tolerance) ||
            cost - trial_cost <= opts.relative_cost_tolerance * cost;
        out.params = trial;
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-15);
        model(out.params, r, &J);
        accepted = true;
        if (small_step) out.converged = true;
      } else {
        lambda *= 10.0;
        // No decrease is possible even for a vanishing step: the current
        // point is stationary to working precision.
        if (lambda > 1e16) {
          out.converged = true;
          break;
        }
      }
    }
    if (out.converged) break;
  }
  out.residuals = r;
  out.jacobian = J;
  out.cost = cost;
  return out;
}

}  // namespace aigrad
