#pragma once

// Shooting method for the rod's two-point boundary value problems: estimate
// the unknown wrench block (n0, m0) of the initial values, with the base pose
// fixed, by damped Gauss-Newton (Levenberg-Marquardt) on either a set of
// measured control-point positions or a target tip pose.

#include <limits>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>

#include "cosrod/jacobian.hpp"
#include "cosrod/rod.hpp"

namespace cosrod {

/// Residual: measured control-point positions (3 n_c rows).
struct ControlPointResidual {
  ControlPointLayout layout;
  std::vector<Vec3> measured;
};

/// Residual: target tip pose, 3 position rows [m] plus 3 orientation rows
/// (log-map, radians weighted into meters).
struct TipPoseResidual {
  Pose target;
  double orientation_weight = 1.0;  // [m/rad]
};

struct ShootingProblem {
  Pose base;  // known pose block of gamma0
  std::variant<ControlPointResidual, TipPoseResidual> residual;
};

struct ShootingResult {
  BoundaryState gamma0;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;
};

namespace detail {

inline Eigen::VectorXd shooting_residual(const ShootingProblem& problem,
                                         const RodParameters& params, const Vec6& wrench) {
  BoundaryState gamma0;
  gamma0.p = problem.base.position;
  gamma0.R = problem.base.orientation;
  gamma0.n = wrench.head<3>();
  gamma0.m = wrench.tail<3>();
  const RodShape shape = integrate_ivp(gamma0, params);

  if (const auto* cp = std::get_if<ControlPointResidual>(&problem.residual)) {
    const auto points = positions_at(shape, cp->layout.arclengths);
    Eigen::VectorXd r(3 * points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
      r.segment<3>(3 * i) = points[i] - cp->measured[i];
    return r;
  }
  const auto& tp = std::get<TipPoseResidual>(problem.residual);
  Eigen::VectorXd r(6);
  r.head<3>() = shape.tip().p - tp.target.position;
  r.tail<3>() = tp.orientation_weight * log_so3(tp.target.orientation.transpose() * shape.tip().R);
  return r;
}

}  // namespace detail

/// Levenberg-Marquardt on the six wrench unknowns. The residual Jacobian is
/// built by forward differences with the same wrench steps the deformation
/// Jacobian uses. Returns the best iterate with converged=false when the
/// tolerance is not reached; callers decide whether that is fatal.
inline ShootingResult solve_shooting(const ShootingProblem& problem, const RodParameters& params,
                                     const Vec6& init_guess, double tol = 1e-6,
                                     int max_iters = 100) {
  params.validate();
  if (!init_guess.allFinite()) throw std::invalid_argument("solve_shooting: non-finite initial guess");
  if (!(tol > 0.0)) throw std::invalid_argument("solve_shooting: tolerance must be positive");
  if (const auto* cp = std::get_if<ControlPointResidual>(&problem.residual)) {
    cp->layout.validate(params.length);
    if (cp->measured.size() != static_cast<std::size_t>(cp->layout.count()))
      throw std::invalid_argument("solve_shooting: measured point count does not match layout");
  }

  // Finite-difference steps anchored to the bending stiffness: the residual
  // responses stay well above integrator noise while the truncation error
  // remains far below the weak singular values of the wrench Jacobian. The
  // axial (Kt) scale would give steps orders of magnitude too coarse for
  // stiff cables.
  const double bend_stiffness = 0.5 * (params.Kr(0, 0) + params.Kr(1, 1));
  const double fd_force = 1e-5 * bend_stiffness / (params.length * params.length);
  const double fd_moment = 1e-5 * bend_stiffness / params.length;
  auto fd_step = [&](int j) { return j < 3 ? fd_force : fd_moment; };

  Vec6 w = init_guess;
  Eigen::VectorXd r = detail::shooting_residual(problem, params, w);
  double r_norm = r.norm();

  ShootingResult result;
  result.residual_history.push_back(r_norm);

  double lambda = -1.0;  // initialized from the first J^T J trace
  int iter = 0;
  for (; iter < max_iters && r_norm >= tol; ++iter) {
    // Central differences: the tight plant tolerance sits below the
    // truncation floor a one-sided Jacobian leaves on stiff cables.
    Eigen::Matrix<double, Eigen::Dynamic, 6> J(r.size(), 6);
    for (int j = 0; j < 6; ++j) {
      Vec6 wp = w, wm = w;
      wp[j] += fd_step(j);
      wm[j] -= fd_step(j);
      J.col(j) = (detail::shooting_residual(problem, params, wp) -
                  detail::shooting_residual(problem, params, wm)) /
                 (2.0 * fd_step(j));
    }

    const Eigen::Matrix<double, 6, 6> JtJ = J.transpose() * J;
    const Vec6 g = J.transpose() * r;
    if (lambda < 0.0) lambda = 1e-3 * JtJ.trace() / 6.0;

    // Inner damping loop, Nielsen's gain-ratio schedule: accepted steps relax
    // lambda in proportion to how well the quadratic model predicted the
    // decrease, rejections inflate it geometrically. Tracks the acceptance
    // boundary far better than a fixed x10 ladder on stiff problems.
    bool stepped = false;
    double nu = 2.0;
    for (int attempt = 0; attempt < 60; ++attempt) {
      const Eigen::Matrix<double, 6, 6> A =
          JtJ + lambda * Eigen::Matrix<double, 6, 6>::Identity();
      const Vec6 step = A.ldlt().solve(-g);
      const Vec6 w_try = w + step;
      double try_norm = std::numeric_limits<double>::infinity();
      Eigen::VectorXd r_try;
      try {
        r_try = detail::shooting_residual(problem, params, w_try);
        try_norm = r_try.norm();
      } catch (const IntegrationError&) {
        // candidate diverged; treat as a rejected step
      }
      if (try_norm < r_norm) {
        const double predicted = step.dot(lambda * step - g);  // model decrease of ||r||^2
        const double rho = (r_norm * r_norm - try_norm * try_norm) /
                           std::max(predicted, std::numeric_limits<double>::min());
        w = w_try;
        r = r_try;
        r_norm = try_norm;
        lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        lambda = std::max(lambda, 1e-18);
        stepped = true;
        break;
      }
      lambda *= nu;
      nu *= 2.0;
    }
    result.residual_history.push_back(r_norm);
    if (!stepped) {
      ++iter;
      break;  // stalled: no descent direction at any damping
    }
  }

  result.gamma0.p = problem.base.position;
  result.gamma0.R = problem.base.orientation;
  result.gamma0.n = w.head<3>();
  result.gamma0.m = w.tail<3>();
  result.residual_norm = r_norm;
  result.iterations = iter;
  result.converged = r_norm < tol;
  return result;
}

class PlantFault : public std::runtime_error {
 public:
  explicit PlantFault(const std::string& what) : std::runtime_error(what) {}
};

/// Quasi-static settle of a rod held by two grippers: shooting with a tip
/// pose residual, warm-started from the previous wrench. Throws PlantFault on
/// non-convergence so scenarios can surface the failure.
inline BoundaryState solve_plant_bvp(const Pose& base_pose, const Pose& tip_pose,
                                     const RodParameters& params, const Vec6& warm_start,
                                     double tol = 1e-8, int max_iters = 100,
                                     ShootingResult* diagnostics = nullptr) {
  ShootingProblem problem;
  problem.base = base_pose;
  problem.residual = TipPoseResidual{tip_pose, 1.0};
  const ShootingResult res = solve_shooting(problem, params, warm_start, tol, max_iters);
  if (diagnostics) *diagnostics = res;
  if (!res.converged)
    throw PlantFault("plant BVP settle failed: residual " + std::to_string(res.residual_norm) +
                     " after " + std::to_string(res.iterations) + " iterations");
  return res.gamma0;
}

}  // namespace cosrod
