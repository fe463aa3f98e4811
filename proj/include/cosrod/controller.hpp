#pragma once

// Closed-loop shape controller. Each step estimates the initial values that
// match the current measurements, computes a fresh deformation Jacobian,
// advances the initial values through its damped pseudoinverse, integrates
// the predicted shape and emits end-effector pose targets plus proportional
// velocity commands.

#include <optional>
#include <stdexcept>
#include <vector>

#include "cosrod/jacobian.hpp"
#include "cosrod/rod.hpp"

namespace cosrod {

/// Target positions, paired index-wise with the control points.
struct Objective {
  std::vector<Vec3> points;
};

/// Stacked signed error p_obj - p_c (meters) plus per-point norms.
struct ErrorVector {
  Eigen::VectorXd stacked;  // 3 n_c
  Eigen::VectorXd norms;    // n_c

  static ErrorVector Between(const Objective& objective, const std::vector<Vec3>& measured) {
    if (objective.points.size() != measured.size())
      throw std::invalid_argument("ErrorVector: objective/measured size mismatch");
    const int n = static_cast<int>(measured.size());
    ErrorVector e;
    e.stacked.resize(3 * n);
    e.norms.resize(n);
    for (int i = 0; i < n; ++i) {
      e.stacked.segment<3>(3 * i) = objective.points[i] - measured[i];
      e.norms[i] = e.stacked.segment<3>(3 * i).norm();
    }
    return e;
  }

  double mean() const { return norms.mean(); }
  double max() const { return norms.maxCoeff(); }
};

enum class FeedbackMode { Vision, ForceSensor };

/// Trust-region caps on one applied initial-value increment, per block. The
/// damped pseudoinverse can request wrench excursions far outside the
/// Jacobian's linear neighborhood along weak directions; increments are
/// scaled down uniformly so every block stays within its cap.
struct IncrementLimits {
  double position;  // [m]
  double rotation;  // [rad]
  double force;     // [N]
  double moment;    // [N m]

  static IncrementLimits ForParams(const RodParameters& params) {
    const double bend = 0.5 * (params.Kr(0, 0) + params.Kr(1, 1));
    IncrementLimits lim;
    lim.position = 0.05 * params.length;
    lim.rotation = 0.2;
    lim.force = 0.5 * bend / (params.length * params.length);
    lim.moment = 0.5 * bend / params.length;
    return lim;
  }

  /// Factor in (0, 1] that brings every block of the increment within caps.
  double scale_factor(const Eigen::VectorXd& increment, BcMode mode) const {
    double worst = 1.0;
    const int off = (mode == BcMode::BiArm) ? 0 : 6;
    const double caps[4] = {position, rotation, force, moment};
    for (int b = off / 3; b < 4; ++b) {
      const double norm = increment.segment<3>(3 * b - off).norm();
      if (norm > caps[b]) worst = std::max(worst, norm / caps[b]);
    }
    return 1.0 / worst;
  }
};

struct ControllerConfig {
  double gain = 0.1;  // K in (0, 1]
  // epsilon_d; unset latches 1e-3 * (largest wrench-block singular value) at
  // the first step.
  std::optional<double> damping{};
  std::optional<PerturbationDeltas> deltas{};  // unset: derived from the rod parameters
  std::optional<IncrementLimits> limits{};     // unset: derived from the rod parameters
  double convergence_tol = 1e-3;               // [m], mean control-point error
  double sigma_min_threshold = 1e-8;
  double ee_gain_translation = 10.0;  // [1/s]
  double ee_gain_rotation = 10.0;     // [1/s]
  FeedbackMode feedback = FeedbackMode::Vision;

  void validate() const {
    if (!(gain > 0.0 && gain <= 1.0)) throw std::invalid_argument("ControllerConfig: gain must be in (0, 1]");
    if (damping && *damping < 0.0) throw std::invalid_argument("ControllerConfig: damping must be >= 0");
    if (!(convergence_tol > 0.0)) throw std::invalid_argument("ControllerConfig: convergence_tol must be > 0");
    if (!(ee_gain_translation > 0.0 && ee_gain_rotation > 0.0))
      throw std::invalid_argument("ControllerConfig: end-effector gains must be > 0");
  }
};

/// Force/torque reading at the base gripper, world frame.
struct WrenchReading {
  Vec3 force = Vec3::Zero();
  Vec3 moment = Vec3::Zero();
};

struct ControllerState {
  BoundaryState gamma0_hat;
  std::optional<DeformationJacobian> prev_jacobian{};
  int iteration = 0;

  // Latched at the first step when the config leaves damping unset.
  std::optional<double> latched_damping{};
  // Previous step's prediction J_d * delta and the matching measurement, for
  // the cosine-similarity diagnostic.
  std::optional<Eigen::VectorXd> prev_predicted_disp{};
  std::optional<Eigen::VectorXd> prev_measured{};
};

class ControllerFault : public std::runtime_error {
 public:
  explicit ControllerFault(const std::string& what) : std::runtime_error(what) {}
};

/// Estimate of the initial values matching the current measurements.
/// Vision mode applies the previous-Jacobian increment to the running
/// estimate; the first iteration passes the shooting estimate through.
/// ForceSensor mode rebuilds the estimate from the gripper pose and the
/// wrench reading.
inline BoundaryState estimate_initial_values(const ControllerState& state, const ErrorVector& eps,
                                             const ControllerConfig& cfg,
                                             const std::optional<WrenchReading>& wrench = {},
                                             const std::optional<Pose>& base_pose = {},
                                             const std::optional<IncrementLimits>& limits = {}) {
  if (cfg.feedback == FeedbackMode::ForceSensor) {
    if (!wrench || !base_pose)
      throw std::invalid_argument("estimate_initial_values: force-sensor mode needs a wrench reading and base pose");
    BoundaryState est;
    est.p = base_pose->position;
    est.R = base_pose->orientation;
    est.n = wrench->force;
    est.m = wrench->moment;
    return est;
  }
  if (!state.prev_jacobian) {
    if (state.iteration > 0)
      throw std::invalid_argument("estimate_initial_values: vision mode needs the previous Jacobian after the first iteration");
    return state.gamma0_hat;
  }
  Eigen::VectorXd increment = cfg.gain * (damped_pinv(*state.prev_jacobian) * eps.stacked);
  if (limits) increment *= limits->scale_factor(increment, state.prev_jacobian->mode);
  return apply_increment(state.gamma0_hat, state.prev_jacobian->mode, increment);
}

struct StepDiagnostics {
  Eigen::VectorXd singular_values;  // of the control Jacobian J_d,k
  double stability_margin = 0.0;    // of the accepted candidate
  double error_norm = 0.0;          // ||eps_p|| stacked
  double mean_error = 0.0;
  double max_error = 0.0;
  std::optional<double> cosine_similarity{};  // previous prediction vs this measurement
  double gain_used = 0.0;
  double damping_used = 0.0;
  int rejections = 0;
};

struct ControlStepResult {
  BoundaryState gamma0_next;
  RodShape predicted_shape;
  std::optional<Pose> base_target;  // absent in clamped-base mode
  Pose tip_target;
  StepDiagnostics diag;
};

/// Cosine between a predicted and a measured stacked displacement; absent
/// when either vector is below the minimum norm (the step carries no signal).
inline std::optional<double> displacement_cosine(const Eigen::VectorXd& predicted,
                                                 const Eigen::VectorXd& measured,
                                                 double min_norm = 1e-9) {
  const double na = predicted.norm();
  const double nb = measured.norm();
  if (na < min_norm || nb < min_norm) return std::nullopt;
  return predicted.dot(measured) / (na * nb);
}

/// One pass of the control loop. Rejected candidates (stability margin at or
/// below the threshold) are retried with the gain halved; five rejections in
/// a row raise ControllerFault.
inline ControlStepResult control_step(ControllerState& state, const std::vector<Vec3>& measured_points,
                                      const Objective& objective, const RodParameters& params,
                                      const ControlPointLayout& layout, BcMode mode,
                                      const ControllerConfig& cfg,
                                      const std::optional<WrenchReading>& wrench = {},
                                      const std::optional<Pose>& base_pose = {}) {
  cfg.validate();
  layout.validate(params.length);
  if (static_cast<int>(measured_points.size()) != layout.count())
    throw std::invalid_argument("control_step: measured point count does not match layout");

  const ErrorVector eps = ErrorVector::Between(objective, measured_points);
  const PerturbationDeltas deltas = cfg.deltas ? *cfg.deltas : PerturbationDeltas::ForParams(params);
  const IncrementLimits limits = cfg.limits ? *cfg.limits : IncrementLimits::ForParams(params);

  state.gamma0_hat = estimate_initial_values(state, eps, cfg, wrench, base_pose, limits);

  // Control Jacobian at the estimate. Damping latches to 1e-3 * (largest
  // wrench-block singular value) of the first Jacobian when the config does
  // not pin it; the wrench block sets the scale because its sensitivities sit
  // orders of magnitude below the pose block for stiff objects.
  double damping = cfg.damping ? *cfg.damping : state.latched_damping.value_or(0.0);
  DeformationJacobian jac = compute_jacobian(state.gamma0_hat, params, layout, mode, deltas, damping);
  if (!cfg.damping && !state.latched_damping) {
    const Eigen::JacobiSVD<Eigen::MatrixXd> wrench_svd(jac.matrix.rightCols(6));
    damping = 1e-3 * wrench_svd.singularValues().maxCoeff();
    state.latched_damping = damping;
    jac.damping = damping;
  }

  const Eigen::MatrixXd pinv = damped_pinv(jac);

  // Candidate update with the stability guard. Rejected retries halve the
  // gain, shrinking the whole (already capped) increment toward the current
  // estimate.
  Eigen::VectorXd base_increment = cfg.gain * (pinv * eps.stacked);
  base_increment *= limits.scale_factor(base_increment, mode);
  double gain = cfg.gain;
  BoundaryState candidate;
  Eigen::VectorXd increment;
  double margin = 0.0;
  int rejections = 0;
  for (;;) {
    increment = (gain / cfg.gain) * base_increment;
    candidate = apply_increment(state.gamma0_hat, mode, increment);
    if (increment.isZero(0.0)) {
      // Zero step: the candidate is the current estimate, whose Jacobian we
      // already hold.
      margin = stability_margin(jac);
    } else {
      const DeformationJacobian cand_jac =
          compute_jacobian(candidate, params, layout, mode, deltas, damping);
      margin = stability_margin(cand_jac);
    }
    if (margin > cfg.sigma_min_threshold) break;
    if (++rejections >= 5)
      throw ControllerFault("control_step: stability margin " + std::to_string(margin) +
                            " below threshold after 5 gain halvings");
    gain *= 0.5;
  }

  ControlStepResult result;
  result.gamma0_next = candidate;
  result.predicted_shape = integrate_ivp(candidate, params);
  result.tip_target = result.predicted_shape.tip_pose();
  if (mode == BcMode::BiArm) result.base_target = result.predicted_shape.base_pose();

  result.diag.singular_values = jac.singular_values;
  result.diag.stability_margin = margin;
  result.diag.error_norm = eps.stacked.norm();
  result.diag.mean_error = eps.mean();
  result.diag.max_error = eps.max();
  result.diag.gain_used = gain;
  result.diag.damping_used = damping;
  result.diag.rejections = rejections;

  Eigen::VectorXd measured_stacked(3 * layout.count());
  for (int i = 0; i < layout.count(); ++i) measured_stacked.segment<3>(3 * i) = measured_points[i];
  if (state.prev_predicted_disp && state.prev_measured)
    result.diag.cosine_similarity =
        displacement_cosine(*state.prev_predicted_disp, measured_stacked - *state.prev_measured);

  state.prev_predicted_disp = jac.matrix * increment;
  state.prev_measured = measured_stacked;
  state.prev_jacobian = std::move(jac);
  state.iteration += 1;
  return result;
}

/// Commanded end-effector twist.
struct Twist {
  Vec3 linear = Vec3::Zero();   // [m/s], world frame
  Vec3 angular = Vec3::Zero();  // [rad/s], end-effector frame
};

/// Proportional law toward a pose target: v_t = -K_t e_t, v_a = -K_a e_a with
/// e_t = p_cur - p_tgt and e_a = log(R_tgt^T R_cur). The same law serves both
/// arms.
inline Twist ee_velocity_command(const Pose& current, const Pose& target, const ControllerConfig& cfg) {
  Twist tw;
  tw.linear = -cfg.ee_gain_translation * (current.position - target.position);
  tw.angular = -cfg.ee_gain_rotation * log_so3(target.orientation.transpose() * current.orientation);
  return tw;
}

}  // namespace cosrod
