#pragma once

// Simulated world: a ground-truth Cosserat rod held by virtual grippers,
// advanced quasi-statically under end-effector twist commands and observed
// through optionally noisy markers and a base wrench sensor. The plant's rod
// parameters may deliberately differ from the controller's model.

#include <optional>
#include <random>
#include <utility>

#include "cosrod/controller.hpp"
#include "cosrod/rod.hpp"
#include "cosrod/shooting.hpp"

namespace cosrod {

struct PlantConfig {
  RodParameters true_params;  // effective ground-truth parameters
  BcMode mode = BcMode::BiArm;
  double marker_noise_sigma = 0.0;   // [m], isotropic Gaussian per axis
  double wrench_noise_force = 0.0;   // [N]
  double wrench_noise_moment = 0.0;  // [N m]
  double dt = 0.1;                   // [s]
  double max_linear_speed = 0.5;     // [m/s]
  double max_angular_speed = 3.0;    // [rad/s]
  std::uint64_t rng_seed = 0;
  double bvp_tol = 1e-8;
  int bvp_max_iters = 100;

  void validate() const {
    true_params.validate();
    if (!(dt > 0.0)) throw std::invalid_argument("PlantConfig: dt must be positive");
    if (marker_noise_sigma < 0.0 || wrench_noise_force < 0.0 || wrench_noise_moment < 0.0)
      throw std::invalid_argument("PlantConfig: noise sigmas must be non-negative");
  }
};

struct PlantState {
  Pose base_gripper;
  Pose tip_gripper;
  BoundaryState true_gamma0;
  RodShape true_shape;
  double clock = 0.0;  // [s]
};

namespace detail {

inline PlantState settle_plant(Pose base, Pose tip, const PlantConfig& cfg, const Vec6& warm,
                               double clock) {
  PlantState st;
  st.base_gripper = base;
  st.tip_gripper = tip;
  st.true_gamma0 =
      solve_plant_bvp(base, tip, cfg.true_params, warm, cfg.bvp_tol, cfg.bvp_max_iters);
  st.true_shape = integrate_ivp(st.true_gamma0, cfg.true_params);
  st.clock = clock;
  return st;
}

inline Vec3 saturate(const Vec3& v, double max_norm) {
  const double n = v.norm();
  return (n > max_norm && n > 0.0) ? Vec3(v * (max_norm / n)) : v;
}

inline Pose interpolate_pose(const Pose& a, const Pose& b, double t) {
  return Pose{(1.0 - t) * a.position + t * b.position,
              a.orientation * exp_so3(t * log_so3(a.orientation.transpose() * b.orientation))};
}

/// Settle at the target poses, bisecting the gripper motion from the previous
/// poses when the direct warm-started solve fails. Each accepted sub-stage
/// refreshes the warm start, keeping the BVP in its quadratic-convergence
/// neighborhood along the path.
inline PlantState settle_with_continuation(const Pose& prev_base, const Pose& prev_tip,
                                           const Pose& base, const Pose& tip,
                                           const PlantConfig& cfg, const Vec6& warm, double clock,
                                           int depth = 6) {
  try {
    return settle_plant(base, tip, cfg, warm, clock);
  } catch (const PlantFault&) {
    if (depth <= 0) throw;
  }
  const Pose mid_base = interpolate_pose(prev_base, base, 0.5);
  const Pose mid_tip = interpolate_pose(prev_tip, tip, 0.5);
  const PlantState mid =
      settle_with_continuation(prev_base, prev_tip, mid_base, mid_tip, cfg, warm, clock, depth - 1);
  Vec6 mid_warm;
  mid_warm.head<3>() = mid.true_gamma0.n;
  mid_warm.tail<3>() = mid.true_gamma0.m;
  return settle_with_continuation(mid_base, mid_tip, base, tip, cfg, mid_warm, clock, depth - 1);
}

}  // namespace detail

/// Initial plant configuration for the requested gripper poses, settled by
/// continuation from the rest configuration.
inline PlantState make_plant(const PlantConfig& cfg, const Pose& base_pose, const Pose& tip_pose) {
  cfg.validate();
  const RodShape rest = integrate_ivp(BoundaryState::Rest(), cfg.true_params);
  return detail::settle_with_continuation(rest.base_pose(), rest.tip_pose(), base_pose, tip_pose,
                                          cfg, Vec6::Zero(), 0.0);
}

/// Advances the grippers under (saturated) twist commands over one dt and
/// re-settles the rod. In clamped-base mode the base pose is frozen and the
/// base twist is ignored.
inline PlantState plant_step(const PlantState& plant, const std::optional<Twist>& base_twist,
                             const Twist& tip_twist, const PlantConfig& cfg) {
  cfg.validate();
  auto advance = [&](const Pose& pose, const Twist& tw) {
    const Vec3 v = detail::saturate(tw.linear, cfg.max_linear_speed);
    const Vec3 w = detail::saturate(tw.angular, cfg.max_angular_speed);
    if (!v.allFinite() || !w.allFinite()) throw std::invalid_argument("plant_step: non-finite twist");
    return Pose{pose.position + cfg.dt * v, pose.orientation * exp_so3(cfg.dt * w)};
  };

  Pose base = plant.base_gripper;
  if (cfg.mode == BcMode::BiArm && base_twist) base = advance(base, *base_twist);
  const Pose tip = advance(plant.tip_gripper, tip_twist);

  Vec6 warm;
  warm.head<3>() = plant.true_gamma0.n;
  warm.tail<3>() = plant.true_gamma0.m;
  return detail::settle_with_continuation(plant.base_gripper, plant.tip_gripper, base, tip, cfg,
                                          warm, plant.clock + cfg.dt);
}

/// Marker positions at the control points: ground truth plus i.i.d. Gaussian
/// noise. Zero sigma draws nothing from the stream.
inline std::vector<Vec3> measure_markers(const PlantState& plant, const ControlPointLayout& layout,
                                         const PlantConfig& cfg, std::mt19937_64& rng) {
  layout.validate(cfg.true_params.length);
  std::vector<Vec3> points = positions_at(plant.true_shape, layout.arclengths);
  if (cfg.marker_noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.marker_noise_sigma);
    for (auto& p : points)
      for (int i = 0; i < 3; ++i) p[i] += noise(rng);
  }
  return points;
}

/// Base wrench sensor: true (n0, m0) plus Gaussian noise.
inline WrenchReading measure_base_wrench(const PlantState& plant, const PlantConfig& cfg,
                                         std::mt19937_64& rng) {
  WrenchReading reading{plant.true_gamma0.n, plant.true_gamma0.m};
  if (cfg.wrench_noise_force > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.wrench_noise_force);
    for (int i = 0; i < 3; ++i) reading.force[i] += noise(rng);
  }
  if (cfg.wrench_noise_moment > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.wrench_noise_moment);
    for (int i = 0; i < 3; ++i) reading.moment[i] += noise(rng);
  }
  return reading;
}

}  // namespace cosrod
