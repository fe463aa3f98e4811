#pragma once

// Experiment orchestration: reachable target generation, the closed-loop
// scenario runner (shooting at t=0, then measure -> control -> command ->
// plant step), per-iteration traces, timing sidecars and JSON summaries.
//
// Trace files contain only deterministic quantities so a rerun with the same
// seed is byte-identical; wall-clock timings go to a sidecar file.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cosrod/controller.hpp"
#include "cosrod/plant.hpp"
#include "cosrod/scenario.hpp"
#include "cosrod/shooting.hpp"

namespace cosrod {

class TargetGenerationError : public std::runtime_error {
 public:
  explicit TargetGenerationError(const std::string& what) : std::runtime_error(what) {}
};

struct GeneratedTarget {
  Objective objective;
  BoundaryState gamma0_star;  // diagnostics only, never given to the controller
};

namespace detail {

/// Largest curvature/twist rate and rate-of-stretch deviation along a shape.
struct StrainExtrema {
  double max_angular = 0.0;  // max ||u|| [1/m]
  double max_linear = 0.0;   // max ||v - v_rest||
};

inline StrainExtrema strain_extrema(const RodShape& shape, const RodParameters& params) {
  const Mat3 kt_inv = params.Kt.inverse();
  const Mat3 kr_inv = params.Kr.inverse();
  StrainExtrema ex;
  for (const auto& smp : shape.samples) {
    const Vec3 v_dev = kt_inv * (smp.state.R.transpose() * smp.state.n);
    const Vec3 u = kr_inv * (smp.state.R.transpose() * smp.state.m) + params.u_rest;
    ex.max_linear = std::max(ex.max_linear, v_dev.norm());
    ex.max_angular = std::max(ex.max_angular, u.norm());
  }
  return ex;
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(gauss(rng), gauss(rng), gauss(rng));
  } while (v.norm() < 1e-12);
  return v.normalized();
}

struct SampledShape {
  BoundaryState gamma0;
  RodShape shape;
};

/// Draws a base wrench from per-component Gaussians and keeps it when the
/// integrated shape stays within the strain bounds (bending regime, no
/// buckling-level axial loads, near-inextensible).
inline std::optional<SampledShape> sample_bounded_shape(const RodParameters& params,
                                                        const Pose& base_pose, double sigma_force,
                                                        double sigma_moment, double max_total_bend,
                                                        double max_stretch, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  SampledShape out;
  out.gamma0.p = base_pose.position;
  out.gamma0.R = base_pose.orientation;
  for (int i = 0; i < 3; ++i) out.gamma0.n[i] = sigma_force * gauss(rng);
  for (int i = 0; i < 3; ++i) out.gamma0.m[i] = sigma_moment * gauss(rng);
  try {
    out.shape = integrate_ivp(out.gamma0, params);
  } catch (const IntegrationError&) {
    return std::nullopt;
  }
  const StrainExtrema strain = strain_extrema(out.shape, params);
  if (strain.max_angular * params.length > max_total_bend || strain.max_linear > max_stretch)
    return std::nullopt;
  return out;
}

}  // namespace detail

/// Rejection-samples a wrench whose integrated shape stays in the stable
/// region with bounded strain, and returns the control-point positions of
/// that shape as the objective. The hidden wrench is kept for diagnostics.
inline GeneratedTarget generate_target(const RodParameters& params_true,
                                       const ControlPointLayout& layout, BcMode mode,
                                       const Pose& base_pose, std::uint64_t seed,
                                       double sigma_min_threshold = 1e-8,
                                       int budget = 200) {
  params_true.validate();
  layout.validate(params_true.length);

  const double bend_stiffness = 0.5 * (params_true.Kr(0, 0) + params_true.Kr(1, 1));
  const double L = params_true.length;
  const double sigma_moment = 0.5 * bend_stiffness / L;
  const double sigma_force = 0.4 * bend_stiffness / (L * L);

  const PerturbationDeltas deltas = PerturbationDeltas::ForParams(params_true);
  std::mt19937_64 rng(seed);

  for (int attempt = 0; attempt < budget; ++attempt) {
    const auto sample = detail::sample_bounded_shape(params_true, base_pose, sigma_force,
                                                     sigma_moment, 2.5, 0.05, rng);
    if (!sample) continue;

    const DeformationJacobian jac =
        compute_jacobian(sample->gamma0, params_true, layout, mode, deltas);
    if (stability_margin(jac) <= sigma_min_threshold) continue;

    GeneratedTarget target;
    target.gamma0_star = sample->gamma0;
    target.objective.points = positions_at(sample->shape, layout.arclengths);
    return target;
  }
  throw TargetGenerationError("generate_target: rejection budget exhausted after " +
                              std::to_string(budget) + " samples");
}

// ---------------------------------------------------------------------------
// Traces

struct TraceRecord {
  int iteration = 0;
  double time_s = 0.0;
  std::vector<Vec3> markers;
  Eigen::VectorXd point_errors;  // [m], per control point
  double mean_error = 0.0;
  double max_error = 0.0;
  Eigen::VectorXd singular_values;
  double stability_margin = 0.0;
  std::optional<double> cosine{};
  double gain = 0.0;
  double damping = 0.0;
  BoundaryState cmd_gamma0;
  BoundaryState true_gamma0;
  Pose base_gripper;
  Pose tip_gripper;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void append_vec3(std::string& row, const Vec3& v) {
  for (int i = 0; i < 3; ++i) {
    row += ',';
    row += fmt(v[i]);
  }
}

inline void append_gamma(std::string& row, const BoundaryState& g) {
  append_vec3(row, g.p);
  append_vec3(row, log_so3(g.R));
  append_vec3(row, g.n);
  append_vec3(row, g.m);
}

inline void append_pose(std::string& row, const Pose& pose) {
  append_vec3(row, pose.position);
  append_vec3(row, log_so3(pose.orientation));
}

}  // namespace detail

inline std::string trace_header(int n_c, int m_l) {
  std::string h = "iteration,time_s";
  static const char axis[3] = {'x', 'y', 'z'};
  for (int i = 0; i < n_c; ++i)
    for (int a = 0; a < 3; ++a) h += ",marker" + std::to_string(i) + "_" + axis[a];
  for (int i = 0; i < n_c; ++i) h += ",err_point" + std::to_string(i) + "_m";
  h += ",mean_error_m,max_error_m";
  for (int j = 0; j < m_l; ++j) h += ",sv" + std::to_string(j);
  h += ",stability_margin,cosine_similarity,cosine_valid,gain,damping";
  for (const char* g : {"cmd", "true"})
    for (const char* b : {"_p_", "_rv_", "_n_", "_m_"})
      for (int a = 0; a < 3; ++a) h += std::string(",") + g + b + axis[a];
  for (const char* g : {"base", "tip"})
    for (const char* b : {"_p_", "_rv_"})
      for (int a = 0; a < 3; ++a) h += std::string(",") + g + b + axis[a];
  return h;
}

inline std::string trace_row(const TraceRecord& rec) {
  std::string row = std::to_string(rec.iteration) + ',' + detail::fmt(rec.time_s);
  for (const auto& m : rec.markers) detail::append_vec3(row, m);
  // append_vec3 prefixes a comma, so scalar appends go through fmt directly
  for (int i = 0; i < rec.point_errors.size(); ++i) row += ',' + detail::fmt(rec.point_errors[i]);
  row += ',' + detail::fmt(rec.mean_error) + ',' + detail::fmt(rec.max_error);
  for (int j = 0; j < rec.singular_values.size(); ++j) row += ',' + detail::fmt(rec.singular_values[j]);
  row += ',' + detail::fmt(rec.stability_margin);
  row += ',' + detail::fmt(rec.cosine.value_or(0.0)) + ',' + (rec.cosine ? "1" : "0");
  row += ',' + detail::fmt(rec.gain) + ',' + detail::fmt(rec.damping);
  detail::append_gamma(row, rec.cmd_gamma0);
  detail::append_gamma(row, rec.true_gamma0);
  detail::append_pose(row, rec.base_gripper);
  detail::append_pose(row, rec.tip_gripper);
  return row;
}

// ---------------------------------------------------------------------------
// Cosine-similarity aggregation

struct CosineStats {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stddev = 0.0;
  int count = 0;
};

inline CosineStats aggregate_cosines(const std::vector<double>& values) {
  CosineStats st;
  st.count = static_cast<int>(values.size());
  if (values.empty()) return st;
  double sum = 0.0;
  for (double v : values) sum += v;
  st.mean = sum / values.size();
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - st.mean) * (v - st.mean);
    st.stddev = std::sqrt(sq / (values.size() - 1));
  }
  return st;
}

// ---------------------------------------------------------------------------
// Scenario runner

struct RunResult {
  int run_index = 0;
  bool converged = false;
  bool failed = false;
  std::string failure_reason;
  int iterations = 0;  // trace rows written
  double initial_mean_error = std::numeric_limits<double>::quiet_NaN();
  double final_mean_error = std::numeric_limits<double>::quiet_NaN();
  double final_max_error = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> final_point_errors;
  std::vector<Vec3> final_markers;
  CosineStats cosine;
  double mean_step_ms = 0.0;
  int shooting_iterations = 0;
  double shooting_residual = 0.0;
  std::vector<TraceRecord> trace;
  std::vector<double> step_ms;
};

struct ScenarioResult {
  Scenario scenario;
  Objective objective;
  std::optional<BoundaryState> gamma0_star{};
  std::vector<RunResult> runs;

  int converged_count() const {
    int n = 0;
    for (const auto& r : runs) n += r.converged ? 1 : 0;
    return n;
  }
  int failed_count() const {
    int n = 0;
    for (const auto& r : runs) n += r.failed ? 1 : 0;
    return n;
  }
  /// Table-style aggregate: mean of the per-run cosine means and the
  /// inter-run standard deviation of those means.
  CosineStats cosine_across_runs() const {
    std::vector<double> means;
    for (const auto& r : runs)
      if (r.cosine.count > 0) means.push_back(r.cosine.mean);
    return aggregate_cosines(means);
  }
  double mean_step_ms() const {
    double total = 0.0;
    int count = 0;
    for (const auto& r : runs)
      for (double ms : r.step_ms) {
        total += ms;
        ++count;
      }
    return count ? total / count : 0.0;
  }
};

namespace detail {

inline std::uint64_t run_seed(std::uint64_t scenario_seed, int run_index) {
  // SplitMix64 step keeps per-run streams decorrelated.
  std::uint64_t z = scenario_seed + 0x9e3779b97f4a7c15ull * (run_index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Per-run scale of the initial pose perturbation: a deterministic 0.5..2.0
/// ramp when the scenario repeats, so repeated runs start from visibly
/// different configurations.
inline double perturbation_scale(int run_index, int repeat_count) {
  if (repeat_count <= 1) return 1.0;
  return 0.5 + 1.5 * static_cast<double>(run_index) / (repeat_count - 1);
}

/// Rigid-body displacement of a rod state about its base point.
inline BoundaryState rigid_offset(const BoundaryState& gamma0, const Vec3& translation,
                                  const Vec3& rotation_vec) {
  const Mat3 Rd = exp_so3(rotation_vec);
  BoundaryState out;
  out.p = gamma0.p + translation;
  out.R = Rd * gamma0.R;
  out.n = Rd * gamma0.n;
  out.m = Rd * gamma0.m;
  return out;
}

/// Initial object configuration: a feasible bent shape (bounded random
/// wrench integrated from the rest base pose) under a random rigid offset.
/// Mirrors hand-guiding a real rod to a random start: the object imposes
/// feasibility, so the grippers never load the rod towards buckling. The
/// translation magnitude sets the rigid offset and the tip-deflection scale;
/// the rotation magnitude sets the bend scale [rad].
inline BoundaryState sample_initial_gamma0(const RodParameters& params_true, BcMode mode,
                                           double d_trans, double d_rot, std::mt19937_64& rng) {
  const double bend_stiffness = 0.5 * (params_true.Kr(0, 0) + params_true.Kr(1, 1));
  const double L = params_true.length;
  const double sigma_moment = d_rot * bend_stiffness / L;
  const double sigma_force = 3.0 * d_trans * bend_stiffness / (L * L * L);
  for (int attempt = 0; attempt < 200; ++attempt) {
    const auto sample =
        sample_bounded_shape(params_true, Pose{}, sigma_force, sigma_moment, 2.5, 0.05, rng);
    if (!sample) continue;
    if (mode == BcMode::ClampedBase) return sample->gamma0;  // base frozen at the rest pose
    return rigid_offset(sample->gamma0, d_trans * random_unit(rng),
                        d_rot * random_unit(rng));
  }
  throw std::runtime_error("sample_initial_gamma0: could not draw a feasible configuration");
}

}  // namespace detail

/// Executes one run of a scenario: settle the perturbed plant, estimate the
/// initial values by shooting, then loop the controller until the mean error
/// drops below the convergence tolerance. Faults and non-convergence are
/// recorded on the result, not thrown.
inline RunResult run_once(const Scenario& sc, const Objective& objective, int run_index) {
  RunResult run;
  run.run_index = run_index;

  const RodParameters model = sc.model_params();
  const PlantConfig pcfg = sc.plant_config(detail::run_seed(sc.seed, run_index));
  std::mt19937_64 rng(pcfg.rng_seed);

  const double scale = detail::perturbation_scale(run_index, sc.repeat_count);

  PlantState plant;
  try {
    const BoundaryState init_gamma0 = detail::sample_initial_gamma0(
        pcfg.true_params, sc.mode, scale * sc.init_perturb_translation,
        scale * sc.init_perturb_rotation, rng);
    const RodShape init_shape = integrate_ivp(init_gamma0, pcfg.true_params);
    Vec6 warm;
    warm.head<3>() = init_gamma0.n;
    warm.tail<3>() = init_gamma0.m;
    plant = detail::settle_plant(init_shape.base_pose(), init_shape.tip_pose(), pcfg, warm, 0.0);
  } catch (const std::exception& e) {
    run.failed = true;
    run.failure_reason = std::string("initial settle failed: ") + e.what();
    return run;
  }

  // t = 0: estimate the initial values from the measured markers (V-B).
  ControllerState state;
  {
    const auto markers = measure_markers(plant, sc.layout, pcfg, rng);
    ShootingProblem problem;
    problem.base = plant.base_gripper;
    problem.residual = ControlPointResidual{sc.layout, markers};
    const ShootingResult est = solve_shooting(problem, model, Vec6::Zero(), 1e-6, 100);
    run.shooting_iterations = est.iterations;
    run.shooting_residual = est.residual_norm;
    if (!est.converged) {
      run.failed = true;
      run.failure_reason = "shooting estimation at t=0 did not converge (residual " +
                           std::to_string(est.residual_norm) + ")";
      return run;
    }
    state.gamma0_hat = est.gamma0;
  }

  std::vector<double> cosines;
  for (int k = 0; k < sc.max_iterations; ++k) {
    const auto markers = measure_markers(plant, sc.layout, pcfg, rng);
    const ErrorVector eps = ErrorVector::Between(objective, markers);

    std::optional<WrenchReading> wrench;
    std::optional<Pose> base_pose;
    if (sc.controller.feedback == FeedbackMode::ForceSensor) {
      wrench = measure_base_wrench(plant, pcfg, rng);
      base_pose = plant.base_gripper;
    }

    ControlStepResult step;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      step = control_step(state, markers, objective, model, sc.layout, sc.mode, sc.controller,
                          wrench, base_pose);
    } catch (const std::exception& e) {
      run.failed = true;
      run.failure_reason = std::string("controller fault at iteration ") + std::to_string(k) +
                           ": " + e.what();
      break;
    }
    const auto t1 = std::chrono::steady_clock::now();
    run.step_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());

    TraceRecord rec;
    rec.iteration = k;
    rec.time_s = plant.clock;
    rec.markers = markers;
    rec.point_errors = eps.norms;
    rec.mean_error = eps.mean();
    rec.max_error = eps.max();
    rec.singular_values = step.diag.singular_values;
    rec.stability_margin = step.diag.stability_margin;
    rec.cosine = step.diag.cosine_similarity;
    rec.gain = step.diag.gain_used;
    rec.damping = step.diag.damping_used;
    rec.cmd_gamma0 = step.gamma0_next;
    rec.true_gamma0 = plant.true_gamma0;
    rec.base_gripper = plant.base_gripper;
    rec.tip_gripper = plant.tip_gripper;
    run.trace.push_back(std::move(rec));
    if (step.diag.cosine_similarity) cosines.push_back(*step.diag.cosine_similarity);

    if (eps.mean() < sc.controller.convergence_tol) {
      run.converged = true;
      break;
    }

    Twist tip_twist = ee_velocity_command(plant.tip_gripper, step.tip_target, sc.controller);
    std::optional<Twist> base_twist;
    if (sc.mode == BcMode::BiArm && step.base_target)
      base_twist = ee_velocity_command(plant.base_gripper, *step.base_target, sc.controller);

    // Coordinate the arms: scale both twists by the worst saturation factor
    // so the grippers cover equal fractions of their commanded motion. With
    // per-arm clipping the realized pose pair can leave the feasible
    // interpolation path and pull the rod taut.
    double coord = 1.0;
    auto factor = [&](const Twist& tw) {
      coord = std::min(coord, tw.linear.norm() > pcfg.max_linear_speed
                                  ? pcfg.max_linear_speed / tw.linear.norm()
                                  : 1.0);
      coord = std::min(coord, tw.angular.norm() > pcfg.max_angular_speed
                                  ? pcfg.max_angular_speed / tw.angular.norm()
                                  : 1.0);
    };
    factor(tip_twist);
    if (base_twist) factor(*base_twist);
    tip_twist.linear *= coord;
    tip_twist.angular *= coord;
    if (base_twist) {
      base_twist->linear *= coord;
      base_twist->angular *= coord;
    }

    try {
      plant = plant_step(plant, base_twist, tip_twist, pcfg);
    } catch (const std::exception& e) {
      run.failed = true;
      run.failure_reason = std::string("plant fault at iteration ") + std::to_string(k) + ": " +
                           e.what();
      break;
    }
  }

  run.iterations = static_cast<int>(run.trace.size());
  run.cosine = aggregate_cosines(cosines);
  if (!run.step_ms.empty()) {
    double total = 0.0;
    for (double ms : run.step_ms) total += ms;
    run.mean_step_ms = total / run.step_ms.size();
  }
  if (!run.trace.empty()) {
    const auto& first = run.trace.front();
    const auto& last = run.trace.back();
    run.initial_mean_error = first.mean_error;
    run.final_mean_error = last.mean_error;
    run.final_max_error = last.max_error;
    run.final_point_errors.assign(last.point_errors.data(),
                                  last.point_errors.data() + last.point_errors.size());
    run.final_markers = last.markers;
  }
  if (!run.converged && !run.failed &&
      !(run.final_mean_error <= sc.fail_threshold))
    run.failed = true;  // exceeded the failure threshold (or never measured)
  return run;
}

inline Objective resolve_objective(const Scenario& sc, std::optional<BoundaryState>* gamma0_star) {
  if (const auto* ep = std::get_if<ExplicitPointsSource>(&sc.objective_source)) {
    if (gamma0_star) gamma0_star->reset();
    return Objective{ep->points};
  }
  const auto& gt = std::get<GroundTruthSampleSource>(sc.objective_source);
  const RodParameters true_params = sc.plant_params();
  const RodShape rest = integrate_ivp(BoundaryState::Rest(), true_params);
  const GeneratedTarget target =
      generate_target(true_params, sc.layout, sc.mode, rest.base_pose(), gt.seed,
                      sc.controller.sigma_min_threshold);
  if (gamma0_star) *gamma0_star = target.gamma0_star;
  return target.objective;
}

inline ScenarioResult run_scenario(const Scenario& sc) {
  sc.validate();
  ScenarioResult result;
  result.scenario = sc;
  result.objective = resolve_objective(sc, &result.gamma0_star);
  for (int i = 0; i < sc.repeat_count; ++i)
    result.runs.push_back(run_once(sc, result.objective, i));
  return result;
}

// ---------------------------------------------------------------------------
// File output

namespace detail {

inline nlohmann::json run_to_json(const RunResult& run) {
  nlohmann::json j;
  j["run"] = run.run_index;
  j["converged"] = run.converged;
  j["failed"] = run.failed;
  j["failure_reason"] = run.failure_reason;
  j["iterations"] = run.iterations;
  j["initial_mean_error_m"] = run.initial_mean_error;
  j["final_mean_error_m"] = run.final_mean_error;
  j["final_max_error_m"] = run.final_max_error;
  j["final_point_errors_m"] = run.final_point_errors;
  auto markers = nlohmann::json::array();
  for (const auto& m : run.final_markers) markers.push_back({m.x(), m.y(), m.z()});
  j["final_markers_m"] = markers;
  j["cosine_mean"] = run.cosine.count ? run.cosine.mean : 0.0;
  j["cosine_std"] = run.cosine.stddev;
  j["cosine_steps"] = run.cosine.count;
  j["mean_step_ms"] = run.mean_step_ms;
  j["shooting_iterations"] = run.shooting_iterations;
  j["shooting_residual_m"] = run.shooting_residual;
  return j;
}

}  // namespace detail

inline nlohmann::json summary_json(const ScenarioResult& result) {
  nlohmann::json j;
  j["scenario"] = result.scenario.name;
  j["mode"] = to_string(result.scenario.mode);
  j["feedback_mode"] = detail::feedback_string(result.scenario.controller.feedback);
  j["n_runs"] = result.runs.size();
  j["converged_runs"] = result.converged_count();
  j["failed_runs"] = result.failed_count();
  auto obj = nlohmann::json::array();
  for (const auto& p : result.objective.points) obj.push_back({p.x(), p.y(), p.z()});
  j["objective_points_m"] = obj;
  auto runs = nlohmann::json::array();
  for (const auto& r : result.runs) runs.push_back(detail::run_to_json(r));
  j["runs"] = runs;
  const CosineStats across = result.cosine_across_runs();
  j["cosine_mean_across_runs"] = across.count ? across.mean : 0.0;
  j["cosine_std_across_runs"] = across.stddev;
  j["mean_step_ms"] = result.mean_step_ms();
  return j;
}

/// Writes scenario.yaml, per-run trace.csv + timing.csv and summary.json
/// under out_dir/<scenario name>/. Returns the scenario directory.
inline std::filesystem::path write_scenario_outputs(const ScenarioResult& result,
                                                    const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  const fs::path dir = out_dir / result.scenario.name;
  fs::create_directories(dir);

  std::ofstream(dir / "scenario.yaml") << scenario_to_yaml(result.scenario);

  const int n_c = result.scenario.layout.count();
  const int m_l = column_count(result.scenario.mode);
  for (const auto& run : result.runs) {
    char sub[32];
    std::snprintf(sub, sizeof sub, "run_%03d", run.run_index);
    const fs::path run_dir = dir / sub;
    fs::create_directories(run_dir);

    std::ofstream trace(run_dir / "trace.csv");
    trace << trace_header(n_c, m_l) << '\n';
    for (const auto& rec : run.trace) trace << trace_row(rec) << '\n';

    std::ofstream timing(run_dir / "timing.csv");
    timing << "iteration,controller_step_ms\n";
    for (std::size_t i = 0; i < run.step_ms.size(); ++i)
      timing << i << ',' << detail::fmt(run.step_ms[i]) << '\n';
  }

  std::ofstream(dir / "summary.json") << summary_json(result).dump(2) << '\n';
  return dir;
}

}  // namespace cosrod
