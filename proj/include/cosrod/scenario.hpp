#pragma once

// Scenario description: object preset, boundary-condition mode, control-point
// layout, objective source, controller and plant settings. Scenarios load
// from and save to a YAML document; every physical quantity carries its SI
// unit in the key name.

#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "cosrod/controller.hpp"
#include "cosrod/plant.hpp"

namespace cosrod {

/// Rod description as configured: geometry plus elastic constants, with
/// optional explicit stiffness diagonals overriding the section formulas.
struct ObjectSpec {
  double length = 1.0;            // [m]
  int n_steps = 100;
  double youngs_modulus = 1e6;    // [Pa]
  double poisson_ratio = 0.3;
  CrossSection section = CircularSection{1e-3};
  Vec3 distributed_force = Vec3::Zero();   // [N/m]
  Vec3 distributed_moment = Vec3::Zero();  // [N m/m]
  std::optional<Vec3> kt_diag{};           // [N]
  std::optional<Vec3> kr_diag{};           // [N m^2]

  RodParameters params() const {
    StiffnessBuilder builder{youngs_modulus, poisson_ratio, section};
    RodParameters p;
    p.length = length;
    p.n_steps = n_steps;
    p.Kt = kt_diag ? Mat3(kt_diag->asDiagonal()) : builder.translational();
    p.Kr = kr_diag ? Mat3(kr_diag->asDiagonal()) : builder.rotational();
    p.f_dist = distributed_force;
    p.l_dist = distributed_moment;
    p.validate();
    return p;
  }
};

struct GroundTruthSampleSource {
  std::uint64_t seed = 1;
};
struct ExplicitPointsSource {
  std::vector<Vec3> points;
};
using ObjectiveSource = std::variant<GroundTruthSampleSource, ExplicitPointsSource>;

struct Scenario {
  std::string name = "scenario";
  ObjectSpec object;
  BcMode mode = BcMode::BiArm;
  ControlPointLayout layout;
  ObjectiveSource objective_source = GroundTruthSampleSource{1};
  ControllerConfig controller;

  // Plant
  double plant_kt_multiplier = 1.0;
  double plant_kr_multiplier = 1.0;
  double marker_noise_sigma = 0.0;   // [m]
  double wrench_noise_force = 0.0;   // [N]
  double wrench_noise_moment = 0.0;  // [N m]
  double dt = 0.1;                   // [s]
  double max_linear_speed = 0.5;     // [m/s]
  double max_angular_speed = 3.0;    // [rad/s]

  // Run
  std::uint64_t seed = 1;
  int repeat_count = 1;
  int max_iterations = 300;
  double init_perturb_translation = 0.03;  // [m]
  double init_perturb_rotation = 0.25;     // [rad]
  double fail_threshold = 3e-3;            // [m]

  RodParameters model_params() const { return object.params(); }

  RodParameters plant_params() const {
    RodParameters p = object.params();
    p.Kt *= plant_kt_multiplier;
    p.Kr *= plant_kr_multiplier;
    return p;
  }

  PlantConfig plant_config(std::uint64_t run_seed) const {
    PlantConfig cfg;
    cfg.true_params = plant_params();
    cfg.mode = mode;
    cfg.marker_noise_sigma = marker_noise_sigma;
    cfg.wrench_noise_force = wrench_noise_force;
    cfg.wrench_noise_moment = wrench_noise_moment;
    cfg.dt = dt;
    cfg.max_linear_speed = max_linear_speed;
    cfg.max_angular_speed = max_angular_speed;
    cfg.rng_seed = run_seed;
    return cfg;
  }

  void validate() const {
    model_params();  // throws on bad object spec
    layout.validate(object.length);
    controller.validate();
    if (!(plant_kt_multiplier > 0.0 && plant_kr_multiplier > 0.0))
      throw std::invalid_argument("Scenario: stiffness multipliers must be positive");
    if (repeat_count < 1 || max_iterations < 1)
      throw std::invalid_argument("Scenario: repeat_count and max_iterations must be >= 1");
    if (const auto* ep = std::get_if<ExplicitPointsSource>(&objective_source))
      if (ep->points.size() != static_cast<std::size_t>(layout.count()))
        throw std::invalid_argument("Scenario: explicit objective point count does not match layout");
  }
};

// ---------------------------------------------------------------------------
// Presets

inline std::vector<std::string> preset_names() {
  return {"rubber_band", "steel_cable", "sheathed_cable"};
}

/// Built-in object presets. The rubber band of ~0.6 m with a 10 mm square
/// section uses three markers; the 1 m cables use four.
inline Scenario make_preset(const std::string& name) {
  Scenario sc;
  sc.name = name;
  if (name == "rubber_band") {
    sc.object.length = 0.6;
    sc.object.youngs_modulus = 3.2e6;
    sc.object.poisson_ratio = 0.5;
    sc.object.section = SquareSection{0.01};
    sc.layout.arclengths = {0.15, 0.30, 0.45};
    sc.init_perturb_translation = 0.03;
    sc.init_perturb_rotation = 0.25;
  } else if (name == "steel_cable") {
    sc.object.length = 1.0;
    sc.object.youngs_modulus = 180e9;
    sc.object.poisson_ratio = 0.303;
    sc.object.section = CircularSection{2.5e-3};
    sc.layout.arclengths = {0.2, 0.4, 0.6, 0.8};
    sc.init_perturb_translation = 0.02;
    sc.init_perturb_rotation = 0.15;
  } else if (name == "sheathed_cable") {
    sc.object.length = 1.0;
    sc.object.youngs_modulus = 180e9;
    sc.object.poisson_ratio = 0.303;
    sc.object.section = CircularSection{1.5e-3};
    sc.layout.arclengths = {0.2, 0.4, 0.6, 0.8};
    sc.init_perturb_translation = 0.02;
    sc.init_perturb_rotation = 0.15;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  return sc;
}

// ---------------------------------------------------------------------------
// YAML (de)serialization

namespace detail {

inline Vec3 parse_vec3(const YAML::Node& node, const char* key) {
  if (!node.IsSequence() || node.size() != 3)
    throw std::runtime_error(std::string("scenario: '") + key + "' must be a 3-element sequence");
  return Vec3(node[0].as<double>(), node[1].as<double>(), node[2].as<double>());
}

inline YAML::Node emit_vec3(const Vec3& v) {
  YAML::Node n;
  n.SetStyle(YAML::EmitterStyle::Flow);
  n.push_back(v.x());
  n.push_back(v.y());
  n.push_back(v.z());
  return n;
}

inline BcMode parse_mode(const std::string& s) {
  if (s == "bi_arm") return BcMode::BiArm;
  if (s == "clamped_base") return BcMode::ClampedBase;
  throw std::runtime_error("scenario: mode must be 'bi_arm' or 'clamped_base', got '" + s + "'");
}

inline FeedbackMode parse_feedback(const std::string& s) {
  if (s == "vision") return FeedbackMode::Vision;
  if (s == "wrench") return FeedbackMode::ForceSensor;
  throw std::runtime_error("scenario: feedback_mode must be 'vision' or 'wrench', got '" + s + "'");
}

inline const char* feedback_string(FeedbackMode m) {
  return m == FeedbackMode::Vision ? "vision" : "wrench";
}

}  // namespace detail

inline Scenario scenario_from_yaml(const YAML::Node& root) {
  Scenario sc;
  if (root["name"]) sc.name = root["name"].as<std::string>();

  const YAML::Node obj = root["object"];
  if (!obj) throw std::runtime_error("scenario: missing 'object' section");
  sc.object.length = obj["length_m"].as<double>();
  if (obj["n_steps"]) sc.object.n_steps = obj["n_steps"].as<int>();
  sc.object.youngs_modulus = obj["youngs_modulus_pa"].as<double>();
  sc.object.poisson_ratio = obj["poisson_ratio"].as<double>();
  const YAML::Node sec = obj["section"];
  if (!sec) throw std::runtime_error("scenario: missing 'object.section'");
  const auto type = sec["type"].as<std::string>();
  if (type == "circular")
    sc.object.section = CircularSection{sec["radius_m"].as<double>()};
  else if (type == "square")
    sc.object.section = SquareSection{sec["side_m"].as<double>()};
  else
    throw std::runtime_error("scenario: section type must be 'circular' or 'square'");
  if (obj["distributed_force_n_per_m"])
    sc.object.distributed_force = detail::parse_vec3(obj["distributed_force_n_per_m"], "distributed_force_n_per_m");
  if (obj["distributed_moment_nm_per_m"])
    sc.object.distributed_moment = detail::parse_vec3(obj["distributed_moment_nm_per_m"], "distributed_moment_nm_per_m");
  if (obj["kt_diag_n"]) sc.object.kt_diag = detail::parse_vec3(obj["kt_diag_n"], "kt_diag_n");
  if (obj["kr_diag_nm2"]) sc.object.kr_diag = detail::parse_vec3(obj["kr_diag_nm2"], "kr_diag_nm2");

  sc.mode = detail::parse_mode(root["mode"] ? root["mode"].as<std::string>() : "bi_arm");

  const YAML::Node cps = root["control_point_arclengths_m"];
  if (!cps || !cps.IsSequence()) throw std::runtime_error("scenario: missing 'control_point_arclengths_m'");
  sc.layout.arclengths.clear();
  for (const auto& v : cps) sc.layout.arclengths.push_back(v.as<double>());

  const YAML::Node objective = root["objective"];
  if (!objective) throw std::runtime_error("scenario: missing 'objective' section");
  const auto otype = objective["type"].as<std::string>();
  if (otype == "ground_truth_sample") {
    sc.objective_source = GroundTruthSampleSource{objective["seed"].as<std::uint64_t>()};
  } else if (otype == "explicit_points") {
    ExplicitPointsSource src;
    for (const auto& p : objective["points_m"]) src.points.push_back(detail::parse_vec3(p, "points_m"));
    sc.objective_source = src;
  } else {
    throw std::runtime_error("scenario: objective type must be 'ground_truth_sample' or 'explicit_points'");
  }

  if (const YAML::Node c = root["controller"]) {
    if (c["gain"]) sc.controller.gain = c["gain"].as<double>();
    if (c["damping"]) {
      const auto s = c["damping"].as<std::string>();
      if (s != "auto") sc.controller.damping = c["damping"].as<double>();
    }
    if (c["convergence_tol_m"]) sc.controller.convergence_tol = c["convergence_tol_m"].as<double>();
    if (c["sigma_min_threshold"]) sc.controller.sigma_min_threshold = c["sigma_min_threshold"].as<double>();
    if (c["ee_gain_translation_per_s"]) sc.controller.ee_gain_translation = c["ee_gain_translation_per_s"].as<double>();
    if (c["ee_gain_rotation_per_s"]) sc.controller.ee_gain_rotation = c["ee_gain_rotation_per_s"].as<double>();
    if (c["feedback_mode"]) sc.controller.feedback = detail::parse_feedback(c["feedback_mode"].as<std::string>());
    if (const YAML::Node d = c["perturbation"]) {
      PerturbationDeltas deltas = PerturbationDeltas::ForParams(sc.object.params());
      if (d["position_m"]) deltas.position = d["position_m"].as<double>();
      if (d["rotation_rad"]) deltas.rotation = d["rotation_rad"].as<double>();
      if (d["force_n"]) deltas.force = d["force_n"].as<double>();
      if (d["moment_nm"]) deltas.moment = d["moment_nm"].as<double>();
      sc.controller.deltas = deltas;
    }
  }

  if (const YAML::Node p = root["plant"]) {
    if (p["stiffness_multiplier_kt"]) sc.plant_kt_multiplier = p["stiffness_multiplier_kt"].as<double>();
    if (p["stiffness_multiplier_kr"]) sc.plant_kr_multiplier = p["stiffness_multiplier_kr"].as<double>();
    if (p["marker_noise_sigma_m"]) sc.marker_noise_sigma = p["marker_noise_sigma_m"].as<double>();
    if (p["wrench_noise_sigma_n"]) sc.wrench_noise_force = p["wrench_noise_sigma_n"].as<double>();
    if (p["wrench_noise_sigma_nm"]) sc.wrench_noise_moment = p["wrench_noise_sigma_nm"].as<double>();
    if (p["dt_s"]) sc.dt = p["dt_s"].as<double>();
    if (p["max_linear_speed_m_per_s"]) sc.max_linear_speed = p["max_linear_speed_m_per_s"].as<double>();
    if (p["max_angular_speed_rad_per_s"]) sc.max_angular_speed = p["max_angular_speed_rad_per_s"].as<double>();
  }

  if (const YAML::Node r = root["run"]) {
    if (r["seed"]) sc.seed = r["seed"].as<std::uint64_t>();
    if (r["repeat_count"]) sc.repeat_count = r["repeat_count"].as<int>();
    if (r["max_iterations"]) sc.max_iterations = r["max_iterations"].as<int>();
    if (r["initial_perturbation_translation_m"])
      sc.init_perturb_translation = r["initial_perturbation_translation_m"].as<double>();
    if (r["initial_perturbation_rotation_rad"])
      sc.init_perturb_rotation = r["initial_perturbation_rotation_rad"].as<double>();
    if (r["fail_threshold_m"]) sc.fail_threshold = r["fail_threshold_m"].as<double>();
  }

  sc.validate();
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw std::runtime_error("failed to load scenario '" + path + "': " + e.what());
  }
  return scenario_from_yaml(root);
}

inline std::string scenario_to_yaml(const Scenario& sc) {
  YAML::Node root;
  root["name"] = sc.name;

  YAML::Node obj;
  obj["length_m"] = sc.object.length;
  obj["n_steps"] = sc.object.n_steps;
  obj["youngs_modulus_pa"] = sc.object.youngs_modulus;
  obj["poisson_ratio"] = sc.object.poisson_ratio;
  YAML::Node sec;
  if (const auto* c = std::get_if<CircularSection>(&sc.object.section)) {
    sec["type"] = "circular";
    sec["radius_m"] = c->radius;
  } else {
    sec["type"] = "square";
    sec["side_m"] = std::get<SquareSection>(sc.object.section).side;
  }
  obj["section"] = sec;
  if (!sc.object.distributed_force.isZero())
    obj["distributed_force_n_per_m"] = detail::emit_vec3(sc.object.distributed_force);
  if (!sc.object.distributed_moment.isZero())
    obj["distributed_moment_nm_per_m"] = detail::emit_vec3(sc.object.distributed_moment);
  if (sc.object.kt_diag) obj["kt_diag_n"] = detail::emit_vec3(*sc.object.kt_diag);
  if (sc.object.kr_diag) obj["kr_diag_nm2"] = detail::emit_vec3(*sc.object.kr_diag);
  root["object"] = obj;

  root["mode"] = to_string(sc.mode);
  YAML::Node cps;
  cps.SetStyle(YAML::EmitterStyle::Flow);
  for (double s : sc.layout.arclengths) cps.push_back(s);
  root["control_point_arclengths_m"] = cps;

  YAML::Node objective;
  if (const auto* gt = std::get_if<GroundTruthSampleSource>(&sc.objective_source)) {
    objective["type"] = "ground_truth_sample";
    objective["seed"] = gt->seed;
  } else {
    objective["type"] = "explicit_points";
    YAML::Node pts;
    for (const auto& p : std::get<ExplicitPointsSource>(sc.objective_source).points)
      pts.push_back(detail::emit_vec3(p));
    objective["points_m"] = pts;
  }
  root["objective"] = objective;

  YAML::Node c;
  c["gain"] = sc.controller.gain;
  if (sc.controller.damping)
    c["damping"] = *sc.controller.damping;
  else
    c["damping"] = "auto";
  c["convergence_tol_m"] = sc.controller.convergence_tol;
  c["sigma_min_threshold"] = sc.controller.sigma_min_threshold;
  c["ee_gain_translation_per_s"] = sc.controller.ee_gain_translation;
  c["ee_gain_rotation_per_s"] = sc.controller.ee_gain_rotation;
  c["feedback_mode"] = detail::feedback_string(sc.controller.feedback);
  if (sc.controller.deltas) {
    YAML::Node d;
    d["position_m"] = sc.controller.deltas->position;
    d["rotation_rad"] = sc.controller.deltas->rotation;
    d["force_n"] = sc.controller.deltas->force;
    d["moment_nm"] = sc.controller.deltas->moment;
    c["perturbation"] = d;
  }
  root["controller"] = c;

  YAML::Node p;
  p["stiffness_multiplier_kt"] = sc.plant_kt_multiplier;
  p["stiffness_multiplier_kr"] = sc.plant_kr_multiplier;
  p["marker_noise_sigma_m"] = sc.marker_noise_sigma;
  p["wrench_noise_sigma_n"] = sc.wrench_noise_force;
  p["wrench_noise_sigma_nm"] = sc.wrench_noise_moment;
  p["dt_s"] = sc.dt;
  p["max_linear_speed_m_per_s"] = sc.max_linear_speed;
  p["max_angular_speed_rad_per_s"] = sc.max_angular_speed;
  root["plant"] = p;

  YAML::Node r;
  r["seed"] = sc.seed;
  r["repeat_count"] = sc.repeat_count;
  r["max_iterations"] = sc.max_iterations;
  r["initial_perturbation_translation_m"] = sc.init_perturb_translation;
  r["initial_perturbation_rotation_rad"] = sc.init_perturb_rotation;
  r["fail_threshold_m"] = sc.fail_threshold;
  root["run"] = r;

  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

}  // namespace cosrod
