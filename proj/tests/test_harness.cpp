#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cosrod/cosrod.hpp"

using namespace cosrod;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("cosrod_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST(GenerateTarget, DeterministicAndBounded) {
  const Scenario sc = make_preset("rubber_band");
  const RodParameters params = sc.plant_params();
  const Pose base{};
  const GeneratedTarget a = generate_target(params, sc.layout, sc.mode, base, 7);
  const GeneratedTarget b = generate_target(params, sc.layout, sc.mode, base, 7);
  ASSERT_EQ(a.objective.points.size(), b.objective.points.size());
  for (std::size_t i = 0; i < a.objective.points.size(); ++i)
    EXPECT_EQ(a.objective.points[i], b.objective.points[i]);
  EXPECT_EQ(a.gamma0_star.n, b.gamma0_star.n);

  // strain bounds hold on the hidden shape
  const RodShape shape = integrate_ivp(a.gamma0_star, params);
  const auto strain = detail::strain_extrema(shape, params);
  EXPECT_LE(strain.max_angular * params.length, 2.5);
  EXPECT_LE(strain.max_linear, 0.05);
  // margin above the default threshold
  const DeformationJacobian jac = compute_jacobian(
      a.gamma0_star, params, sc.layout, sc.mode, PerturbationDeltas::ForParams(params));
  EXPECT_GT(stability_margin(jac), 1e-8);
}

TEST(GenerateTarget, ZeroWrenchGivesRestObjective) {
  const Scenario sc = make_preset("rubber_band");
  const RodParameters params = sc.plant_params();
  const RodShape rest = integrate_ivp(BoundaryState::Rest(), params);
  const auto expected = positions_at(rest, sc.layout.arclengths);
  // the sampler helper with zero wrench is the rest shape
  std::mt19937_64 rng(1);
  const auto sample = detail::sample_bounded_shape(params, Pose{}, 0.0, 0.0, 2.5, 0.05, rng);
  ASSERT_TRUE(sample.has_value());
  const auto points = positions_at(sample->shape, sc.layout.arclengths);
  for (std::size_t i = 0; i < points.size(); ++i)
    EXPECT_LT((points[i] - expected[i]).norm(), 1e-300);
}

TEST(CosineMetric, Examples) {
  Eigen::VectorXd a(6), b(6);
  a << 1, 0, 0, 0, 1, 0;
  EXPECT_DOUBLE_EQ(*displacement_cosine(a, a), 1.0);
  b << 0, 1, 0, -1, 0, 0;
  EXPECT_DOUBLE_EQ(*displacement_cosine(a, b), 0.0);
  // tiny vectors skipped
  EXPECT_FALSE(displacement_cosine(1e-10 * a, b).has_value());
  EXPECT_FALSE(displacement_cosine(a, 1e-10 * b).has_value());
}

TEST(CosineMetric, Aggregation) {
  const CosineStats st = aggregate_cosines({1.0, 0.9, 0.8});
  EXPECT_NEAR(st.mean, 0.9, 1e-15);
  EXPECT_NEAR(st.stddev, 0.1, 1e-12);
  EXPECT_EQ(st.count, 3);
  const CosineStats empty = aggregate_cosines({});
  EXPECT_EQ(empty.count, 0);
  EXPECT_TRUE(std::isnan(empty.mean));
}

TEST(Scenario, YamlRoundTrip) {
  Scenario sc = make_preset("steel_cable");
  sc.name = "steel_test";
  sc.mode = BcMode::ClampedBase;
  sc.objective_source = ExplicitPointsSource{{Vec3(0.1, 0, 0.2), Vec3(0.2, 0.1, 0.4),
                                              Vec3(0.1, 0.2, 0.6), Vec3(0, 0.1, 0.8)}};
  sc.controller.gain = 0.2;
  sc.controller.damping = 1e-5;
  sc.controller.feedback = FeedbackMode::ForceSensor;
  sc.plant_kt_multiplier = 0.5;
  sc.marker_noise_sigma = 2e-4;
  sc.seed = 99;
  sc.repeat_count = 3;
  sc.object.kt_diag = Vec3(100, 100, 300);

  const std::string yaml = scenario_to_yaml(sc);
  const Scenario back = scenario_from_yaml(YAML::Load(yaml));
  EXPECT_EQ(back.name, sc.name);
  EXPECT_EQ(back.mode, sc.mode);
  EXPECT_EQ(back.object.length, sc.object.length);
  EXPECT_EQ(back.object.youngs_modulus, sc.object.youngs_modulus);
  ASSERT_TRUE(back.object.kt_diag.has_value());
  EXPECT_EQ(*back.object.kt_diag, *sc.object.kt_diag);
  EXPECT_EQ(back.layout.arclengths, sc.layout.arclengths);
  EXPECT_EQ(back.controller.gain, sc.controller.gain);
  ASSERT_TRUE(back.controller.damping.has_value());
  EXPECT_EQ(*back.controller.damping, *sc.controller.damping);
  EXPECT_EQ(back.controller.feedback, FeedbackMode::ForceSensor);
  EXPECT_EQ(back.plant_kt_multiplier, sc.plant_kt_multiplier);
  EXPECT_EQ(back.marker_noise_sigma, sc.marker_noise_sigma);
  EXPECT_EQ(back.seed, sc.seed);
  EXPECT_EQ(back.repeat_count, sc.repeat_count);
  const auto& pts = std::get<ExplicitPointsSource>(back.objective_source).points;
  const auto& orig = std::get<ExplicitPointsSource>(sc.objective_source).points;
  ASSERT_EQ(pts.size(), orig.size());
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(pts[i], orig[i]);
}

TEST(Scenario, RejectsBadInput) {
  EXPECT_THROW(make_preset("nylon_rope"), std::invalid_argument);
  EXPECT_THROW(scenario_from_yaml(YAML::Load("name: x\nmode: tri_arm")), std::runtime_error);
  Scenario sc = make_preset("rubber_band");
  sc.objective_source = ExplicitPointsSource{{Vec3::Zero()}};  // wrong count
  EXPECT_THROW(sc.validate(), std::invalid_argument);
}

TEST(RunScenario, FixedPointConvergesImmediately) {
  Scenario sc = make_preset("rubber_band");
  // objective = the control points of the initial configuration itself:
  // no perturbation, explicit points from the rest shape
  sc.init_perturb_translation = 0.0;
  sc.init_perturb_rotation = 0.0;
  const RodShape rest = integrate_ivp(BoundaryState::Rest(), sc.plant_params());
  sc.objective_source = ExplicitPointsSource{positions_at(rest, sc.layout.arclengths)};
  sc.max_iterations = 10;
  const ScenarioResult result = run_scenario(sc);
  ASSERT_EQ(result.runs.size(), 1u);
  EXPECT_TRUE(result.runs[0].converged);
  EXPECT_EQ(result.runs[0].iterations, 1);  // converged at iteration 0
  EXPECT_LT(result.runs[0].final_mean_error, 1e-9);
}

TEST(RunScenario, TraceRecordsAreComplete) {
  Scenario sc = make_preset("rubber_band");
  sc.objective_source = GroundTruthSampleSource{5};
  sc.seed = 5;
  sc.max_iterations = 120;
  const ScenarioResult result = run_scenario(sc);
  const RunResult& run = result.runs[0];
  ASSERT_TRUE(run.converged);
  int expected_iteration = 0;
  for (const auto& rec : run.trace) {
    EXPECT_EQ(rec.iteration, expected_iteration++);
    EXPECT_TRUE(std::isfinite(rec.mean_error));
    EXPECT_TRUE(std::isfinite(rec.stability_margin));
    EXPECT_EQ(rec.markers.size(), static_cast<std::size_t>(sc.layout.count()));
    EXPECT_EQ(rec.point_errors.size(), sc.layout.count());
  }
  EXPECT_EQ(run.iterations, static_cast<int>(run.trace.size()));
  EXPECT_GT(run.cosine.count, 0);
  EXPECT_GT(run.cosine.mean, 0.9);
}

TEST(RunScenario, FailureIsDataNotACrash) {
  Scenario sc = make_preset("rubber_band");
  sc.objective_source = GroundTruthSampleSource{5};
  sc.seed = 5;
  sc.max_iterations = 3;  // not enough iterations to converge
  const ScenarioResult result = run_scenario(sc);
  EXPECT_FALSE(result.runs[0].converged);
  EXPECT_TRUE(result.runs[0].failed);  // final error above the 3 mm threshold
  EXPECT_EQ(result.converged_count(), 0);
  EXPECT_EQ(result.failed_count(), 1);
}

TEST(Outputs, TraceFilesRoundTrip) {
  Scenario sc = make_preset("rubber_band");
  sc.name = "roundtrip";
  sc.objective_source = GroundTruthSampleSource{11};
  sc.seed = 3;
  sc.max_iterations = 60;
  const ScenarioResult result = run_scenario(sc);
  ASSERT_TRUE(result.runs[0].converged);

  const fs::path out = temp_dir("roundtrip");
  const fs::path dir = write_scenario_outputs(result, out);
  EXPECT_TRUE(fs::exists(dir / "scenario.yaml"));
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "run_000" / "trace.csv"));
  EXPECT_TRUE(fs::exists(dir / "run_000" / "timing.csv"));

  const ParsedTrace trace = read_trace_csv(dir / "run_000" / "trace.csv");
  EXPECT_EQ(static_cast<int>(trace.rows.size()), result.runs[0].iterations);
  const int mean_col = trace.column("mean_error_m");
  for (std::size_t k = 0; k < trace.rows.size(); ++k)
    EXPECT_EQ(trace.rows[k][mean_col], result.runs[0].trace[k].mean_error);

  // dump-shape path: rebuild the true shape at iteration 0 and compare the
  // marker positions recorded in the trace
  const RodShape shape = shape_from_trace(dir / "run_000" / "trace.csv", 0, true);
  const auto points = positions_at(shape, sc.layout.arclengths);
  for (int i = 0; i < sc.layout.count(); ++i) {
    const Vec3 rec(trace.rows[0][trace.column("marker" + std::to_string(i) + "_x")],
                   trace.rows[0][trace.column("marker" + std::to_string(i) + "_y")],
                   trace.rows[0][trace.column("marker" + std::to_string(i) + "_z")]);
    EXPECT_LT((points[i] - rec).norm(), 1e-9);
  }

  // summarize recomputes the summary from the traces alone
  const nlohmann::json recomputed = summarize_scenario_dir(dir);
  const nlohmann::json original = summary_json(result);
  EXPECT_EQ(recomputed["converged_runs"], original["converged_runs"]);
  EXPECT_EQ(recomputed["n_runs"], original["n_runs"]);
  EXPECT_NEAR(recomputed["runs"][0]["final_mean_error_m"].get<double>(),
              original["runs"][0]["final_mean_error_m"].get<double>(), 1e-15);
  EXPECT_NEAR(recomputed["cosine_mean_across_runs"].get<double>(),
              original["cosine_mean_across_runs"].get<double>(), 1e-12);
}

TEST(Outputs, SeededRerunsAreByteIdentical) {
  Scenario sc = make_preset("rubber_band");
  sc.name = "det";
  sc.objective_source = GroundTruthSampleSource{4};
  sc.seed = 8;
  sc.max_iterations = 40;
  sc.marker_noise_sigma = 2e-4;  // exercise the noise stream

  const fs::path out_a = temp_dir("det_a");
  const fs::path out_b = temp_dir("det_b");
  write_scenario_outputs(run_scenario(sc), out_a);
  write_scenario_outputs(run_scenario(sc), out_b);
  EXPECT_EQ(slurp(out_a / "det" / "run_000" / "trace.csv"),
            slurp(out_b / "det" / "run_000" / "trace.csv"));
  EXPECT_EQ(slurp(out_a / "det" / "scenario.yaml"), slurp(out_b / "det" / "scenario.yaml"));
}

TEST(Outputs, RepeatedRunsWriteSeparateTraces) {
  Scenario sc = make_preset("rubber_band");
  sc.name = "rep";
  sc.objective_source = GroundTruthSampleSource{4};
  sc.seed = 8;
  sc.repeat_count = 2;
  sc.max_iterations = 25;
  const ScenarioResult result = run_scenario(sc);
  const fs::path out = temp_dir("rep");
  const fs::path dir = write_scenario_outputs(result, out);
  EXPECT_TRUE(fs::exists(dir / "run_000" / "trace.csv"));
  EXPECT_TRUE(fs::exists(dir / "run_001" / "trace.csv"));
  // different initial perturbations produce different traces
  EXPECT_NE(slurp(dir / "run_000" / "trace.csv"), slurp(dir / "run_001" / "trace.csv"));
}
