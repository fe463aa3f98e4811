// cosrod CLI: run shape-servoing scenarios against the simulated plant,
// inspect presets, re-derive rod shapes from traces and recompute summaries.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cosrod/cosrod.hpp"

namespace {

namespace fs = std::filesystem;

void print_run_line(const cosrod::RunResult& run) {
  std::printf("  run %03d: %s  iterations=%d  initial=%.2f mm  final=%.4f mm  cosine=%.4f\n",
              run.run_index,
              run.converged ? "converged" : (run.failed ? "FAILED   " : "stopped  "),
              run.iterations, 1e3 * run.initial_mean_error, 1e3 * run.final_mean_error,
              run.cosine.count ? run.cosine.mean : 0.0);
  if (!run.failure_reason.empty()) std::printf("           reason: %s\n", run.failure_reason.c_str());
}

int cmd_run(const std::string& scenario_arg, const std::string& out_dir,
            std::optional<std::uint64_t> seed, std::optional<int> repeat,
            std::optional<std::pair<double, double>> mismatch,
            std::optional<double> marker_noise, std::optional<std::string> mode) {
  cosrod::Scenario sc;
  if (fs::exists(scenario_arg))
    sc = cosrod::load_scenario(scenario_arg);
  else
    sc = cosrod::make_preset(scenario_arg);

  if (seed) sc.seed = *seed;
  if (repeat) sc.repeat_count = *repeat;
  if (mismatch) {
    sc.plant_kt_multiplier = mismatch->first;
    sc.plant_kr_multiplier = mismatch->second;
  }
  if (marker_noise) sc.marker_noise_sigma = *marker_noise;
  if (mode) {
    if (*mode == "vision")
      sc.controller.feedback = cosrod::FeedbackMode::Vision;
    else if (*mode == "wrench")
      sc.controller.feedback = cosrod::FeedbackMode::ForceSensor;
    else {
      std::cerr << "error: --mode must be 'vision' or 'wrench'\n";
      return 2;
    }
  }

  const cosrod::ScenarioResult result = cosrod::run_scenario(sc);
  const fs::path dir = cosrod::write_scenario_outputs(result, out_dir);

  std::printf("scenario '%s' (%s, %s feedback): %d/%zu runs converged\n", sc.name.c_str(),
              cosrod::to_string(sc.mode),
              sc.controller.feedback == cosrod::FeedbackMode::Vision ? "vision" : "wrench",
              result.converged_count(), result.runs.size());
  for (const auto& run : result.runs) print_run_line(run);
  const cosrod::CosineStats across = result.cosine_across_runs();
  if (across.count)
    std::printf("  cosine similarity across runs: mean=%.4f std=%.4f\n", across.mean, across.stddev);
  std::printf("  mean controller step: %.3f ms\n", result.mean_step_ms());
  std::printf("  outputs: %s\n", dir.string().c_str());

  const int failures = static_cast<int>(result.runs.size()) - result.converged_count();
  return failures > 255 ? 255 : failures;
}

int cmd_list_presets() {
  for (const auto& name : cosrod::preset_names()) {
    const cosrod::Scenario sc = cosrod::make_preset(name);
    const cosrod::RodParameters params = sc.model_params();
    std::printf("%-15s L=%.2f m  E=%.3g Pa  nu=%.3f  n_c=%d  Kr[0,0]=%.3g N m^2\n", name.c_str(),
                sc.object.length, sc.object.youngs_modulus, sc.object.poisson_ratio,
                sc.layout.count(), params.Kr(0, 0));
  }
  return 0;
}

int cmd_dump_shape(const std::string& trace_path, int iteration, const std::string& which,
                   const std::string& scenario_path, const std::string& output) {
  const bool use_true = (which != "cmd");
  const cosrod::RodShape shape = cosrod::shape_from_trace(
      trace_path, iteration, use_true, scenario_path.empty() ? fs::path{} : fs::path(scenario_path));
  if (output.empty()) {
    cosrod::write_shape_csv(std::cout, shape);
  } else {
    std::ofstream out(output);
    if (!out) {
      std::cerr << "error: cannot write '" << output << "'\n";
      return 2;
    }
    cosrod::write_shape_csv(out, shape);
  }
  return 0;
}

int cmd_summarize(const std::string& scenario_dir) {
  const nlohmann::json summary = cosrod::summarize_scenario_dir(scenario_dir);
  std::ofstream(fs::path(scenario_dir) / "summary.json") << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
  const int failures =
      summary["n_runs"].get<int>() - summary["converged_runs"].get<int>();
  return failures > 255 ? 255 : failures;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop shape servoing of deformable linear objects on a Cosserat rod model"};
  app.require_subcommand(1);

  // run
  std::string scenario_arg;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> repeat;
  std::vector<double> mismatch_vals;
  std::optional<double> marker_noise;
  std::optional<std::string> feedback_mode;
  CLI::App* run = app.add_subcommand("run", "Run a scenario file or preset");
  run->add_option("scenario", scenario_arg, "Scenario YAML file or preset name")->required();
  run->add_option("--out-dir", out_dir, "Output directory (default: out)");
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--repeat", repeat, "Override the repeat count");
  run->add_option("--mismatch", mismatch_vals, "Plant stiffness multipliers <kt> <kr>")
      ->expected(2);
  run->add_option("--marker-noise", marker_noise, "Marker noise sigma [m]");
  run->add_option("--mode", feedback_mode, "Feedback mode: vision|wrench");

  // list-presets
  CLI::App* list = app.add_subcommand("list-presets", "List built-in object presets");

  // dump-shape
  std::string trace_path, which = "true", scenario_path, output;
  int iteration = 0;
  CLI::App* dump = app.add_subcommand("dump-shape", "Re-integrate and print the rod shape at a trace iteration");
  dump->add_option("trace", trace_path, "Path to a run trace.csv")->required();
  dump->add_option("iteration", iteration, "Iteration index")->required();
  dump->add_option("--which", which, "Which state to integrate: true|cmd (default: true)");
  dump->add_option("--scenario", scenario_path, "Scenario YAML (default: found next to the trace)");
  dump->add_option("--output", output, "Write CSV here instead of stdout");

  // summarize
  std::string scenario_dir;
  CLI::App* summ = app.add_subcommand("summarize", "Recompute a scenario summary from its traces");
  summ->add_option("dir", scenario_dir, "Scenario output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      std::optional<std::pair<double, double>> mismatch;
      if (!mismatch_vals.empty()) mismatch = std::make_pair(mismatch_vals[0], mismatch_vals[1]);
      return cmd_run(scenario_arg, out_dir, seed, repeat, mismatch, marker_noise, feedback_mode);
    }
    if (list->parsed()) return cmd_list_presets();
    if (dump->parsed()) return cmd_dump_shape(trace_path, iteration, which, scenario_path, output);
    if (summ->parsed()) return cmd_summarize(scenario_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
