#pragma once

// Reading side of the harness outputs: parse trace.csv files back into
// records, rebuild rod shapes for a given iteration, and recompute scenario
// summaries from the traces alone.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cosrod/harness.hpp"

namespace cosrod {

struct ParsedTrace {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    throw std::runtime_error("trace: missing column '" + name + "'");
  }
};

inline ParsedTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file '" + path.string() + "'");
  ParsedTrace trace;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace file '" + path.string() + "'");
  std::stringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) trace.columns.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(trace.columns.size());
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != trace.columns.size())
      throw std::runtime_error("trace: malformed row in '" + path.string() + "'");
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

namespace detail {

inline Vec3 trace_vec3(const ParsedTrace& trace, const std::vector<double>& row,
                       const std::string& prefix) {
  return Vec3(row[trace.column(prefix + "_x")], row[trace.column(prefix + "_y")],
              row[trace.column(prefix + "_z")]);
}

inline BoundaryState trace_gamma(const ParsedTrace& trace, const std::vector<double>& row,
                                 const std::string& prefix) {
  BoundaryState g;
  g.p = trace_vec3(trace, row, prefix + "_p");
  g.R = exp_so3(trace_vec3(trace, row, prefix + "_rv"));
  g.n = trace_vec3(trace, row, prefix + "_n");
  g.m = trace_vec3(trace, row, prefix + "_m");
  return g;
}

}  // namespace detail

/// Locates the scenario.yaml describing a trace: next to the trace file or in
/// its parent directory (the layout write_scenario_outputs produces).
inline std::filesystem::path find_scenario_for_trace(const std::filesystem::path& trace_path) {
  namespace fs = std::filesystem;
  const fs::path dir = trace_path.parent_path();
  for (const fs::path candidate : {dir / "scenario.yaml", dir.parent_path() / "scenario.yaml"})
    if (fs::exists(candidate)) return candidate;
  throw std::runtime_error("no scenario.yaml found next to '" + trace_path.string() + "'");
}

/// Reconstructs the rod shape at one trace iteration by re-integrating the
/// recorded initial values. `use_true` selects the plant's ground truth
/// (under the plant's mismatched stiffness) over the commanded model state.
inline RodShape shape_from_trace(const std::filesystem::path& trace_path, int iteration,
                                 bool use_true = true,
                                 const std::filesystem::path& scenario_path = {}) {
  const ParsedTrace trace = read_trace_csv(trace_path);
  const Scenario sc = load_scenario(
      (scenario_path.empty() ? find_scenario_for_trace(trace_path) : scenario_path).string());

  const int iter_col = trace.column("iteration");
  for (const auto& row : trace.rows) {
    if (static_cast<int>(row[iter_col]) != iteration) continue;
    const BoundaryState gamma = detail::trace_gamma(trace, row, use_true ? "true" : "cmd");
    return integrate_ivp(gamma, use_true ? sc.plant_params() : sc.model_params());
  }
  throw std::runtime_error("trace has no iteration " + std::to_string(iteration));
}

/// Recomputes a scenario summary from the files on disk (scenario.yaml plus
/// the per-run traces); used by the `summarize` CLI verb so summaries stay
/// auditable against the traces.
inline nlohmann::json summarize_scenario_dir(const std::filesystem::path& scenario_dir) {
  namespace fs = std::filesystem;
  const Scenario sc = load_scenario((scenario_dir / "scenario.yaml").string());

  std::vector<fs::path> run_dirs;
  for (const auto& entry : fs::directory_iterator(scenario_dir))
    if (entry.is_directory() && entry.path().filename().string().rfind("run_", 0) == 0)
      run_dirs.push_back(entry.path());
  std::sort(run_dirs.begin(), run_dirs.end());

  ScenarioResult result;
  result.scenario = sc;
  for (const auto& run_dir : run_dirs) {
    RunResult run;
    run.run_index = std::stoi(run_dir.filename().string().substr(4));
    const ParsedTrace trace = read_trace_csv(run_dir / "trace.csv");
    run.iterations = static_cast<int>(trace.rows.size());

    std::vector<double> cosines;
    const int n_c = sc.layout.count();
    for (const auto& row : trace.rows) {
      if (row[trace.column("cosine_valid")] != 0.0)
        cosines.push_back(row[trace.column("cosine_similarity")]);
    }
    run.cosine = aggregate_cosines(cosines);

    if (!trace.rows.empty()) {
      const auto& first = trace.rows.front();
      const auto& last = trace.rows.back();
      run.initial_mean_error = first[trace.column("mean_error_m")];
      run.final_mean_error = last[trace.column("mean_error_m")];
      run.final_max_error = last[trace.column("max_error_m")];
      for (int i = 0; i < n_c; ++i) {
        run.final_point_errors.push_back(last[trace.column("err_point" + std::to_string(i) + "_m")]);
        run.final_markers.push_back(
            detail::trace_vec3(trace, last, "marker" + std::to_string(i)));
      }
      run.converged = run.final_mean_error < sc.controller.convergence_tol;
      run.failed = !run.converged && !(run.final_mean_error <= sc.fail_threshold);
    } else {
      run.failed = true;
      run.failure_reason = "empty trace";
    }

    // Timing sidecar is optional; fold it in when present.
    const fs::path timing_path = run_dir / "timing.csv";
    if (fs::exists(timing_path)) {
      std::ifstream timing(timing_path);
      std::string line;
      std::getline(timing, line);  // header
      double total = 0.0;
      int count = 0;
      while (std::getline(timing, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        run.step_ms.push_back(std::stod(line.substr(comma + 1)));
        total += run.step_ms.back();
        ++count;
      }
      if (count) run.mean_step_ms = total / count;
    }
    result.runs.push_back(std::move(run));
  }

  // The objective is reproducible from the scenario file.
  result.objective = resolve_objective(sc, &result.gamma0_star);
  return summary_json(result);
}

}  // namespace cosrod
