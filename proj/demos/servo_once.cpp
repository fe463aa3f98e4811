// Runs one closed-loop shape-servoing scenario in memory and prints the
// error trajectory.

#include <cstdio>

#include "cosrod/harness.hpp"

int main(int argc, char** argv) {
  using namespace cosrod;
  Scenario sc = make_preset(argc > 1 ? argv[1] : "rubber_band");
  sc.objective_source = GroundTruthSampleSource{7};
  sc.seed = 7;

  const ScenarioResult result = run_scenario(sc);
  const RunResult& run = result.runs[0];
  for (const auto& rec : run.trace)
    std::printf("iter %3d  t=%5.1f s  mean err %8.3f mm  cosine %6.3f\n", rec.iteration,
                rec.time_s, 1e3 * rec.mean_error, rec.cosine.value_or(0.0));
  std::printf("%s after %d iterations, final mean error %.4f mm\n",
              run.converged ? "converged" : "did not converge", run.iterations,
              1e3 * run.final_mean_error);
  return run.converged ? 0 : 1;
}
