#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>

#include "stibpalm/harness.hpp"
#include "stibpalm/io.hpp"

using namespace stibpalm;

namespace {

int cmdRun(const std::string& config_path) {
  ExperimentConfig cfg = loadExperimentConfig(config_path);
  ExperimentResult result = runExperiment(cfg);
  emitReport(result, cfg, cfg.output_dir);
  std::cout << "wrote " << cfg.output_dir << "/metrics.csv, summary.json, plot_epoch.svg, "
            << "plot_time.svg (" << result.runs.size() << " runs)\n";
  return result.anyFailed() ? 2 : 0;
}

int cmdValidate(const std::string& config_path) {
  ExperimentConfig cfg = loadExperimentConfig(config_path);
  BuiltProblem built = buildProblem(cfg.problem);
  std::cout << "config OK: " << cfg.algorithms.size() << " algorithm(s), "
            << cfg.seeds.size() << " seed(s), problem type " << cfg.problem.type << "\n";
  for (const auto& algo : cfg.algorithms) {
    const ConfigCheck check = checkAlgorithmConfig(cfg, algo, *built.problem, built.initial);
    std::cout << algo.displayName() << ": ";
    if (!check.checked) {
      std::cout << "step-size condition not applicable (SGD estimator)\n";
      continue;
    }
    std::printf("%s, margin %.6g (theta=%.6g, rhs=%.6g, L=%.6g)\n",
                check.stepsize.satisfied ? "Satisfied" : "Violated", check.stepsize.margin,
                std::min(check.theta1, check.theta2), check.stepsize.rhs, check.lipschitz);
  }
  return 0;
}

int cmdCheckEstimators(const std::string& config_path) {
  ExperimentConfig cfg = loadExperimentConfig(config_path);
  BuiltProblem built = buildProblem(cfg.problem);
  const Problem& problem = *built.problem;
  const int n = problem.componentCount();
  bool all_ok = true;

  // Frozen point distinct from the anchor point, kept feasible by the proxes.
  BlockPoint frozen;
  {
    Vec xs = 0.9 * built.initial.x, ys = 0.9 * built.initial.y;
    frozen.x.resize(xs.size());
    frozen.y.resize(ys.size());
    problem.proxX(xs, 1.0, frozen.x);
    problem.proxY(ys, 1.0, frozen.y);
  }

  for (const auto& algo : cfg.algorithms) {
    if (algo.estimator == EstimatorKind::Full) {
      std::cout << algo.displayName() << ": skipped (exact gradients)\n";
      continue;
    }
    if (algo.estimator == EstimatorKind::Sgd) {
      EstimatorConfig est;
      est.kind = EstimatorKind::Sgd;
      est.batch_size = batchSizeFromFraction(n, cfg.batch_fraction);
      const FrozenDecayResult res =
          runFrozenDecayBattery(problem, est, built.initial, frozen, 5, 100, 1e-10);
      std::printf("%s: non-conforming as expected (no decay under frozen iterates: "
                  "upsilon stays %s, fitted rate %.3f)\n",
                  algo.displayName().c_str(), res.steps_to_zero < 0 ? "positive" : "small",
                  res.fitted_rate);
      continue;
    }
    EstimatorConfig est;
    est.kind = algo.estimator;
    est.saga_mode = SagaMode::Literal;
    est.batch_size = batchSizeFromFraction(n, cfg.batch_fraction);
    est.sarah_refresh_prob = algo.refresh_prob;
    const double p = 1.0 / algo.refresh_prob;
    const int steps =
        algo.estimator == EstimatorKind::Saga
            ? std::max(200, 12 * ((n + est.batch_size - 1) / est.batch_size))
            : std::max(200, static_cast<int>(12.0 * p));
    const int n_seeds = std::max<std::size_t>(5, cfg.seeds.size());
    const FrozenDecayResult res =
        runFrozenDecayBattery(problem, est, built.initial, frozen, n_seeds, steps, 1e-10);
    const VRConstants vr =
        vrConstants(algo.estimator, 1.0, 0.0, 0.0, est.batch_size, n, std::max(1.0 + 1e-9, p));
    const bool rate_ok = res.fitted_rate >= vr.rho - 1e-9;
    const bool zero_ok = res.steps_to_zero >= 0;
    const bool refresh_ok = res.refresh_zeroes_upsilon;
    const bool ok = rate_ok && zero_ok && refresh_ok;
    all_ok = all_ok && ok;
    std::printf("%s: %s  fitted rate %.4g (bound %.4g), upsilon < 1e-10 after %d steps%s\n",
                algo.displayName().c_str(), ok ? "PASS" : "FAIL", res.fitted_rate, vr.rho,
                res.steps_to_zero,
                algo.estimator == EstimatorKind::Sarah
                    ? (refresh_ok ? ", refresh zeroes the error" : ", refresh left nonzero error")
                    : "");
  }

  // MSE bound along short diagnostic trajectories (needs >= 5 seeds).
  ExperimentConfig mse_cfg = cfg;
  mse_cfg.diagnostics = true;
  mse_cfg.epochs = std::min(cfg.epochs, 5);
  while (mse_cfg.seeds.size() < 5)
    mse_cfg.seeds.push_back(mse_cfg.seeds.back() + 1);
  ExperimentResult result = runExperiment(mse_cfg);
  for (const auto& algo : cfg.algorithms) {
    if (algo.estimator != EstimatorKind::Saga && algo.estimator != EstimatorKind::Sarah)
      continue;
    std::vector<std::vector<StepTrace>> traces;
    for (const auto& run : result.runs)
      if (run.algorithm == algo.displayName() && !run.failed) traces.push_back(run.trace);
    if (traces.size() < 5) continue;
    const SolverConfig sc_probe = makePreset(algo.preset, SolverConfig{});
    const double lipschitz =
        mse_cfg.lipschitz_override > 0.0
            ? mse_cfg.lipschitz_override
            : problem.lipschitzHint(built.initial.x, built.initial.y).dominant();
    const VRConstants vr = vrConstants(
        algo.estimator, lipschitz, sc_probe.gamma1.cap(), sc_probe.gamma2.cap(),
        batchSizeFromFraction(n, cfg.batch_fraction), n,
        algo.estimator == EstimatorKind::Sarah ? 1.0 / algo.refresh_prob : 2.0);
    const MseReport rep = checkMseBound(traces, vr);
    const bool ok = rep.violation_rate <= 0.05;
    all_ok = all_ok && ok;
    std::printf("%s: MSE bound %s (violation rate %.2f over %d steps)\n",
                algo.displayName().c_str(), ok ? "PASS" : "FAIL", rep.violation_rate, rep.steps);
  }
  return all_ok ? 0 : 2;
}

int cmdGenSynthetic(long rows, long cols, int rank, double sparsity, std::uint64_t seed,
                    double noise, const std::string& out) {
  SnmfSynthSpec spec;
  spec.rows = rows;
  spec.cols = cols;
  spec.rank = rank;
  spec.nonzero_fraction = sparsity;
  spec.noise = noise;
  spec.seed = seed;
  const Mat A = makeSnmfData(spec);
  if (out.size() > 4 && out.substr(out.size() - 4) == ".csv")
    saveMatrixCsv(A, out);
  else
    saveMatrixBin(A, out);
  std::cout << "wrote " << out << " (" << A.rows() << "x" << A.cols() << ")\n";
  return 0;
}

int cmdConvert(const std::string& in, const std::string& out) {
  const Mat m = loadMatrixAuto(in);
  if (out.size() > 4 && out.substr(out.size() - 4) == ".csv")
    saveMatrixCsv(m, out);
  else
    saveMatrixBin(m, out);
  std::cout << "wrote " << out << " (" << m.rows() << "x" << m.cols() << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STiBPALM benchmark harness"};
  app.require_subcommand(1);

  std::string config_path, in_path, out_path;
  long rows = 100, cols = 80;
  int rank = 5;
  double sparsity = 0.25, noise = 0.01;
  std::uint64_t seed = 7;

  auto* run = app.add_subcommand("run", "run the experiments of a config");
  run->add_option("config", config_path, "JSON config file")->required();

  auto* validate = app.add_subcommand("validate", "check a config and the step-size condition");
  validate->add_option("config", config_path, "JSON config file")->required();

  auto* check = app.add_subcommand("check-estimators",
                                   "frozen-iterate variance-reduction battery");
  check->add_option("config", config_path, "JSON config file")->required();

  auto* gen = app.add_subcommand("gen-synthetic", "generate a synthetic factorization matrix");
  gen->add_option("--rows", rows, "rows")->required();
  gen->add_option("--cols", cols, "columns")->required();
  gen->add_option("--rank", rank, "planted rank")->required();
  gen->add_option("--sparsity", sparsity, "nonzero fraction of the left factor");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--noise", noise, "additive noise level");
  gen->add_option("--out", out_path, "output file (.csv or .bin)")->required();

  auto* convert = app.add_subcommand("convert", "convert between csv/bin/pgm matrix formats");
  convert->add_option("input", in_path, "input file")->required();
  convert->add_option("output", out_path, "output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) return cmdRun(config_path);
    if (validate->parsed()) return cmdValidate(config_path);
    if (check->parsed()) return cmdCheckEstimators(config_path);
    if (gen->parsed()) return cmdGenSynthetic(rows, cols, rank, sparsity, seed, noise, out_path);
    if (convert->parsed()) return cmdConvert(in_path, out_path);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return run->parsed() || check->parsed() ? 2 : 1;
  }
  return 1;
}
