#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stibpalm/diagnostics.hpp"
#include "stibpalm/problems/quadratic.hpp"
#include "stibpalm/solver.hpp"
#include "stibpalm/synthetic.hpp"

namespace stibpalm {

struct AlgorithmSpec {
  Preset preset = Preset::StibPalm;
  EstimatorKind estimator = EstimatorKind::Saga;
  SagaMode saga_mode = SagaMode::Table;
  double refresh_prob = 0.05;
  std::optional<double> inertia;       // replaces the ramp schedules with a constant
  std::optional<double> theta_safety;  // overrides the experiment-wide factor
  std::string label;                   // defaults to preset[-estimator]

  std::string displayName() const;
};

struct ProblemConfig {
  std::string type = "snmf";  // snmf | bid | quadratic

  // snmf
  std::string data;  // matrix path; empty -> synthetic
  SnmfSynthSpec synth;
  int rank = 5;
  double sparsity_fraction = 0.25;
  int sparsity_count = 0;  // takes precedence when > 0
  double eta = 3.0;

  // bid
  std::string image;  // sharp image path; empty -> built-in test pattern
  Index image_size = 64;
  int kernel_size = 9;
  std::string blur = "motion";  // motion | disk
  double blur_noise = 0.0;
  double sigma = 1e3;
  double eta_bid = 5e-5;
  int strips = 64;

  // quadratic
  QuadraticConfig quadratic;

  std::uint64_t init_seed = 1;
};

struct ExperimentConfig {
  ProblemConfig problem;
  std::vector<AlgorithmSpec> algorithms;
  double batch_fraction = 0.05;
  int epochs = 10;
  std::vector<std::uint64_t> seeds = {1};
  bool diagnostics = false;
  bool strict = false;
  int threads = 0;  // 0 -> hardware concurrency
  double epsilon = 1e-3;
  double theta_safety = 1.0;
  // Fixed kernel scales; both > 0 turns adaptive recomputation off.
  double theta1 = 0.0;
  double theta2 = 0.0;
  double lipschitz_override = 0.0;  // for the step-size check and Psi constants
  std::string output_dir = "out";

  void validate() const;
};

/// Parses the JSON experiment config. Unknown keys are an error in strict
/// mode and a stderr warning otherwise.
ExperimentConfig parseExperimentConfig(const std::string& json_text);
ExperimentConfig loadExperimentConfig(const std::string& path);

struct BuiltProblem {
  std::unique_ptr<Problem> problem;
  BlockPoint initial;
};

BuiltProblem buildProblem(const ProblemConfig& cfg);

struct MetricsRow {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string algorithm;
  double epoch = 0.0;
  long iter = 0;
  double wall_time_s = 0.0;
  double objective = 0.0;
  bool feasible = true;
  std::optional<double> psi;
  std::optional<double> stationarity;
  std::optional<double> upsilon;
};

struct RunOutcome {
  std::string run_id;
  std::string algorithm;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  bool stepsize_checked = false;
  bool stepsize_satisfied = true;
  double stepsize_margin = 0.0;
  std::vector<MetricsRow> rows;
  std::vector<StepTrace> trace;  // populated when diagnostics are on
};

struct ExperimentResult {
  std::vector<RunOutcome> runs;

  bool anyFailed() const;
  std::vector<const MetricsRow*> mergedRows() const;
};

/// Executes every (algorithm, seed) pair, possibly on a worker pool. Each run
/// is deterministic given its seed; failures are recorded, not thrown.
ExperimentResult runExperiment(const ExperimentConfig& cfg);

/// Writes metrics.csv, summary.json and the two SVG comparison plots.
void emitReport(const ExperimentResult& result, const ExperimentConfig& cfg,
                const std::string& dir);

/// Batch size from the subsample fraction: floor, at least one.
int batchSizeFromFraction(int n_components, double fraction);

/// Step-size condition evaluation for a configured algorithm on a problem.
struct ConfigCheck {
  bool checked = false;
  StepsizeCheck stepsize;
  double theta1 = 0.0, theta2 = 0.0, lipschitz = 0.0;
};
ConfigCheck checkAlgorithmConfig(const ExperimentConfig& cfg, const AlgorithmSpec& algo,
                                 const Problem& problem, const BlockPoint& z0);

}  // namespace stibpalm
