#include "stibpalm/harness.hpp"

#include <atomic>
#include <chrono>
#include <mutex>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <json.hpp>

#include "stibpalm/io.hpp"

namespace stibpalm {

using nlohmann::json;

namespace {

std::string estimatorName(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Full: return "full";
    case EstimatorKind::Sgd: return "sgd";
    case EstimatorKind::Saga: return "saga";
    case EstimatorKind::Sarah: return "sarah";
  }
  return "?";
}

EstimatorKind estimatorFromName(const std::string& name) {
  if (name == "full") return EstimatorKind::Full;
  if (name == "sgd") return EstimatorKind::Sgd;
  if (name == "saga") return EstimatorKind::Saga;
  if (name == "sarah") return EstimatorKind::Sarah;
  throw std::invalid_argument("unknown estimator: " + name);
}

void warnUnknownKeys(const json& obj, const std::vector<std::string>& known,
                     const std::string& where, bool strict) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      const std::string msg = "config: unknown key '" + it.key() + "' in " + where;
      if (strict) throw std::invalid_argument(msg);
      std::cerr << "warning: " << msg << "\n";
    }
  }
}

std::string formatDouble(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string AlgorithmSpec::displayName() const {
  if (!label.empty()) return label;
  std::string name = presetName(preset);
  if (estimator != EstimatorKind::Full) name += "-" + estimatorName(estimator);
  return name;
}

void ExperimentConfig::validate() const {
  if (!(batch_fraction > 0.0) || batch_fraction > 1.0)
    throw std::invalid_argument("config: batch_fraction must lie in (0, 1]");
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
  if (algorithms.empty()) throw std::invalid_argument("config: no algorithms given");
  if (!(epsilon > 0.0)) throw std::invalid_argument("config: epsilon must be positive");
  if ((theta1 > 0.0) != (theta2 > 0.0))
    throw std::invalid_argument("config: fixed kernels need both theta1 and theta2");
}

int batchSizeFromFraction(int n_components, double fraction) {
  const int b = static_cast<int>(std::floor(fraction * static_cast<double>(n_components)));
  return std::max(1, std::min(n_components, b));
}

ExperimentConfig parseExperimentConfig(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  cfg.strict = root.value("strict", false);
  warnUnknownKeys(root,
                  {"problem", "algorithms", "algorithm", "batch_fraction", "epochs", "seeds",
                   "diagnostics", "strict", "threads", "epsilon", "theta_safety", "theta1",
                   "theta2", "lipschitz", "output_dir"},
                  "top level", cfg.strict);

  if (!root.contains("problem")) throw std::invalid_argument("config: missing 'problem'");
  const json& p = root["problem"];
  warnUnknownKeys(p,
                  {"type", "data", "synthetic", "rank", "sparsity_fraction", "sparsity_count",
                   "eta", "image", "image_size", "kernel_size", "blur", "blur_noise", "sigma",
                   "strips", "dim_x", "dim_y", "components", "coupling", "init_seed"},
                  "problem", cfg.strict);
  cfg.problem.type = p.value("type", std::string("snmf"));
  cfg.problem.data = p.value("data", std::string());
  cfg.problem.rank = p.value("rank", 5);
  cfg.problem.sparsity_fraction = p.value("sparsity_fraction", 0.25);
  cfg.problem.sparsity_count = p.value("sparsity_count", 0);
  cfg.problem.eta = p.value("eta", cfg.problem.type == "bid" ? 5e-5 : 3.0);
  cfg.problem.image = p.value("image", std::string());
  cfg.problem.image_size = p.value("image_size", 64);
  cfg.problem.kernel_size = p.value("kernel_size", 9);
  cfg.problem.blur = p.value("blur", std::string("motion"));
  cfg.problem.blur_noise = p.value("blur_noise", 0.0);
  cfg.problem.sigma = p.value("sigma", 1e3);
  cfg.problem.eta_bid = cfg.problem.type == "bid" ? cfg.problem.eta : 5e-5;
  cfg.problem.strips = p.value("strips", 64);
  cfg.problem.quadratic.dim_x = p.value("dim_x", 8);
  cfg.problem.quadratic.dim_y = p.value("dim_y", 6);
  cfg.problem.quadratic.components = p.value("components", 10);
  cfg.problem.quadratic.coupling = p.value("coupling", 0.2);
  cfg.problem.init_seed = p.value("init_seed", 1);
  cfg.problem.quadratic.seed = cfg.problem.init_seed;
  if (p.contains("synthetic")) {
    const json& s = p["synthetic"];
    warnUnknownKeys(s, {"rows", "cols", "rank", "nonzero_fraction", "noise", "seed"},
                    "problem.synthetic", cfg.strict);
    cfg.problem.synth.rows = s.value("rows", 100);
    cfg.problem.synth.cols = s.value("cols", 80);
    cfg.problem.synth.rank = s.value("rank", cfg.problem.rank);
    cfg.problem.synth.nonzero_fraction = s.value("nonzero_fraction", 0.25);
    cfg.problem.synth.noise = s.value("noise", 0.01);
    cfg.problem.synth.seed = s.value("seed", 7);
  }

  json algos = json::array();
  if (root.contains("algorithms"))
    algos = root["algorithms"];
  else if (root.contains("algorithm"))
    algos.push_back(root["algorithm"]);
  else
    throw std::invalid_argument("config: missing 'algorithms'");
  for (const json& a : algos) {
    warnUnknownKeys(a,
                    {"preset", "estimator", "saga_mode", "refresh_prob", "inertia",
                     "theta_safety", "label"},
                    "algorithm entry", cfg.strict);
    AlgorithmSpec spec;
    spec.preset = presetFromName(a.value("preset", std::string("stibpalm")));
    if (a.contains("estimator")) spec.estimator = estimatorFromName(a["estimator"]);
    const std::string mode = a.value("saga_mode", std::string("table"));
    if (mode != "table" && mode != "literal")
      throw std::invalid_argument("config: saga_mode must be 'table' or 'literal'");
    spec.saga_mode = mode == "literal" ? SagaMode::Literal : SagaMode::Table;
    spec.refresh_prob = a.value("refresh_prob", 0.05);
    if (a.contains("inertia")) spec.inertia = a["inertia"].get<double>();
    if (a.contains("theta_safety")) spec.theta_safety = a["theta_safety"].get<double>();
    spec.label = a.value("label", std::string());
    if (!presetIsStochastic(spec.preset)) spec.estimator = EstimatorKind::Full;
    cfg.algorithms.push_back(spec);
  }

  cfg.batch_fraction = root.value("batch_fraction", 0.05);
  cfg.epochs = root.value("epochs", 10);
  if (root.contains("seeds")) {
    cfg.seeds.clear();
    for (const json& s : root["seeds"]) cfg.seeds.push_back(s.get<std::uint64_t>());
  }
  cfg.diagnostics = root.value("diagnostics", false);
  cfg.threads = root.value("threads", 0);
  cfg.epsilon = root.value("epsilon", 1e-3);
  cfg.theta_safety = root.value("theta_safety", 1.0);
  cfg.theta1 = root.value("theta1", 0.0);
  cfg.theta2 = root.value("theta2", 0.0);
  cfg.lipschitz_override = root.value("lipschitz", 0.0);
  cfg.output_dir = root.value("output_dir", std::string("out"));
  cfg.validate();
  return cfg;
}

ExperimentConfig loadExperimentConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parseExperimentConfig(text);
}

namespace {

Mat loadProblemMatrix(const std::string& path) {
  try {
    return loadMatrixAuto(path);
  } catch (const std::runtime_error& e) {
    // Bad or missing data files are configuration errors.
    throw std::invalid_argument(e.what());
  }
}

}  // namespace

BuiltProblem buildProblem(const ProblemConfig& cfg) {
  BuiltProblem built;
  if (cfg.type == "snmf") {
    SnmfConfig sc;
    sc.A = cfg.data.empty() ? makeSnmfData(cfg.synth) : loadProblemMatrix(cfg.data);
    sc.rank = cfg.rank;
    sc.sparsity = cfg.sparsity_count > 0
                      ? cfg.sparsity_count
                      : sparsityCountFromFraction(sc.A.rows(), cfg.sparsity_fraction);
    sc.eta_fit = cfg.eta;
    auto problem = std::make_unique<SnmfProblem>(std::move(sc));
    built.initial = snmfInitialPoint(*problem, cfg.init_seed);
    built.problem = std::move(problem);
  } else if (cfg.type == "bid") {
    Mat sharp = cfg.image.empty() ? makeTestImage(cfg.image_size) : loadProblemMatrix(cfg.image);
    if (sharp.minCoeff() < 0.0 || sharp.maxCoeff() > 1.0)
      throw std::invalid_argument("bid: image values must lie in [0,1]");
    const Mat kernel = cfg.blur == "disk" ? diskBlurKernel(cfg.kernel_size)
                                          : motionBlurKernel(cfg.kernel_size);
    BidConfig bc;
    bc.A = blurImage(sharp, kernel, cfg.blur_noise, cfg.init_seed);
    bc.kernel_size = cfg.kernel_size;
    bc.eta_reg = cfg.eta_bid;
    bc.sigma = cfg.sigma;
    bc.n_strips = std::min<int>(cfg.strips, static_cast<int>(bc.A.rows()));
    auto problem = std::make_unique<BidProblem>(std::move(bc));
    built.initial = bidInitialPoint(*problem);
    built.problem = std::move(problem);
  } else if (cfg.type == "quadratic") {
    auto problem = std::make_unique<QuadraticProblem>(cfg.quadratic);
    Rng rng(deriveStream(cfg.init_seed, 0x1217ULL));
    Vec x(problem->xDim()), y(problem->yDim());
    for (Index i = 0; i < x.size(); ++i) x[i] = rng.gaussian();
    for (Index i = 0; i < y.size(); ++i) y[i] = rng.gaussian();
    Vec xf(x.size()), yf(y.size());
    problem->proxX(x, 1.0, xf);
    problem->proxY(y, 1.0, yf);
    built.initial = {std::move(xf), std::move(yf)};
    built.problem = std::move(problem);
  } else {
    throw std::invalid_argument("unknown problem type: " + cfg.type);
  }
  return built;
}

namespace {

SolverConfig buildSolverConfig(const ExperimentConfig& cfg, const AlgorithmSpec& algo,
                               const Problem& problem, std::uint64_t seed) {
  SolverConfig base;
  base.estimator.kind = algo.estimator;
  base.estimator.saga_mode = algo.saga_mode;
  base.estimator.sarah_refresh_prob = algo.refresh_prob;
  SolverConfig sc = makePreset(algo.preset, base);
  sc.estimator.batch_size = sc.estimator.kind == EstimatorKind::Full
                                ? problem.componentCount()
                                : batchSizeFromFraction(problem.componentCount(),
                                                        cfg.batch_fraction);
  if (algo.inertia) {
    auto replaceRamp = [&](InertialSchedule& s) {
      if (s.kind == InertialSchedule::Kind::Ramp) s = InertialSchedule::constant(*algo.inertia);
    };
    replaceRamp(sc.gamma1);
    replaceRamp(sc.gamma2);
    replaceRamp(sc.mu1);
    replaceRamp(sc.mu2);
    replaceRamp(sc.alpha1);
    replaceRamp(sc.alpha2);
    replaceRamp(sc.beta1);
    replaceRamp(sc.beta2);
  }
  if (cfg.theta1 > 0.0) {
    sc.adaptive_theta = false;
    sc.kernel_x.scale = cfg.theta1;
    sc.kernel_y.scale = cfg.theta2;
  } else {
    sc.adaptive_theta = true;
    sc.theta_safety = algo.theta_safety.value_or(cfg.theta_safety);
    sc.kernel_x.scale = 1.0;
    sc.kernel_y.scale = 1.0;
  }
  sc.max_epochs = cfg.epochs;
  sc.seed = seed;
  sc.epsilon = cfg.epsilon;
  sc.diagnostics = cfg.diagnostics;
  return sc;
}

RunOutcome executeRun(const ExperimentConfig& cfg, const AlgorithmSpec& algo,
                      const Problem& problem, const BlockPoint& z0, std::uint64_t seed) {
  RunOutcome out;
  out.algorithm = algo.displayName();
  out.seed = seed;
  out.run_id = out.algorithm + "-s" + std::to_string(seed);
  try {
    const SolverConfig sc = buildSolverConfig(cfg, algo, problem, seed);
    const ConfigCheck check = checkAlgorithmConfig(cfg, algo, problem, z0);
    out.stepsize_checked = check.checked;
    out.stepsize_satisfied = !check.checked || check.stepsize.satisfied;
    out.stepsize_margin = check.stepsize.margin;
    if (check.checked && !check.stepsize.satisfied) {
      if (cfg.strict)
        throw std::runtime_error("step-size condition violated (margin " +
                                 std::to_string(check.stepsize.margin) + ") in strict mode");
      static std::mutex warn_mutex;
      std::lock_guard<std::mutex> lock(warn_mutex);
      std::cerr << "warning: " << out.run_id << ": step-size condition violated (margin "
                << check.stepsize.margin << "), run proceeds\n";
    }

    Solver solver(problem, sc, z0);
    const int n = problem.componentCount();
    const int iters_per_epoch =
        (n + sc.estimator.batch_size - 1) / sc.estimator.batch_size;
    const long total_iters = static_cast<long>(cfg.epochs) * iters_per_epoch;

    // Psi constants for the diagnostics columns (variance-reduced kinds only).
    bool with_psi = false;
    VRConstants vr;
    PsiConstants psi_consts;
    double lipschitz = 0.0;
    const double g1 = sc.gamma1.cap(), g2 = sc.gamma2.cap();
    const double a1 = sc.alpha1.cap(), a2 = sc.alpha2.cap();
    if (cfg.diagnostics && sc.estimator.kind != EstimatorKind::Sgd) {
      lipschitz = cfg.lipschitz_override > 0.0
                      ? cfg.lipschitz_override
                      : problem.lipschitzHint(z0.x, z0.y).dominant();
      vr = vrConstants(sc.estimator.kind, lipschitz, g1, g2, sc.estimator.batch_size, n,
                       sc.estimator.kind == EstimatorKind::Sarah
                           ? 1.0 / sc.estimator.sarah_refresh_prob
                           : 2.0);
      const double theta_min = cfg.theta1 > 0.0 ? std::min(cfg.theta1, cfg.theta2) : 0.0;
      psi_consts = PsiConstants::make(vr, lipschitz, g1, g2, a1, a2, theta_min, cfg.epsilon);
      with_psi = true;
    }

    out.rows.reserve(static_cast<std::size_t>(total_iters));
    double wall = 0.0;
    for (long k = 0; k < total_iters; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      solver.step();
      wall += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      MetricsRow row;
      row.run_id = out.run_id;
      row.seed = seed;
      row.algorithm = out.algorithm;
      row.iter = k + 1;
      row.epoch = static_cast<double>(solver.componentEvals()) / (2.0 * n);
      row.wall_time_s = wall;
      row.objective = solver.objective();
      row.feasible = solver.feasible();
      if (cfg.diagnostics) {
        row.upsilon = solver.upsilon();
        if (with_psi)
          row.psi = computePsi(row.objective, solver.upsilon(), solver.window(), psi_consts, vr,
                               lipschitz, a1, a2, g1, g2);
        if ((k + 1) % iters_per_epoch == 0 || k + 1 == total_iters)
          row.stationarity = solver.stationarityResidual().combined;
        out.trace.push_back(solver.lastTrace());
      }
      out.rows.push_back(std::move(row));
    }
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
    std::cerr << "run " << out.run_id << " failed: " << e.what() << "\n";
  }
  return out;
}

}  // namespace

ConfigCheck checkAlgorithmConfig(const ExperimentConfig& cfg, const AlgorithmSpec& algo,
                                 const Problem& problem, const BlockPoint& z0) {
  ConfigCheck check;
  const SolverConfig sc = buildSolverConfig(cfg, algo, problem, 0);
  if (sc.estimator.kind == EstimatorKind::Sgd) return check;  // no bound constants for SGD
  check.lipschitz = cfg.lipschitz_override > 0.0
                        ? cfg.lipschitz_override
                        : problem.lipschitzHint(z0.x, z0.y).dominant();
  check.theta1 = cfg.theta1 > 0.0
                     ? cfg.theta1
                     : sc.theta_safety * problem.partialLipschitzX(z0.y);
  check.theta2 = cfg.theta2 > 0.0
                     ? cfg.theta2
                     : sc.theta_safety * problem.partialLipschitzY(z0.x);
  const VRConstants vr =
      vrConstants(sc.estimator.kind, check.lipschitz, sc.gamma1.cap(), sc.gamma2.cap(),
                  sc.estimator.batch_size, problem.componentCount(),
                  sc.estimator.kind == EstimatorKind::Sarah
                      ? 1.0 / sc.estimator.sarah_refresh_prob
                      : 2.0);
  check.stepsize = validateStepsize(check.theta1, check.theta2, check.lipschitz,
                                    sc.alpha1.cap(), sc.alpha2.cap(), sc.gamma1.cap(),
                                    sc.gamma2.cap(), vr, cfg.epsilon);
  check.checked = true;
  return check;
}

bool ExperimentResult::anyFailed() const {
  for (const auto& r : runs)
    if (r.failed) return true;
  return false;
}

std::vector<const MetricsRow*> ExperimentResult::mergedRows() const {
  std::vector<const MetricsRow*> rows;
  for (const auto& r : runs)
    for (const auto& row : r.rows) rows.push_back(&row);
  return rows;
}

ExperimentResult runExperiment(const ExperimentConfig& cfg) {
  cfg.validate();
  BuiltProblem built = buildProblem(cfg.problem);
  const Problem& problem = *built.problem;

  struct Job {
    const AlgorithmSpec* algo;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& algo : cfg.algorithms)
    for (std::uint64_t seed : cfg.seeds) jobs.push_back({&algo, seed});

  ExperimentResult result;
  result.runs.resize(jobs.size());

  unsigned n_threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                       : std::thread::hardware_concurrency();
  n_threads = std::max(1u, std::min<unsigned>(n_threads, static_cast<unsigned>(jobs.size())));

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) break;
      result.runs[j] = executeRun(cfg, *jobs[j].algo, problem, built.initial, jobs[j].seed);
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return result;
}

void emitReport(const ExperimentResult& result, const ExperimentConfig& cfg,
                const std::string& dir) {
  if (result.runs.empty()) throw std::invalid_argument("emitReport: no runs");
  std::filesystem::create_directories(dir);

  {
    std::ofstream csv(dir + "/metrics.csv");
    if (!csv) throw std::runtime_error("cannot write " + dir + "/metrics.csv");
    csv << "run_id,seed,algorithm,epoch,iter,wall_time_s,objective,feasible,psi,stationarity,"
           "upsilon\n";
    for (const auto& run : result.runs) {
      for (const auto& r : run.rows) {
        csv << r.run_id << ',' << r.seed << ',' << r.algorithm << ',' << formatDouble(r.epoch)
            << ',' << r.iter << ',' << formatDouble(r.wall_time_s) << ','
            << formatDouble(r.objective) << ',' << (r.feasible ? 1 : 0) << ',';
        if (r.psi) csv << formatDouble(*r.psi);
        csv << ',';
        if (r.stationarity) csv << formatDouble(*r.stationarity);
        csv << ',';
        if (r.upsilon) csv << formatDouble(*r.upsilon);
        csv << '\n';
      }
    }
  }

  // Per-algorithm summary of final objectives across seeds.
  json summary;
  std::map<std::string, std::vector<const RunOutcome*>> by_algo;
  for (const auto& run : result.runs) by_algo[run.algorithm].push_back(&run);
  for (const auto& [algo, runs] : by_algo) {
    std::vector<double> finals;
    json entry;
    entry["seeds"] = json::array();
    entry["final_objectives"] = json::array();
    bool stepsize_checked = false, stepsize_ok = true;
    int failed = 0;
    for (const RunOutcome* run : runs) {
      entry["seeds"].push_back(run->seed);
      if (run->failed || run->rows.empty()) {
        ++failed;
        continue;
      }
      finals.push_back(run->rows.back().objective);
      entry["final_objectives"].push_back(run->rows.back().objective);
      stepsize_checked = stepsize_checked || run->stepsize_checked;
      stepsize_ok = stepsize_ok && run->stepsize_satisfied;
    }
    double mean = 0.0, stddev = 0.0;
    for (double f : finals) mean += f;
    if (!finals.empty()) mean /= static_cast<double>(finals.size());
    for (double f : finals) stddev += (f - mean) * (f - mean);
    if (finals.size() > 1) stddev = std::sqrt(stddev / static_cast<double>(finals.size() - 1));
    entry["mean_final_objective"] = mean;
    entry["std_final_objective"] = stddev;
    entry["failed_runs"] = failed;
    if (stepsize_checked) entry["stepsize_satisfied"] = stepsize_ok;
    summary[algo] = entry;
  }
  {
    std::ofstream js(dir + "/summary.json");
    js << summary.dump(2) << "\n";
  }

  // Seed-averaged objective curves against epochs and wall time.
  std::vector<SvgSeries> epoch_series, time_series;
  for (const auto& [algo, runs] : by_algo) {
    std::size_t min_len = 0;
    bool first = true;
    for (const RunOutcome* run : runs) {
      if (run->failed || run->rows.empty()) continue;
      min_len = first ? run->rows.size() : std::min(min_len, run->rows.size());
      first = false;
    }
    if (first || min_len == 0) continue;
    SvgSeries se{algo, {}, {}}, st{algo, {}, {}};
    for (std::size_t i = 0; i < min_len; ++i) {
      double epoch = 0.0, time = 0.0, obj = 0.0;
      int count = 0;
      for (const RunOutcome* run : runs) {
        if (run->failed || run->rows.empty()) continue;
        epoch += run->rows[i].epoch;
        time += run->rows[i].wall_time_s;
        obj += run->rows[i].objective;
        ++count;
      }
      se.x.push_back(epoch / count);
      se.y.push_back(obj / count);
      st.x.push_back(time / count);
      st.y.push_back(obj / count);
    }
    epoch_series.push_back(std::move(se));
    time_series.push_back(std::move(st));
  }
  writeSvgPlot(dir + "/plot_epoch.svg", "objective vs epochs", "epochs", "objective",
               epoch_series, false);
  writeSvgPlot(dir + "/plot_time.svg", "objective vs wall time", "seconds", "objective",
               time_series, false);
  (void)cfg;
}

}  // namespace stibpalm
