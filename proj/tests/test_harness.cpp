#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stibpalm/harness.hpp"
#include "stibpalm/io.hpp"
#include "stibpalm/rng.hpp"

using namespace stibpalm;

namespace {

std::string tempDir(const char* tag) {
  auto dir = std::filesystem::temp_directory_path() / (std::string("stibpalm_test_") + tag);
  std::filesystem::create_directories(dir);
  return dir.string();
}

void writeFile(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("csv matrix round trip and error reporting") {
  const std::string dir = tempDir("csv");
  SUBCASE("basic grid") {
    writeFile(dir + "/a.csv", "1,2\n3,4\n");
    const Mat m = loadMatrixCsv(dir + "/a.csv");
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 2);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(0, 1) == 2.0);
    CHECK(m(1, 0) == 3.0);
    CHECK(m(1, 1) == 4.0);
  }
  SUBCASE("ragged rows are rejected with the line number") {
    writeFile(dir + "/ragged.csv", "1,2\n3\n");
    try {
      loadMatrixCsv(dir + "/ragged.csv");
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("doubles survive the round trip") {
    Rng rng(3);
    Mat m(4, 3);
    for (Index j = 0; j < 3; ++j)
      for (Index i = 0; i < 4; ++i) m(i, j) = rng.gaussian() * std::pow(10.0, i - 2);
    saveMatrixCsv(m, dir + "/rt.csv");
    const Mat back = loadMatrixCsv(dir + "/rt.csv");
    CHECK((back.array() == m.array()).all());
  }
}

TEST_CASE("binary matrix format is bit-exact") {
  const std::string dir = tempDir("bin");
  Rng rng(7);
  Mat m(10, 7);
  for (Index j = 0; j < 7; ++j)
    for (Index i = 0; i < 10; ++i) m(i, j) = rng.gaussian();
  saveMatrixBin(m, dir + "/m.bin");
  const Mat back = loadMatrixBin(dir + "/m.bin");
  REQUIRE(back.rows() == 10);
  REQUIRE(back.cols() == 7);
  CHECK((back.array() == m.array()).all());

  saveMatrixBin(back, dir + "/m2.bin");
  CHECK(readFile(dir + "/m.bin") == readFile(dir + "/m2.bin"));

  writeFile(dir + "/bad.bin", "MTXAxxxx");
  CHECK_THROWS_AS(loadMatrixBin(dir + "/bad.bin"), std::runtime_error);
  writeFile(dir + "/trunc.bin", std::string("MTXB") + std::string(8, '\x01'));
  CHECK_THROWS_AS(loadMatrixBin(dir + "/trunc.bin"), std::runtime_error);
}

TEST_CASE("pgm loading") {
  const std::string dir = tempDir("pgm");
  SUBCASE("ascii and binary encodings agree") {
    writeFile(dir + "/a.pgm", "P2\n# comment\n2 2\n255\n0 255\n128 64\n");
    const Mat p2 = loadPgm(dir + "/a.pgm");
    REQUIRE(p2.rows() == 2);
    REQUIRE(p2.cols() == 2);
    CHECK(p2(0, 0) == 0.0);
    CHECK(p2(0, 1) == 1.0);
    CHECK(p2(1, 0) == doctest::Approx(128.0 / 255.0));
    CHECK(p2(1, 1) == doctest::Approx(64.0 / 255.0));

    std::string p5 = "P5\n2 2\n255\n";
    p5.push_back('\x00');
    p5.push_back('\xff');
    p5.push_back('\x80');
    p5.push_back('\x40');
    writeFile(dir + "/b.pgm", p5);
    const Mat bin = loadPgm(dir + "/b.pgm");
    CHECK((bin.array() == p2.array()).all());
  }
  SUBCASE("unsupported magic") {
    writeFile(dir + "/c.pgm", "P7\n2 2\n255\n");
    try {
      loadPgm(dir + "/c.pgm");
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("unsupported magic") != std::string::npos);
    }
  }
  SUBCASE("truncated binary payload") {
    writeFile(dir + "/d.pgm", "P5\n4 4\n255\nxx");
    CHECK_THROWS_AS(loadPgm(dir + "/d.pgm"), std::runtime_error);
  }
}

TEST_CASE("batch size from the subsample fraction") {
  CHECK(batchSizeFromFraction(2414, 0.05) == 120);  // floor
  CHECK(batchSizeFromFraction(10, 0.05) == 1);      // at least one
  CHECK(batchSizeFromFraction(100, 1.0) == 100);
}

TEST_CASE("config parsing") {
  const std::string base = R"({
    "problem": {"type": "snmf", "synthetic": {"rows": 24, "cols": 18, "rank": 3, "seed": 5},
                 "rank": 3, "sparsity_fraction": 0.25, "eta": 3.0},
    "algorithms": [{"preset": "palm"}, {"preset": "stibpalm", "estimator": "sarah",
                    "refresh_prob": 0.1}],
    "batch_fraction": 0.2, "epochs": 2, "seeds": [1, 2], "output_dir": "out"})";

  SUBCASE("round trip of the main fields") {
    const ExperimentConfig cfg = parseExperimentConfig(base);
    CHECK(cfg.problem.type == "snmf");
    CHECK(cfg.algorithms.size() == 2);
    CHECK(cfg.algorithms[0].preset == Preset::Palm);
    CHECK(cfg.algorithms[1].estimator == EstimatorKind::Sarah);
    CHECK(cfg.algorithms[1].displayName() == "stibpalm-sarah");
    CHECK(cfg.epochs == 2);
    CHECK(cfg.seeds.size() == 2);
  }
  SUBCASE("unknown keys are rejected in strict mode") {
    std::string text = base;
    text.insert(text.size() - 1, ", \"typo_key\": 1, \"strict\": true");
    CHECK_THROWS_AS(parseExperimentConfig(text), std::invalid_argument);
    std::string lax = base;
    lax.insert(lax.size() - 1, ", \"typo_key\": 1");
    CHECK_NOTHROW(parseExperimentConfig(lax));  // warns only
  }
  SUBCASE("validation failures") {
    CHECK_THROWS_AS(parseExperimentConfig(R"({"problem": {"type": "snmf"}})"),
                    std::invalid_argument);
    std::string bad = base;
    bad.insert(bad.size() - 1, ", \"batch_fraction\": 0.0");
    CHECK_THROWS(parseExperimentConfig(bad));
  }
  SUBCASE("missing config file") {
    CHECK_THROWS_AS(loadExperimentConfig("/nonexistent/path.json"), std::invalid_argument);
  }
}

TEST_CASE("experiment runner end to end") {
  const std::string dir = tempDir("run");
  ExperimentConfig cfg = parseExperimentConfig(R"({
    "problem": {"type": "snmf", "synthetic": {"rows": 20, "cols": 15, "rank": 3, "seed": 5},
                 "rank": 3, "sparsity_fraction": 0.25, "eta": 3.0},
    "algorithms": [{"preset": "palm"}, {"preset": "stibpalm", "estimator": "sarah",
                    "refresh_prob": 0.1}],
    "batch_fraction": 0.2, "epochs": 3, "seeds": [1, 2, 3]})");
  cfg.output_dir = dir;
  cfg.threads = 2;

  const ExperimentResult result = runExperiment(cfg);
  REQUIRE(result.runs.size() == 6);
  CHECK_FALSE(result.anyFailed());

  SUBCASE("deterministic objectives and descent for the full-gradient run") {
    for (const auto& run : result.runs) {
      REQUIRE_FALSE(run.rows.empty());
      if (run.algorithm == "palm") {
        CHECK(run.rows.size() == 3);  // one iteration per epoch at b = n
        double prev = std::numeric_limits<double>::infinity();
        for (const auto& row : run.rows) {
          CHECK(row.objective <= prev + 1e-12);
          CHECK(row.feasible);
          prev = row.objective;
        }
      } else {
        CHECK(run.rows.size() == 3 * 5);  // ceil(20 / 4) iterations per epoch
      }
    }
  }

  SUBCASE("rerunning the config reproduces everything but wall time") {
    const ExperimentResult again = runExperiment(cfg);
    REQUIRE(again.runs.size() == result.runs.size());
    for (std::size_t r = 0; r < result.runs.size(); ++r) {
      REQUIRE(again.runs[r].rows.size() == result.runs[r].rows.size());
      for (std::size_t i = 0; i < result.runs[r].rows.size(); ++i) {
        const MetricsRow& a = result.runs[r].rows[i];
        const MetricsRow& b = again.runs[r].rows[i];
        CHECK(a.run_id == b.run_id);
        CHECK(a.epoch == b.epoch);
        CHECK(a.objective == b.objective);
        CHECK(a.feasible == b.feasible);
      }
    }
  }

  SUBCASE("report files") {
    emitReport(result, cfg, dir);
    const std::string csv = readFile(dir + "/metrics.csv");
    CHECK(csv.rfind("run_id,seed,algorithm,epoch,iter,wall_time_s,objective,feasible,psi,"
                    "stationarity,upsilon\n",
                    0) == 0);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n' ? 1 : 0;
    CHECK(lines == 1 + 3 * 3 + 3 * 15);  // header + palm rows + stochastic rows

    const std::string summary = readFile(dir + "/summary.json");
    CHECK(summary.find("\"palm\"") != std::string::npos);
    CHECK(summary.find("\"stibpalm-sarah\"") != std::string::npos);
    CHECK(summary.find("mean_final_objective") != std::string::npos);

    const std::string svg = readFile(dir + "/plot_epoch.svg");
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(readFile(dir + "/plot_time.svg").find("<svg") == 0);
  }
}

TEST_CASE("metrics of a three-iteration run produce exactly three rows") {
  ExperimentConfig cfg = parseExperimentConfig(R"({
    "problem": {"type": "quadratic", "dim_x": 4, "dim_y": 3, "components": 6},
    "algorithms": [{"preset": "palm"}],
    "epochs": 3, "seeds": [1], "theta1": 3.0, "theta2": 3.0})");
  const std::string dir = tempDir("rows");
  cfg.output_dir = dir;
  const ExperimentResult result = runExperiment(cfg);
  REQUIRE(result.runs.size() == 1);
  CHECK(result.runs[0].rows.size() == 3);
  emitReport(result, cfg, dir);
  std::size_t lines = 0;
  for (char c : readFile(dir + "/metrics.csv")) lines += c == '\n' ? 1 : 0;
  CHECK(lines == 4);
}

TEST_CASE("flat curves still render") {
  const std::string dir = tempDir("svg");
  SvgSeries s{"flat", {0, 1, 2}, {5.0, 5.0, 5.0}};
  writeSvgPlot(dir + "/flat.svg", "t", "x", "y", {s}, false);
  const std::string svg = readFile(dir + "/flat.svg");
  CHECK(svg.find("<polyline") != std::string::npos);
}

TEST_CASE("synthetic matrix generation is deterministic") {
  SnmfSynthSpec spec;
  spec.rows = 20;
  spec.cols = 15;
  spec.rank = 5;
  spec.seed = 7;
  const Mat a = makeSnmfData(spec);
  const Mat b = makeSnmfData(spec);
  CHECK((a.array() == b.array()).all());
  spec.seed = 8;
  CHECK_FALSE((makeSnmfData(spec).array() == a.array()).all());
}

TEST_CASE("step-size check on a hand-set configuration") {
  // theta = 1.5 against L = 1 with everything else off: margin 0.5 - 6 eps.
  ExperimentConfig cfg = parseExperimentConfig(R"({
    "problem": {"type": "quadratic", "dim_x": 4, "dim_y": 3, "components": 6},
    "algorithms": [{"preset": "palm"}],
    "epochs": 1, "seeds": [1], "theta1": 1.5, "theta2": 1.5,
    "lipschitz": 1.0, "epsilon": 0.001})");
  BuiltProblem built = buildProblem(cfg.problem);
  const ConfigCheck check =
      checkAlgorithmConfig(cfg, cfg.algorithms[0], *built.problem, built.initial);
  REQUIRE(check.checked);
  CHECK(check.stepsize.satisfied);
  CHECK(check.stepsize.margin == doctest::Approx(0.5 - 0.006).epsilon(1e-12));
}

TEST_CASE("results are independent of the worker count") {
  ExperimentConfig cfg = parseExperimentConfig(R"({
    "problem": {"type": "snmf", "synthetic": {"rows": 16, "cols": 12, "rank": 3, "seed": 3},
                 "rank": 3, "sparsity_fraction": 0.25, "eta": 3.0},
    "algorithms": [{"preset": "stibpalm", "estimator": "saga", "theta_safety": 6.0},
                    {"preset": "palm"}],
    "batch_fraction": 0.25, "epochs": 4, "seeds": [1, 2, 3, 4]})");
  cfg.threads = 1;
  const ExperimentResult serial = runExperiment(cfg);
  cfg.threads = 4;
  const ExperimentResult parallel = runExperiment(cfg);
  REQUIRE(serial.runs.size() == parallel.runs.size());
  for (std::size_t r = 0; r < serial.runs.size(); ++r) {
    REQUIRE(serial.runs[r].run_id == parallel.runs[r].run_id);
    REQUIRE(serial.runs[r].rows.size() == parallel.runs[r].rows.size());
    for (std::size_t i = 0; i < serial.runs[r].rows.size(); ++i) {
      CHECK(serial.runs[r].rows[i].objective == parallel.runs[r].rows[i].objective);
      CHECK(serial.runs[r].rows[i].epoch == parallel.runs[r].rows[i].epoch);
    }
  }
}

TEST_CASE("sixteen-bit binary pgm uses big-endian samples") {
  const std::string dir = tempDir("pgm16");
  std::string p5 = "P5\n2 1\n65535\n";
  p5.push_back('\x01');  // 0x0100 = 256
  p5.push_back('\x00');
  p5.push_back('\xff');  // 0xffff = 65535
  p5.push_back('\xff');
  writeFile(dir + "/w.pgm", p5);
  const Mat img = loadPgm(dir + "/w.pgm");
  REQUIRE(img.rows() == 1);
  REQUIRE(img.cols() == 2);
  CHECK(img(0, 0) == doctest::Approx(256.0 / 65535.0));
  CHECK(img(0, 1) == 1.0);
}

TEST_CASE("strict mode turns a violated step-size condition into a failed run") {
  ExperimentConfig cfg = parseExperimentConfig(R"({
    "problem": {"type": "quadratic", "dim_x": 4, "dim_y": 3, "components": 6},
    "algorithms": [{"preset": "palm"}],
    "epochs": 2, "seeds": [1], "theta1": 0.5, "theta2": 0.5, "lipschitz": 1.0})");
  ExperimentResult lax = runExperiment(cfg);
  REQUIRE(lax.runs.size() == 1);
  CHECK_FALSE(lax.runs[0].failed);          // warning only
  CHECK_FALSE(lax.runs[0].stepsize_satisfied);
  CHECK_FALSE(lax.runs[0].rows.empty());

  cfg.strict = true;
  ExperimentResult strict = runExperiment(cfg);
  REQUIRE(strict.runs.size() == 1);
  CHECK(strict.runs[0].failed);
  CHECK(strict.runs[0].rows.empty());
  CHECK(strict.anyFailed());
}

TEST_CASE("deblurring config loads the image from a pgm file") {
  const std::string dir = tempDir("bidpgm");
  // 16x16 checkerboard-ish image.
  std::string pgm = "P2\n16 16\n255\n";
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) pgm += ((i / 4 + j / 4) % 2 ? "200 " : "40 ");
  writeFile(dir + "/img.pgm", pgm);

  ExperimentConfig cfg = parseExperimentConfig(R"({
    "problem": {"type": "bid", "image": ")" + dir + R"(/img.pgm", "kernel_size": 3,
                 "blur": "disk", "sigma": 1e3, "eta": 5e-5, "strips": 8},
    "algorithms": [{"preset": "spring", "estimator": "sarah", "refresh_prob": 0.25,
                     "theta_safety": 2.0}],
    "batch_fraction": 0.25, "epochs": 2, "seeds": [1]})");
  const ExperimentResult result = runExperiment(cfg);
  REQUIRE(result.runs.size() == 1);
  CHECK_FALSE(result.runs[0].failed);
  CHECK(result.runs[0].rows.back().feasible);
}

TEST_CASE("plain stochastic gradients fail the error bound as a negative control") {
  ExperimentConfig cfg = parseExperimentConfig(R"({
    "problem": {"type": "snmf", "synthetic": {"rows": 16, "cols": 12, "rank": 3, "seed": 3},
                 "rank": 3, "sparsity_fraction": 0.25, "eta": 3.0},
    "algorithms": [{"preset": "spring", "estimator": "sgd", "theta_safety": 8.0}],
    "batch_fraction": 0.25, "epochs": 4, "seeds": [1,2,3,4,5,6],
    "diagnostics": true})");
  const ExperimentResult result = runExperiment(cfg);
  std::vector<std::vector<StepTrace>> traces;
  for (const auto& run : result.runs) {
    REQUIRE_FALSE(run.failed);
    traces.push_back(run.trace);
  }
  // SGD offers no variance-reduction constants. The refutable claim is that
  // its errors are controlled by the displacement terms alone, so the tracked
  // column is zeroed and the violations should be near-universal.
  for (auto& seed_trace : traces)
    for (auto& row : seed_trace) row.upsilon = 0.0;
  const MseReport rep = checkMseBound(traces, VRConstants{0.0, 0.0, 0.0, 1.0});
  CHECK(rep.violation_rate > 0.5);  // far beyond the 5% tolerance of conforming kinds
  CHECK(rep.max_excess > 0.0);
}

TEST_CASE("log-scale plots drop nonpositive values") {
  const std::string dir = tempDir("logsvg");
  SvgSeries s{"decay", {0, 1, 2, 3}, {1.0, 0.1, 0.0, 0.01}};
  writeSvgPlot(dir + "/log.svg", "t", "x", "y", {s}, true);
  const std::string svg = readFile(dir + "/log.svg");
  CHECK(svg.find("<polyline") != std::string::npos);
}
