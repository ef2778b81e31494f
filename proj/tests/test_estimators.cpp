#include <doctest.h>

#include <cmath>
#include <vector>

#include "stibpalm/estimators.hpp"
#include "stibpalm/problems/quadratic.hpp"
#include "stibpalm/rng.hpp"

using namespace stibpalm;

namespace {

QuadraticProblem makeProblem(int components = 12, Index dx = 5, Index dy = 4) {
  QuadraticConfig cfg;
  cfg.dim_x = dx;
  cfg.dim_y = dy;
  cfg.components = components;
  cfg.coupling = 0.3;
  cfg.seed = 42;
  return QuadraticProblem(cfg);
}

BlockPoint makePoint(const Problem& p, std::uint64_t seed) {
  Rng rng(seed);
  Vec x(p.xDim()), y(p.yDim());
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.gaussian();
  for (Index i = 0; i < y.size(); ++i) y[i] = rng.gaussian();
  return {std::move(x), std::move(y)};
}

// A problem whose component 2 produces a non-finite gradient entry.
class PoisonedProblem final : public QuadraticProblem {
 public:
  using QuadraticProblem::QuadraticProblem;
  void gradXComponent(int i, const Vec& x, const Vec& y, Vec& out) const override {
    QuadraticProblem::gradXComponent(i, x, y, out);
    if (i == 2) out[0] = std::numeric_limits<double>::infinity();
  }
};

}  // namespace

TEST_CASE("variance-reduction constants") {
  SUBCASE("SAGA rho and gamma dependence") {
    VRConstants c = vrConstants(EstimatorKind::Saga, 1.0, 0.0, 0.0, 5, 100, 2.0);
    CHECK(c.rho == doctest::Approx(0.025));
    CHECK(c.v1 == 0.0);  // zero inertia kills the gamma factor
    CHECK(c.v2 == 0.0);
    CHECK(c.v_upsilon == doctest::Approx(408.0 * 100.0 / 25.0));
  }
  SUBCASE("SAGA hand-check table") {
    VRConstants c = vrConstants(EstimatorKind::Saga, 2.0, 0.5, 0.25, 4, 10, 2.0);
    CHECK(c.v1 == doctest::Approx(4.0).epsilon(1e-12));          // 16*4*0.25/4
    CHECK(c.v2 == doctest::Approx(2.0).epsilon(1e-12));          // 4*2*0.5/2
    CHECK(c.v_upsilon == doctest::Approx(1593.75).epsilon(1e-12));
    CHECK(c.rho == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("SARAH hand-check table") {
    VRConstants c = vrConstants(EstimatorKind::Sarah, 3.0, 0.2, 0.1, 4, 10, 4.0);
    CHECK(c.v1 == doctest::Approx(44.145).epsilon(1e-12));       // 6*(3/4)*9*1.09
    CHECK(c.v_upsilon == doctest::Approx(44.145).epsilon(1e-12));
    CHECK(c.v2 == doctest::Approx(std::sqrt(44.145)).epsilon(1e-12));
    CHECK(c.rho == doctest::Approx(0.25));
  }
  SUBCASE("SARAH near the full-refresh limit") {
    VRConstants c = vrConstants(EstimatorKind::Sarah, 3.0, 0.2, 0.1, 4, 10, 1.0 + 1e-9);
    CHECK(c.v1 <= 1e-7);
    CHECK(c.v2 <= 1e-3);
    CHECK(c.rho == doctest::Approx(1.0).epsilon(1e-8));
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(vrConstants(EstimatorKind::Sgd, 1, 0, 0, 5, 100, 2.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(vrConstants(EstimatorKind::Saga, 1, 0, 0, 0, 100, 2.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(vrConstants(EstimatorKind::Saga, 1, 0, 0, 5, 0, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(vrConstants(EstimatorKind::Sarah, 1, 0, 0, 5, 100, 1.0),
                    std::invalid_argument);
  }
  SUBCASE("full estimator is trivially variance-reduced") {
    VRConstants c = vrConstants(EstimatorKind::Full, 1.0, 0.5, 0.5, 1, 1, 2.0);
    CHECK(c.v1 == 0.0);
    CHECK(c.v_upsilon == 0.0);
    CHECK(c.rho == 1.0);
  }
}

TEST_CASE("batch sampler") {
  SUBCASE("degenerate sizes") {
    BatchSampler full(6, 6, 1);
    const auto& batch = full.sample();
    REQUIRE(batch.size() == 6);
    for (int i = 0; i < 6; ++i) CHECK(batch[static_cast<std::size_t>(i)] == i);
    BatchSampler single(1, 1, 1);
    CHECK(single.sample() == std::vector<int>{0});
  }
  SUBCASE("rejects bad batch sizes") {
    CHECK_THROWS_AS(BatchSampler(5, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(BatchSampler(5, 6, 1), std::invalid_argument);
  }
  SUBCASE("uniform marginals over 1e5 draws") {
    BatchSampler sampler(10, 3, 77);
    std::vector<long> counts(10, 0);
    const int draws = 100000;
    for (int d = 0; d < draws; ++d)
      for (int i : sampler.sample()) ++counts[static_cast<std::size_t>(i)];
    const double expect = draws * 0.3;
    const double sigma = std::sqrt(draws * 0.3 * 0.7);
    for (long c : counts) CHECK(std::abs(c - expect) <= 3.0 * sigma);
  }
  SUBCASE("identical seeds give identical sequences") {
    BatchSampler a(20, 4, 123), b(20, 4, 123);
    for (int d = 0; d < 50; ++d) CHECK(a.sample() == b.sample());
  }
  SUBCASE("batches are sorted subsets without repeats") {
    BatchSampler sampler(15, 5, 9);
    for (int d = 0; d < 200; ++d) {
      const auto& batch = sampler.sample();
      for (std::size_t i = 1; i < batch.size(); ++i) CHECK(batch[i - 1] < batch[i]);
      CHECK(batch.front() >= 0);
      CHECK(batch.back() < 15);
    }
  }
}

TEST_CASE("estimator exactness anchors") {
  QuadraticProblem problem = makeProblem();
  const BlockPoint z0 = makePoint(problem, 5);
  Vec exact_x(problem.xDim()), exact_y(problem.yDim());
  problem.gradX(z0.x, z0.y, exact_x);
  problem.gradY(z0.x, z0.y, exact_y);
  std::vector<int> batch{0, 3, 7};

  SUBCASE("full estimator ignores the batch") {
    EstimatorConfig cfg{EstimatorKind::Full, 3};
    GradientEstimator est(cfg, problem, z0.x, z0.y, 1);
    Vec out(problem.xDim());
    est.estimateX(problem, z0.x, z0.y, batch, out);
    CHECK((out - exact_x).norm() == 0.0);
    CHECK(est.upsilon() == 0.0);
  }
  SUBCASE("SAGA with synchronized anchors is exact") {
    for (SagaMode mode : {SagaMode::Literal, SagaMode::Table}) {
      EstimatorConfig cfg{EstimatorKind::Saga, 3, mode};
      GradientEstimator est(cfg, problem, z0.x, z0.y, 1);
      Vec out(problem.xDim());
      est.estimateX(problem, z0.x, z0.y, batch, out);
      CHECK((out - exact_x).norm() <= 1e-13 * std::max(1.0, exact_x.norm()));
      Vec out_y(problem.yDim());
      est.estimateY(problem, z0.x, z0.y, batch, out_y);
      CHECK((out_y - exact_y).norm() <= 1e-13 * std::max(1.0, exact_y.norm()));
    }
  }
  SUBCASE("SGD with the full batch averages exactly") {
    EstimatorConfig cfg{EstimatorKind::Sgd, 12};
    GradientEstimator est(cfg, problem, z0.x, z0.y, 1);
    std::vector<int> all(12);
    for (int i = 0; i < 12; ++i) all[static_cast<std::size_t>(i)] = i;
    Vec out(problem.xDim());
    est.estimateX(problem, z0.x, z0.y, all, out);
    CHECK((out - exact_x).norm() <= 1e-13 * std::max(1.0, exact_x.norm()));
  }
  SUBCASE("SARAH starts from the exact full gradient") {
    EstimatorConfig cfg{EstimatorKind::Sarah, 3, SagaMode::Table, 0.25};
    GradientEstimator est(cfg, problem, z0.x, z0.y, 1);
    Vec out(problem.xDim());
    est.estimateX(problem, z0.x, z0.y, batch, out);
    CHECK((out - exact_x).norm() == 0.0);
    CHECK(est.lastRefresh() == RefreshDecision::FullRefresh);
    CHECK(est.upsilon() == 0.0);
  }
  SUBCASE("SARAH refresh yields the exact gradient at the evaluation point") {
    EstimatorConfig cfg{EstimatorKind::Sarah, 3, SagaMode::Table, 0.9999};
    GradientEstimator est(cfg, problem, z0.x, z0.y, 1);
    Vec out(problem.xDim()), out_y(problem.yDim());
    est.estimateX(problem, z0.x, z0.y, batch, out);
    est.estimateY(problem, z0.x, z0.y, batch, out_y);
    const BlockPoint z1 = makePoint(problem, 6);
    est.estimateX(problem, z1.x, z1.y, batch, out);  // refresh almost surely
    REQUIRE(est.lastRefresh() == RefreshDecision::FullRefresh);
    Vec exact1(problem.xDim());
    problem.gradX(z1.x, z1.y, exact1);
    CHECK((out - exact1).norm() == 0.0);
    est.estimateY(problem, z1.x, z1.y, batch, out_y);
    Vec exact1y(problem.yDim());
    problem.gradY(z1.x, z1.y, exact1y);
    CHECK((out_y - exact1y).norm() == 0.0);
  }
}

TEST_CASE("restart coin") {
  QuadraticProblem problem = makeProblem();
  const BlockPoint z0 = makePoint(problem, 5);
  SUBCASE("p = 1 is rejected, p slightly above 1 refreshes almost always") {
    EstimatorConfig bad{EstimatorKind::Sarah, 3, SagaMode::Table, 1.0};
    CHECK_THROWS_AS(bad.validate(12), std::invalid_argument);
    EstimatorConfig cfg{EstimatorKind::Sarah, 3, SagaMode::Table, 0.9999};
    GradientEstimator est(cfg, problem, z0.x, z0.y, 3);
    int refreshes = 0;
    const int flips = 100000;
    for (int i = 0; i < flips; ++i)
      refreshes += est.flipRestart() == RefreshDecision::FullRefresh ? 1 : 0;
    CHECK(static_cast<double>(refreshes) / flips >= 0.999);
  }
  SUBCASE("empirical frequency at p = 20 and p = 64") {
    for (double q : {1.0 / 20.0, 1.0 / 64.0}) {
      EstimatorConfig cfg{EstimatorKind::Sarah, 3, SagaMode::Table, q};
      GradientEstimator est(cfg, problem, z0.x, z0.y, 11);
      long refreshes = 0;
      const int flips = 100000;
      for (int i = 0; i < flips; ++i)
        refreshes += est.flipRestart() == RefreshDecision::FullRefresh ? 1 : 0;
      const double sigma = std::sqrt(flips * q * (1.0 - q));
      CHECK(std::abs(refreshes - flips * q) <= 3.0 * sigma);
    }
  }
}

TEST_CASE("unbiasedness of SGD and SAGA at a fixed point") {
  QuadraticProblem problem = makeProblem();
  const BlockPoint z0 = makePoint(problem, 5);
  const BlockPoint z1 = makePoint(problem, 6);

  for (EstimatorKind kind : {EstimatorKind::Sgd, EstimatorKind::Saga}) {
    EstimatorConfig cfg{kind, 3, SagaMode::Literal};
    GradientEstimator prototype(cfg, problem, z0.x, z0.y, 1);
    if (kind == EstimatorKind::Saga) {
      // Walk the anchors away from the evaluation point first.
      BatchSampler warm(12, 3, 99);
      Vec dx(problem.xDim()), dy(problem.yDim());
      for (int s = 0; s < 4; ++s) {
        prototype.estimateX(problem, makePoint(problem, 100 + s).x, z0.y, warm.sample(), dx);
        prototype.estimateY(problem, z0.x, makePoint(problem, 200 + s).y, warm.sample(), dy);
      }
    }
    Vec exact(problem.xDim());
    problem.gradX(z1.x, z1.y, exact);

    BatchSampler sampler(12, 3, 7);
    const int draws = 10000;
    Mat samples(problem.xDim(), draws);
    for (int d = 0; d < draws; ++d) {
      GradientEstimator fresh = prototype;
      Vec out(problem.xDim());
      fresh.estimateX(problem, z1.x, z1.y, sampler.sample(), out);
      samples.col(d) = out;
    }
    const Vec mean = samples.rowwise().mean();
    for (Index i = 0; i < problem.xDim(); ++i) {
      const double var =
          (samples.row(i).array() - mean[i]).square().sum() / (draws - 1);
      const double se = std::sqrt(var / draws);
      CHECK(std::abs(mean[i] - exact[i]) <= 4.0 * se + 1e-10 * (1.0 + std::abs(exact[i])));
    }
  }
}

TEST_CASE("upsilon trackers") {
  QuadraticProblem problem = makeProblem();
  const BlockPoint z0 = makePoint(problem, 5);
  std::vector<int> batch{1, 5, 9};

  SUBCASE("SAGA with anchors at the current point tracks zero") {
    EstimatorConfig cfg{EstimatorKind::Saga, 3, SagaMode::Literal};
    GradientEstimator est(cfg, problem, z0.x, z0.y, 1);
    est.computeTrackers(problem, z0.x, z0.y, z0.x, z0.y);
    CHECK(est.upsilon() == 0.0);
    CHECK(est.gammaTracker() == 0.0);
  }
  SUBCASE("SAGA tracker decomposes into the weighted anchor mismatches") {
    EstimatorConfig cfg{EstimatorKind::Saga, 2, SagaMode::Literal};
    GradientEstimator est(cfg, problem, z0.x, z0.y, 1);
    const BlockPoint z1 = makePoint(problem, 8);
    est.computeTrackers(problem, z1.x, z1.y, z1.x, z1.y);
    double want = 0.0;
    Vec fresh(problem.xDim()), anchored(problem.xDim());
    for (int j = 0; j < 12; ++j) {
      problem.gradXComponent(j, z1.x, z1.y, fresh);
      problem.gradXComponent(j, z0.x, z1.y, anchored);
      want += (fresh - anchored).squaredNorm();
      Vec fy(problem.yDim()), ay(problem.yDim());
      problem.gradYComponent(j, z1.x, z1.y, fy);
      problem.gradYComponent(j, z1.x, z0.y, ay);
      want += 4.0 * (fy - ay).squaredNorm();
    }
    want /= 2.0 * 12.0;
    CHECK(est.upsilon() == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("SARAH realized error is zero exactly at a refresh") {
    EstimatorConfig cfg{EstimatorKind::Sarah, 3, SagaMode::Table, 0.25};
    GradientEstimator est(cfg, problem, z0.x, z0.y, 1);
    Vec dx(problem.xDim()), dy(problem.yDim());
    est.estimateX(problem, z0.x, z0.y, batch, dx);
    est.estimateY(problem, z0.x, z0.y, batch, dy);
    const RealizedError err = est.recordRealizedError(problem, z0.x, z0.y, z0.x, z0.y, dx, dy);
    CHECK(err.squared == 0.0);
    CHECK(est.upsilon() == 0.0);
  }
}

TEST_CASE("bitwise determinism of estimator streams") {
  QuadraticProblem problem = makeProblem();
  const BlockPoint z0 = makePoint(problem, 5);
  EstimatorConfig cfg{EstimatorKind::Sarah, 3, SagaMode::Table, 0.2};

  GradientEstimator a(cfg, problem, z0.x, z0.y, 31);
  GradientEstimator b(cfg, problem, z0.x, z0.y, 31);
  BatchSampler sa(12, 3, 17), sb(12, 3, 17);
  Vec outa(problem.xDim()), outb(problem.xDim());
  Vec outay(problem.yDim()), outby(problem.yDim());
  for (int k = 0; k < 60; ++k) {
    const BlockPoint z = makePoint(problem, 300 + k);
    a.estimateX(problem, z.x, z.y, sa.sample(), outa);
    b.estimateX(problem, z.x, z.y, sb.sample(), outb);
    REQUIRE((outa.array() == outb.array()).all());  // bitwise
    a.estimateY(problem, z.x, z.y, sa.sample(), outay);
    b.estimateY(problem, z.x, z.y, sb.sample(), outby);
    REQUIRE((outay.array() == outby.array()).all());
  }
}

TEST_CASE("non-finite component gradients are reported with their index") {
  QuadraticConfig qcfg;
  qcfg.components = 12;
  qcfg.seed = 42;
  PoisonedProblem problem(qcfg);
  const BlockPoint z0 = makePoint(problem, 5);
  EstimatorConfig cfg{EstimatorKind::Sgd, 3};
  GradientEstimator est(cfg, problem, z0.x, z0.y, 1);
  std::vector<int> batch{1, 2, 3};
  Vec out(problem.xDim());
  try {
    est.estimateX(problem, z0.x, z0.y, batch, out);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("component 2") != std::string::npos);
  }
}
