#include <doctest.h>

#include <cmath>

#include "stibpalm/core.hpp"
#include "stibpalm/rng.hpp"

using namespace stibpalm;

namespace {

Vec vec(std::initializer_list<double> vals) {
  Vec v(static_cast<Index>(vals.size()));
  Index i = 0;
  for (double x : vals) v[i++] = x;
  return v;
}

}  // namespace

TEST_CASE("quadratic Bregman distance is the scaled squared distance") {
  BregmanKernel k{KernelKind::Quadratic, 2.0};
  CHECK(bregmanDistance(k, vec({1, 0}), vec({0, 0})) == doctest::Approx(1.0).epsilon(1e-15));

  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    BregmanKernel kt{KernelKind::Quadratic, 0.1 + 5.0 * rng.uniform01()};
    Vec x(6), y(6);
    for (Index i = 0; i < 6; ++i) {
      x[i] = rng.gaussian();
      y[i] = rng.gaussian();
    }
    const double expected = 0.5 * kt.scale * (x - y).squaredNorm();
    CHECK(bregmanDistance(kt, x, y) ==
          doctest::Approx(expected).epsilon(1e-12).scale(std::max(1.0, expected)));
  }
}

TEST_CASE("Bregman distance vanishes on the diagonal and rejects bad input") {
  for (BregmanKernel k : {BregmanKernel{KernelKind::Quadratic, 3.0},
                          BregmanKernel{KernelKind::Quartic, 1.7}}) {
    const Vec x = vec({0.4, -1.2, 2.0});
    CHECK(bregmanDistance(k, x, x) == 0.0);
  }
  BregmanKernel k{KernelKind::Quadratic, 1.0};
  CHECK_THROWS_AS(bregmanDistance(k, vec({1, 2}), vec({1, 2, 3})), std::invalid_argument);
  Vec bad = vec({1, 2});
  bad[0] = std::nan("");
  CHECK_THROWS_AS(bregmanDistance(k, bad, vec({0, 0})), std::invalid_argument);
  BregmanKernel zero{KernelKind::Quadratic, 0.0};
  CHECK_THROWS_AS(bregmanDistance(zero, vec({1}), vec({0})), std::invalid_argument);
}

TEST_CASE("quartic Bregman distance against the definition") {
  // phi(x) = ||x||^4 for scale 2: D(0, 1) = 0 - 1 - <4, -1> = 3.
  BregmanKernel k{KernelKind::Quartic, 2.0};
  CHECK(bregmanDistance(k, vec({0.0}), vec({1.0})) == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("kernel gradients match the closed forms") {
  BregmanKernel quad{KernelKind::Quadratic, 3.0};
  Vec g(2);
  quad.gradient(vec({1, -2}), g);
  CHECK(g[0] == 3.0);
  CHECK(g[1] == -6.0);

  BregmanKernel quart1{KernelKind::Quartic, 1.0};
  quart1.gradient(vec({0, 0}), g);
  CHECK(g.norm() == 0.0);

  BregmanKernel quart2{KernelKind::Quartic, 2.0};
  Vec g1(1);
  quart2.gradient(vec({1.0}), g1);
  CHECK(g1[0] == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("kernel gradients agree with central finite differences") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const BregmanKernel k = trial % 2 == 0
                                ? BregmanKernel{KernelKind::Quadratic, 0.5 + rng.uniform01()}
                                : BregmanKernel{KernelKind::Quartic, 0.5 + rng.uniform01()};
    Vec x(4);
    for (Index i = 0; i < 4; ++i) x[i] = 2.0 * rng.gaussian();
    Vec grad(4);
    k.gradient(x, grad);
    const double h = 1e-6;
    for (Index i = 0; i < 4; ++i) {
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (k.value(xp) - k.value(xm)) / (2.0 * h);
      CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-6).scale(std::max(1.0, std::abs(fd))));
    }
  }
}

TEST_CASE("strong convexity lower bound") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const BregmanKernel k = trial % 2 == 0
                                ? BregmanKernel{KernelKind::Quadratic, 0.2 + 3.0 * rng.uniform01()}
                                : BregmanKernel{KernelKind::Quartic, 0.2 + rng.uniform01(), 0.5};
    Vec x(5), y(5);
    for (Index i = 0; i < 5; ++i) {
      x[i] = 4.0 * (rng.uniform01() - 0.5);
      y[i] = 4.0 * (rng.uniform01() - 0.5);
    }
    const double lhs = bregmanDistance(k, x, y);
    const double rhs = 0.5 * k.strongConvexity() * (x - y).squaredNorm();
    CHECK(lhs >= rhs - 1e-12);
  }
}

TEST_CASE("kernel moduli bookkeeping") {
  BregmanKernel quad{KernelKind::Quadratic, 2.5};
  CHECK(quad.strongConvexity() == 2.5);
  CHECK(quad.gradLipschitz() == 2.5);

  BregmanKernel quart{KernelKind::Quartic, 2.0, 1.5};
  CHECK(quart.strongConvexity() == 0.0);  // not strongly convex at the origin
  CHECK(quart.regionStrongConvexity() == doctest::Approx(4.0 * 2.25));
  CHECK(quart.gradLipschitz() == doctest::Approx(3.0 * 4.0 * 2.25));
}

TEST_CASE("extrapolation identities") {
  const Vec xk = vec({2.0}), xm1 = vec({1.0}), xm2 = vec({0.0});
  CHECK(extrapolate(xk, xm1, xm2, 0.0, 0.0)[0] == 2.0);
  CHECK(extrapolate(xk, xm1, xm2, 0.5, 0.5)[0] == doctest::Approx(3.0));
  CHECK_THROWS_AS(extrapolate(xk, vec({1, 2}), xm2, 0.1, 0.1), std::invalid_argument);

  // Affine in each argument; constant on equal points.
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Vec a(3), b(3), c(3);
    for (Index i = 0; i < 3; ++i) {
      a[i] = rng.gaussian();
      b[i] = rng.gaussian();
      c[i] = rng.gaussian();
    }
    const double c1 = rng.uniform01(), c2 = rng.uniform01();
    CHECK((extrapolate(a, a, a, c1, c2) - a).norm() == 0.0);
    const Vec left = extrapolate(a, b, c, c1, c2) + extrapolate(c, b, a, c1, c2);
    const Vec right = 2.0 * extrapolate(0.5 * (a + c), b, 0.5 * (a + c), c1, c2);
    CHECK((left - right).norm() <= 1e-12 * std::max(1.0, right.norm()));
  }
}

TEST_CASE("ramp schedule follows (k-1)/(k+2)") {
  const InertialSchedule ramp = InertialSchedule::ramp();
  CHECK(ramp(0) == 0.0);  // clipped
  CHECK(ramp(1) == 0.0);
  CHECK(ramp(10) == doctest::Approx(0.75));
  CHECK(ramp.cap() == 1.0);

  // The extrapolation at k = 1 is the identity under this schedule.
  const Vec xk = vec({5.0}), xm1 = vec({4.0}), xm2 = vec({-1.0});
  CHECK(extrapolate(xk, xm1, xm2, ramp(1), ramp(1))[0] == 5.0);

  const InertialSchedule c = InertialSchedule::constant(0.3);
  CHECK(c(0) == 0.3);
  CHECK(c(123456) == 0.3);
  CHECK(c.cap() == 0.3);
}

TEST_CASE("iterate window starts saturated and shifts") {
  BlockPoint z0{vec({1, 2}), vec({3})};
  IterateWindow w(z0);
  for (int lag = 0; lag < 4; ++lag) {
    CHECK(w.at(lag).x[0] == 1.0);
    CHECK(w.at(lag).y[0] == 3.0);
  }
  CHECK(w.squaredStep(0) == 0.0);

  w.push(BlockPoint{vec({2, 2}), vec({3})});
  CHECK(w.at(0).x[0] == 2.0);
  CHECK(w.at(1).x[0] == 1.0);
  CHECK(w.squaredStep(0) == 1.0);
  CHECK(w.squaredStep(1) == 0.0);

  w.push(BlockPoint{vec({2, 2}), vec({4})});
  w.push(BlockPoint{vec({0, 2}), vec({4})});
  CHECK(w.at(3).x[0] == 1.0);  // the original z0 is now the oldest slot
  CHECK(w.squaredStep(0) == 4.0);
  CHECK(w.squaredStep(1) == 1.0);
  CHECK(w.squaredStep(2) == 1.0);
}
