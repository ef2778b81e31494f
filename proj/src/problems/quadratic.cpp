#include "stibpalm/problems/quadratic.hpp"

#include <Eigen/Dense>
#include <stdexcept>

#include "stibpalm/rng.hpp"

namespace stibpalm {

namespace {

bool satisfies(const Vec& v, SimpleConstraint c) {
  switch (c) {
    case SimpleConstraint::Free: return true;
    case SimpleConstraint::Nonneg: return (v.array() >= 0.0).all();
    case SimpleConstraint::Box01: return (v.array() >= 0.0).all() && (v.array() <= 1.0).all();
  }
  return true;
}

void project(const Vec& v, SimpleConstraint c, Vec& out) {
  switch (c) {
    case SimpleConstraint::Free: out = v; break;
    case SimpleConstraint::Nonneg: out = v.cwiseMax(0.0); break;
    case SimpleConstraint::Box01: out = v.cwiseMax(0.0).cwiseMin(1.0); break;
  }
}

}  // namespace

QuadraticProblem::QuadraticProblem(QuadraticConfig cfg) : cfg_(cfg) {
  if (cfg_.dim_x < 1 || cfg_.dim_y < 1 || cfg_.components < 1)
    throw std::invalid_argument("QuadraticProblem: bad dimensions");
  Rng rng(deriveStream(cfg_.seed, 0x9a2dULL));
  anchors_x_.resize(cfg_.dim_x, cfg_.components);
  anchors_y_.resize(cfg_.dim_y, cfg_.components);
  for (int i = 0; i < cfg_.components; ++i) {
    for (Index r = 0; r < cfg_.dim_x; ++r) anchors_x_(r, i) = rng.gaussian();
    for (Index r = 0; r < cfg_.dim_y; ++r) anchors_y_(r, i) = rng.gaussian();
  }
  coupling_.resize(cfg_.dim_x, cfg_.dim_y);
  for (Index j = 0; j < cfg_.dim_y; ++j)
    for (Index i = 0; i < cfg_.dim_x; ++i) coupling_(i, j) = rng.gaussian();
  if (coupling_.norm() > 0.0) coupling_ *= cfg_.coupling / coupling_.norm();
  coupling_norm_ = coupling_.jacobiSvd().singularValues()(0);
}

double QuadraticProblem::smoothValue(const Vec& x, const Vec& y) const {
  double sum = 0.0;
  for (int i = 0; i < cfg_.components; ++i)
    sum += 0.5 * (x - anchors_x_.col(i)).squaredNorm() +
           0.5 * (y - anchors_y_.col(i)).squaredNorm();
  return sum / cfg_.components + x.dot(coupling_ * y);
}

bool QuadraticProblem::feasibleX(const Vec& x) const { return satisfies(x, cfg_.constraint_x); }
bool QuadraticProblem::feasibleY(const Vec& y) const { return satisfies(y, cfg_.constraint_y); }

void QuadraticProblem::gradXComponent(int i, const Vec& x, const Vec& y, Vec& out) const {
  out = x - anchors_x_.col(i) + coupling_ * y;
}

void QuadraticProblem::gradYComponent(int i, const Vec& x, const Vec& y, Vec& out) const {
  out = y - anchors_y_.col(i) + coupling_.transpose() * x;
}

void QuadraticProblem::gradX(const Vec& x, const Vec& y, Vec& out) const {
  out = x - anchors_x_.rowwise().mean() + coupling_ * y;
}

void QuadraticProblem::gradY(const Vec& x, const Vec& y, Vec& out) const {
  out = y - anchors_y_.rowwise().mean() + coupling_.transpose() * x;
}

void QuadraticProblem::proxX(const Vec& v, double /*scale*/, Vec& out) const {
  project(v, cfg_.constraint_x, out);
}

void QuadraticProblem::proxY(const Vec& v, double /*scale*/, Vec& out) const {
  project(v, cfg_.constraint_y, out);
}

double QuadraticProblem::partialLipschitzX(const Vec& /*y*/) const { return 1.0; }
double QuadraticProblem::partialLipschitzY(const Vec& /*x*/) const { return 1.0; }

LipschitzEstimates QuadraticProblem::lipschitzHint(const Vec& /*x*/, const Vec& /*y*/) const {
  const double bound = 1.0 + coupling_norm_;
  return {bound, bound};
}

BlockPoint QuadraticProblem::unconstrainedMinimizer() const {
  // Stationarity: x - a + C y = 0, y - b + C^T x = 0.
  const Vec a = anchors_x_.rowwise().mean();
  const Vec b = anchors_y_.rowwise().mean();
  Mat lhs = Mat::Identity(cfg_.dim_y, cfg_.dim_y) - coupling_.transpose() * coupling_;
  Vec rhs = b - coupling_.transpose() * a;
  Vec y = lhs.colPivHouseholderQr().solve(rhs);
  Vec x = a - coupling_ * y;
  return {std::move(x), std::move(y)};
}

}  // namespace stibpalm
