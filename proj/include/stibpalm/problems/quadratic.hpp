#pragma once

#include <cstdint>

#include "stibpalm/core.hpp"
#include "stibpalm/problem.hpp"

namespace stibpalm {

enum class SimpleConstraint { Free, Nonneg, Box01 };

/// Strongly-convex-in-blocks quadratic test problem
///   H_i(x, y) = 1/2 ||x - a_i||^2 + 1/2 ||y - b_i||^2 + x^T C y
/// with optional elementwise constraints on either block. Smooth, KL exponent
/// 1/2; used as the synthetic instance for rate smoke checks and as a plain
/// sandbox for subproblem and estimator tests.
struct QuadraticConfig {
  Index dim_x = 8;
  Index dim_y = 6;
  int components = 10;
  double coupling = 0.2;  // Frobenius scale of C
  std::uint64_t seed = 1;
  SimpleConstraint constraint_x = SimpleConstraint::Free;
  SimpleConstraint constraint_y = SimpleConstraint::Free;
};

class QuadraticProblem : public Problem {
 public:
  explicit QuadraticProblem(QuadraticConfig cfg);

  Index xDim() const override { return cfg_.dim_x; }
  Index yDim() const override { return cfg_.dim_y; }
  int componentCount() const override { return cfg_.components; }

  double smoothValue(const Vec& x, const Vec& y) const override;
  bool feasibleX(const Vec& x) const override;
  bool feasibleY(const Vec& y) const override;

  void gradXComponent(int i, const Vec& x, const Vec& y, Vec& out) const override;
  void gradYComponent(int i, const Vec& x, const Vec& y, Vec& out) const override;
  void gradX(const Vec& x, const Vec& y, Vec& out) const override;
  void gradY(const Vec& x, const Vec& y, Vec& out) const override;

  void proxX(const Vec& v, double scale, Vec& out) const override;
  void proxY(const Vec& v, double scale, Vec& out) const override;

  double partialLipschitzX(const Vec& y) const override;
  double partialLipschitzY(const Vec& x) const override;
  LipschitzEstimates lipschitzHint(const Vec& x, const Vec& y) const override;

  /// Unique minimizer in the unconstrained case (for rate checks).
  BlockPoint unconstrainedMinimizer() const;

 private:
  QuadraticConfig cfg_;
  Mat anchors_x_;  // dim_x x n
  Mat anchors_y_;  // dim_y x n
  Mat coupling_;
  double coupling_norm_;
};

}  // namespace stibpalm
