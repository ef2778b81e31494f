#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "stibpalm/types.hpp"

namespace stibpalm {

/// Largest eigenvalue of a symmetric PSD operator given by its apply. Stops
/// when the Rayleigh quotient stabilizes to `rel_tol`; throws with the last
/// estimate if `max_iter` is exhausted.
inline double powerIterationLargestEigen(const std::function<void(const Vec&, Vec&)>& apply,
                                         Index dim, double rel_tol = 1e-6, int max_iter = 500) {
  Vec v = Vec::Ones(dim);
  for (Index i = 0; i < dim; ++i) v[i] += 0.01 * std::sin(static_cast<double>(i + 1));
  v /= v.norm();
  Vec w(dim);
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    apply(v, w);
    const double norm = w.norm();
    if (norm <= 1e-300) return 0.0;
    const double lambda_next = v.dot(w);
    if (it > 0 && std::abs(lambda_next - lambda) <=
                      rel_tol * std::max(std::abs(lambda_next), 1e-300))
      return lambda_next;
    lambda = lambda_next;
    v = w / norm;
  }
  throw std::runtime_error("power iteration did not converge; last estimate " +
                           std::to_string(lambda));
}

}  // namespace stibpalm
