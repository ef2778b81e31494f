#pragma once

#include <algorithm>
#include <span>
#include <stdexcept>
#include <vector>

#include "stibpalm/types.hpp"

namespace stibpalm {

/// Smoothness bounds used by the step-size condition and the diagnostics
/// constants. `per_component` bounds the partial gradients of every component
/// H_i on the region of interest; `whole_gradient` bounds the full gradient of
/// H. The finite-sum convention H = (1/n) sum H_i puts a factor n between the
/// two for row/strip decompositions.
struct LipschitzEstimates {
  double per_component = 0.0;
  double whole_gradient = 0.0;

  double dominant() const { return std::max(per_component, whole_gradient); }
};

/// A composite objective f(x) + H(x,y) + g(y) with finite-sum smooth part
/// H = (1/n) sum_i H_i. f and g enter only through their proximal maps and
/// feasibility predicates (both are indicator functions in the bundled
/// problems; infeasibility is reported as a flag, never as an infinity).
class Problem {
 public:
  virtual ~Problem() = default;

  virtual Index xDim() const = 0;
  virtual Index yDim() const = 0;
  virtual int componentCount() const = 0;

  virtual double smoothValue(const Vec& x, const Vec& y) const = 0;
  virtual bool feasibleX(const Vec& x) const = 0;
  virtual bool feasibleY(const Vec& y) const = 0;

  /// Gradient of the component H_i (finite-sum convention, so averaging over
  /// all i reproduces the exact partial gradient).
  virtual void gradXComponent(int i, const Vec& x, const Vec& y, Vec& out) const = 0;
  virtual void gradYComponent(int i, const Vec& x, const Vec& y, Vec& out) const = 0;

  /// (1/|batch|) sum_{i in batch} grad H_i. Overridden when components share
  /// work at a common evaluation point.
  virtual void gradXBatchMean(std::span<const int> batch, const Vec& x, const Vec& y,
                              Vec& out) const {
    if (batch.empty()) throw std::invalid_argument("gradXBatchMean: empty batch");
    Vec comp(xDim());
    out.setZero(xDim());
    for (int i : batch) {
      gradXComponent(i, x, y, comp);
      out += comp;
    }
    out /= static_cast<double>(batch.size());
  }

  virtual void gradYBatchMean(std::span<const int> batch, const Vec& x, const Vec& y,
                              Vec& out) const {
    if (batch.empty()) throw std::invalid_argument("gradYBatchMean: empty batch");
    Vec comp(yDim());
    out.setZero(yDim());
    for (int i : batch) {
      gradYComponent(i, x, y, comp);
      out += comp;
    }
    out /= static_cast<double>(batch.size());
  }

  /// Individual component gradients for every index in the batch, evaluated
  /// at one common point. Overridden when components share work there.
  virtual void gradXComponents(std::span<const int> batch, const Vec& x, const Vec& y,
                               std::vector<Vec>& outs) const {
    outs.resize(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) gradXComponent(batch[j], x, y, outs[j]);
  }

  virtual void gradYComponents(std::span<const int> batch, const Vec& x, const Vec& y,
                               std::vector<Vec>& outs) const {
    outs.resize(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) gradYComponent(batch[j], x, y, outs[j]);
  }

  /// Exact partial gradients of H.
  virtual void gradX(const Vec& x, const Vec& y, Vec& out) const {
    Vec comp(xDim());
    out.setZero(xDim());
    for (int i = 0; i < componentCount(); ++i) {
      gradXComponent(i, x, y, comp);
      out += comp;
    }
    out /= static_cast<double>(componentCount());
  }

  virtual void gradY(const Vec& x, const Vec& y, Vec& out) const {
    Vec comp(yDim());
    out.setZero(yDim());
    for (int i = 0; i < componentCount(); ++i) {
      gradYComponent(i, x, y, comp);
      out += comp;
    }
    out /= static_cast<double>(componentCount());
  }

  /// prox of f at v with curvature `scale`: argmin f(u) + (scale/2)||u - v||^2.
  /// For indicators this is the Euclidean projection, independent of scale.
  virtual void proxX(const Vec& v, double scale, Vec& out) const = 0;
  virtual void proxY(const Vec& v, double scale, Vec& out) const = 0;

  /// Lipschitz modulus of grad_x H(., y) for fixed y, and symmetrically.
  virtual double partialLipschitzX(const Vec& y) const = 0;
  virtual double partialLipschitzY(const Vec& x) const = 0;

  virtual LipschitzEstimates lipschitzHint(const Vec& x, const Vec& y) const {
    const double whole = std::max(partialLipschitzX(y), partialLipschitzY(x));
    return {static_cast<double>(componentCount()) * whole, whole};
  }
};

}  // namespace stibpalm
