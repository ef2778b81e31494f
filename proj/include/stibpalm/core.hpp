#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <utility>

#include "stibpalm/types.hpp"

namespace stibpalm {

/// Paired iterate z = (x, y). Both blocks are flattened column vectors; the
/// problem defines how they map back to matrices or images.
struct BlockPoint {
  Vec x;
  Vec y;

  double squaredDistance(const BlockPoint& other) const {
    return (x - other.x).squaredNorm() + (y - other.y).squaredNorm();
  }
};

/// Sliding history z_k, z_{k-1}, z_{k-2}, z_{k-3}, newest first. All four
/// slots start equal to z_0 so the first steps see zero displacements.
class IterateWindow {
 public:
  explicit IterateWindow(BlockPoint z0) { slots_.fill(std::move(z0)); }

  /// lag 0 is the newest iterate.
  const BlockPoint& at(int lag) const { return slots_[static_cast<std::size_t>(lag)]; }

  void push(BlockPoint z) {
    slots_[3] = std::move(slots_[2]);
    slots_[2] = std::move(slots_[1]);
    slots_[1] = std::move(slots_[0]);
    slots_[0] = std::move(z);
  }

  /// ||z_{k-lag} - z_{k-lag-1}||^2 for lag in {0, 1, 2}.
  double squaredStep(int lag) const { return at(lag).squaredDistance(at(lag + 1)); }

 private:
  std::array<BlockPoint, 4> slots_;
};

enum class KernelKind { Quadratic, Quartic };

/// Bregman kernel phi. Quadratic: phi(x) = (scale/2)||x||^2. Quartic:
/// phi(x) = (scale^2/4)||x||^4. The quartic is convex but not strongly convex
/// at the origin; `regionStrongConvexity` reports the modulus on
/// {||x|| >= region_radius} for diagnostics only.
struct BregmanKernel {
  KernelKind kind = KernelKind::Quadratic;
  double scale = 1.0;
  double region_radius = 0.0;

  void validate() const {
    if (!(scale > 0.0)) throw std::invalid_argument("BregmanKernel: scale must be positive");
  }

  double value(const Vec& x) const {
    const double sq = x.squaredNorm();
    return kind == KernelKind::Quadratic ? 0.5 * scale * sq : 0.25 * scale * scale * sq * sq;
  }

  void gradient(const Vec& x, Vec& out) const {
    if (!x.allFinite()) throw std::invalid_argument("kernel gradient: non-finite input");
    if (kind == KernelKind::Quadratic) {
      out = scale * x;
    } else {
      out = (scale * scale * x.squaredNorm()) * x;
    }
  }

  double strongConvexity() const { return kind == KernelKind::Quadratic ? scale : 0.0; }

  double gradLipschitz() const {
    return kind == KernelKind::Quadratic ? scale
                                         : 3.0 * scale * scale * region_radius * region_radius;
  }

  /// Modulus on the annulus {||x|| >= region_radius}; zero for an empty region.
  double regionStrongConvexity() const {
    return kind == KernelKind::Quadratic ? scale : scale * scale * region_radius * region_radius;
  }

  BregmanKernel withScale(double s) const {
    BregmanKernel k = *this;
    k.scale = s;
    return k;
  }
};

/// D_phi(x, y) = phi(x) - phi(y) - <grad phi(y), x - y>. Nonnegative for the
/// convex kernels used here.
inline double bregmanDistance(const BregmanKernel& kernel, const Vec& x, const Vec& y) {
  kernel.validate();
  if (x.size() != y.size()) throw std::invalid_argument("bregmanDistance: dimension mismatch");
  if (!x.allFinite() || !y.allFinite())
    throw std::invalid_argument("bregmanDistance: non-finite input");
  Vec grad_y(y.size());
  kernel.gradient(y, grad_y);
  return kernel.value(x) - kernel.value(y) - grad_y.dot(x - y);
}

/// x_k + c1 (x_k - x_{k-1}) + c2 (x_{k-1} - x_{k-2}).
template <typename D0, typename D1, typename D2>
Vec extrapolate(const Eigen::MatrixBase<D0>& x_k, const Eigen::MatrixBase<D1>& x_km1,
                const Eigen::MatrixBase<D2>& x_km2, double c1, double c2) {
  if (x_k.size() != x_km1.size() || x_k.size() != x_km2.size())
    throw std::invalid_argument("extrapolate: dimension mismatch");
  return x_k + c1 * (x_k - x_km1) + c2 * (x_km1 - x_km2);
}

/// Per-iteration inertial coefficient. Ramp follows (k-1)/(k+2), clipped at
/// zero, which increases towards 1.
struct InertialSchedule {
  enum class Kind { Constant, Ramp };

  Kind kind = Kind::Constant;
  double value = 0.0;

  double operator()(long k) const {
    if (kind == Kind::Constant) return value;
    const double r = (static_cast<double>(k) - 1.0) / (static_cast<double>(k) + 2.0);
    return r > 0.0 ? r : 0.0;
  }

  /// Supremum over k >= 0, used by the step-size condition.
  double cap() const { return kind == Kind::Constant ? value : 1.0; }

  static InertialSchedule constant(double c) { return {Kind::Constant, c}; }
  static InertialSchedule ramp() { return {Kind::Ramp, 0.0}; }
};

}  // namespace stibpalm
