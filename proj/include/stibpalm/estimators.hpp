#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stibpalm/problem.hpp"
#include "stibpalm/rng.hpp"
#include "stibpalm/types.hpp"

namespace stibpalm {

enum class EstimatorKind { Full, Sgd, Saga, Sarah };

/// Literal keeps the stored anchor points and re-evaluates them against the
/// current opposite block every iteration (costs a full pass, exact for the
/// tracked MSE sequence). Table caches the gradients taken at anchor time,
/// which is the usual O(b) implementation.
enum class SagaMode { Literal, Table };

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::Full;
  int batch_size = 1;
  SagaMode saga_mode = SagaMode::Table;
  double sarah_refresh_prob = 0.05;  // probability of a full refresh, 1/p

  void validate(int n_components) const;
};

/// Constants of the variance-reduced estimator bound: squared-error factor V1,
/// norm factor V2, decay forcing V_upsilon and decay rate rho in (0,1].
struct VRConstants {
  double v1 = 0.0;
  double v2 = 0.0;
  double v_upsilon = 0.0;
  double rho = 1.0;
};

/// Bound constants for the supported estimators. `n_bound` is the dominant
/// Lipschitz level max(L, M), `p` the SARAH refresh period (> 1, refresh
/// probability 1/p). SGD is rejected: it does not satisfy the bound.
VRConstants vrConstants(EstimatorKind kind, double n_bound, double gamma1, double gamma2,
                        int batch, int n_components, double p);

/// Uniform without-replacement b-subsets of {0..n-1} by Floyd's algorithm.
/// Identical seeds give identical batch sequences.
class BatchSampler {
 public:
  BatchSampler(int n, int b, std::uint64_t seed);

  const std::vector<int>& sample();

  int n() const { return n_; }
  int batchSize() const { return b_; }

 private:
  int n_;
  int b_;
  Rng rng_;
  std::vector<int> batch_;
  std::vector<char> mark_;
};

enum class RefreshDecision { FullRefresh, Recursive };

struct RealizedError {
  double squared = 0.0;  // ||dx - grad_x H||^2 + ||dy - grad_y H||^2
  double norm = 0.0;     // ||dx - grad_x H||   + ||dy - grad_y H||
};

/// Stochastic gradient oracle for the smooth part. One instance per run, fed
/// with the evaluation points of the alternating iteration: the x-estimate at
/// (u_k, y_k) followed by the y-estimate at (x_{k+1}, v_k). Copyable so tests
/// can replay a state against many batches.
class GradientEstimator {
 public:
  GradientEstimator(EstimatorConfig cfg, const Problem& problem, const Vec& x0, const Vec& y0,
                    std::uint64_t seed);

  /// Estimate of grad_x H(u, y); updates SAGA anchors on the batch indices and
  /// the SARAH recursion state. SARAH flips the restart coin here (iteration 0
  /// always refreshes) and reuses the decision for the y-estimate.
  void estimateX(const Problem& problem, const Vec& u, const Vec& y, std::span<const int> batch,
                 Vec& out);
  void estimateY(const Problem& problem, const Vec& x_next, const Vec& v,
                 std::span<const int> batch, Vec& out);

  /// Restart coin: FullRefresh with the configured probability.
  RefreshDecision flipRestart();

  /// Decision the latest SARAH x-estimate took (iteration 0 is always a
  /// refresh).
  RefreshDecision lastRefresh() const { return refresh_; }

  /// Tracked MSE proxies. For SAGA call computeTrackers before the estimates
  /// of the iteration (anchor tables still at their pre-update state); for
  /// SARAH and SGD call recordRealizedError after them. Neither affects the
  /// estimates nor the evaluation accounting.
  void computeTrackers(const Problem& problem, const Vec& u, const Vec& y, const Vec& x,
                       const Vec& v);
  RealizedError recordRealizedError(const Problem& problem, const Vec& u, const Vec& y,
                                    const Vec& x_next, const Vec& v, const Vec& dx, const Vec& dy);

  double upsilon() const { return upsilon_; }
  double gammaTracker() const { return gamma_; }

  EstimatorKind kind() const { return cfg_.kind; }
  const EstimatorConfig& config() const { return cfg_; }
  /// Component-gradient evaluations spent by the algorithm so far (diagnostic
  /// passes excluded); one epoch is 2 n evaluations.
  long long componentEvals() const { return comp_evals_; }

 private:
  void checkFinite(const Problem& problem, const Vec& out, const Vec& point_x, const Vec& point_y,
                   std::span<const int> batch, bool x_block) const;

  EstimatorConfig cfg_;
  int n_ = 0;
  long long iter_ = 0;
  long long comp_evals_ = 0;
  bool expect_y_ = false;

  // SAGA anchors (Literal: points, Table: cached gradients plus running mean).
  std::vector<Vec> anchors_x_, anchors_y_;
  std::vector<Vec> table_x_, table_y_;
  Vec table_mean_x_, table_mean_y_;

  // SARAH recursion state.
  Vec prev_est_x_, prev_est_y_;
  Vec prev_ux_, prev_yx_, prev_xy_, prev_vy_;
  RefreshDecision refresh_ = RefreshDecision::FullRefresh;
  Rng coin_;

  double upsilon_ = 0.0;
  double gamma_ = 0.0;

  mutable std::vector<Vec> scratch_;
};

}  // namespace stibpalm
