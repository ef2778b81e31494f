#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "stibpalm/core.hpp"
#include "stibpalm/estimators.hpp"
#include "stibpalm/problem.hpp"

namespace stibpalm {

struct SolverConfig {
  // Gradient-point extrapolation coefficients (u_k and v_k).
  InertialSchedule gamma1{}, gamma2{}, mu1{}, mu2{};
  // Linear correction coefficients multiplying <x, x_{k-1} - x_k> etc.
  InertialSchedule alpha1{}, alpha2{}, beta1{}, beta2{};
  // Scale the linear coefficients by the kernel scale of the step. Together
  // with a matching gamma/mu schedule this reproduces the one-step inertial
  // prox-center shift ||x - (x_k + a (x_k - x_{k-1}))||^2.
  bool alpha_times_theta = false;

  BregmanKernel kernel_x{}, kernel_y{};
  // Recompute the kernel scales from the partial Lipschitz moduli at each
  // iteration, times theta_safety.
  bool adaptive_theta = false;
  double theta_safety = 1.0;

  EstimatorConfig estimator{};
  int max_epochs = 10;
  std::uint64_t seed = 0;
  double epsilon = 1e-3;
  // Track the estimator MSE proxies and realized errors (extra exact passes;
  // never changes the iterates).
  bool diagnostics = false;

  void validate() const;
};

enum class Preset { Palm, IPalm, TiPalm, BTiPalm, Spring, SiPalm, StibPalm, BStibPalm };

Preset presetFromName(const std::string& name);
std::string presetName(Preset preset);
bool presetIsStochastic(Preset preset);

/// Applies the flag pattern of the named algorithm onto `base`: which inertial
/// schedules are active, whether linear terms emulate a prox-center shift,
/// quadratic or quartic x-kernel, deterministic or stochastic gradients.
/// Stochastic presets keep the estimator kind of `base` unless it is Full, in
/// which case SAGA is selected.
SolverConfig makePreset(Preset preset, SolverConfig base);

struct StepsizeCheck {
  bool satisfied = false;
  double margin = 0.0;
  double rhs = 0.0;
};

/// Step-size condition
///   min(theta1, theta2) > L + 2 a1 + 2 a2
///     + 2 sqrt(10 (V1 + V_ups / rho) + 4 L^2 (g1^2 + g2^2)) + 6 eps
/// (strict inequality). The caps a_i, g_i bound the schedules over the run.
StepsizeCheck validateStepsize(double theta1, double theta2, double lipschitz, double alpha1,
                               double alpha2, double gamma1, double gamma2, const VRConstants& vr,
                               double epsilon);

/// Bregman subproblem for the x block:
///   argmin f(x) + <x, d> + D_{phi}(x, x_k) + a1 <x, x_{k-1} - x_k>
///                + a2 <x, x_{k-2} - x_{k-1}>.
/// Quadratic kernel: prox of f at x_k - (d + a1 (...) + a2 (...)) / theta.
/// Quartic kernel: radial solve of grad phi(x) = v followed by the projection
/// of f (inexact for the constrained subproblem; see README).
Vec solveXSubproblem(const Problem& problem, const Vec& d, const IterateWindow& window,
                     const BregmanKernel& kernel, double a1, double a2);
Vec solveYSubproblem(const Problem& problem, const Vec& d, const IterateWindow& window,
                     const BregmanKernel& kernel, double b1, double b2);

struct StationarityRecord {
  double ax_norm = 0.0;
  double ay_norm = 0.0;
  double combined = 0.0;
};

/// Per-step trace used by the diagnostics layer. `upsilon` is the tracked
/// value before the step's estimates, `realized_sq` the exact squared error of
/// the estimates (diagnostics runs only), disp[0..3] the squared consecutive
/// displacements ||z_{k+1}-z_k||^2 .. ||z_{k-2}-z_{k-3}||^2.
struct StepTrace {
  long iter = 0;
  double upsilon = 0.0;
  double gamma_tracker = 0.0;
  double realized_sq = 0.0;
  double realized_norm = 0.0;
  double disp[4] = {0.0, 0.0, 0.0, 0.0};
};

class Solver {
 public:
  Solver(const Problem& problem, SolverConfig config, BlockPoint z0);

  void step();

  long iteration() const { return iter_; }
  const IterateWindow& window() const { return window_; }
  const BlockPoint& current() const { return window_.at(0); }
  const SolverConfig& config() const { return config_; }
  const GradientEstimator& estimator() const { return estimator_; }

  double objective() const;
  bool feasible() const;
  /// Tracked upsilon of the upcoming iteration (Upsilon_k when k steps done).
  double upsilon() const { return estimator_.upsilon(); }
  double gammaTracker() const { return estimator_.gammaTracker(); }
  const StepTrace& lastTrace() const { return trace_; }
  long long componentEvals() const { return estimator_.componentEvals(); }

  /// Kernel scales used by the most recent step.
  double theta1() const { return theta1_; }
  double theta2() const { return theta2_; }

  /// Subgradient residual (A_x, A_y) at the current iterate, assembled from
  /// the previous step's retained estimates. Requires one completed step and
  /// an exact gradient pass.
  StationarityRecord stationarityResidual() const;

 private:
  void stepImpl();

  const Problem& problem_;
  SolverConfig config_;
  IterateWindow window_;
  GradientEstimator estimator_;
  BatchSampler sampler_x_, sampler_y_;
  long iter_ = 0;
  double theta1_, theta2_;
  double theta1_init_ = 0.0, theta2_init_ = 0.0;
  StepTrace trace_{};

  // Previous step's data for the stationarity residual.
  bool has_prev_ = false;
  Vec prev_dx_, prev_dy_;
  double prev_a1_ = 0.0, prev_a2_ = 0.0, prev_b1_ = 0.0, prev_b2_ = 0.0;
  BregmanKernel prev_kernel_x_{}, prev_kernel_y_{};
};

}  // namespace stibpalm
