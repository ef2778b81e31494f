#include "stibpalm/solver.hpp"

#include <cctype>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "stibpalm/diagnostics.hpp"

namespace stibpalm {

namespace {

void requireNonnegativeConstant(const InertialSchedule& s, const char* name) {
  if (s.kind == InertialSchedule::Kind::Constant && s.value < 0.0)
    throw std::invalid_argument(std::string("SolverConfig: schedule ") + name +
                                " must be nonnegative");
}

}  // namespace

void SolverConfig::validate() const {
  requireNonnegativeConstant(gamma1, "gamma1");
  requireNonnegativeConstant(gamma2, "gamma2");
  requireNonnegativeConstant(mu1, "mu1");
  requireNonnegativeConstant(mu2, "mu2");
  requireNonnegativeConstant(alpha1, "alpha1");
  requireNonnegativeConstant(alpha2, "alpha2");
  requireNonnegativeConstant(beta1, "beta1");
  requireNonnegativeConstant(beta2, "beta2");
  if (!adaptive_theta) {
    kernel_x.validate();
    kernel_y.validate();
  }
  if (!(theta_safety > 0.0)) throw std::invalid_argument("SolverConfig: theta_safety <= 0");
  if (max_epochs < 1) throw std::invalid_argument("SolverConfig: max_epochs < 1");
  if (!(epsilon > 0.0)) throw std::invalid_argument("SolverConfig: epsilon <= 0");
}

Preset presetFromName(const std::string& name) {
  std::string s;
  for (char c : name) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (s == "palm") return Preset::Palm;
  if (s == "ipalm") return Preset::IPalm;
  if (s == "tipalm") return Preset::TiPalm;
  if (s == "btipalm") return Preset::BTiPalm;
  if (s == "spring") return Preset::Spring;
  if (s == "sipalm") return Preset::SiPalm;
  if (s == "stibpalm") return Preset::StibPalm;
  if (s == "bstipalm" || s == "bstibpalm") return Preset::BStibPalm;
  throw std::invalid_argument("unknown algorithm preset: " + name);
}

std::string presetName(Preset preset) {
  switch (preset) {
    case Preset::Palm: return "palm";
    case Preset::IPalm: return "ipalm";
    case Preset::TiPalm: return "tipalm";
    case Preset::BTiPalm: return "btipalm";
    case Preset::Spring: return "spring";
    case Preset::SiPalm: return "sipalm";
    case Preset::StibPalm: return "stibpalm";
    case Preset::BStibPalm: return "bstipalm";
  }
  return "?";
}

bool presetIsStochastic(Preset preset) {
  return preset == Preset::Spring || preset == Preset::SiPalm || preset == Preset::StibPalm ||
         preset == Preset::BStibPalm;
}

SolverConfig makePreset(Preset preset, SolverConfig base) {
  SolverConfig cfg = base;
  const InertialSchedule off = InertialSchedule::constant(0.0);
  const InertialSchedule on = InertialSchedule::ramp();
  cfg.kernel_x.kind = KernelKind::Quadratic;
  cfg.kernel_y.kind = KernelKind::Quadratic;
  cfg.alpha_times_theta = false;

  if (presetIsStochastic(preset)) {
    if (cfg.estimator.kind == EstimatorKind::Full) cfg.estimator.kind = EstimatorKind::Saga;
  } else {
    cfg.estimator.kind = EstimatorKind::Full;
  }

  switch (preset) {
    case Preset::Palm:
    case Preset::Spring:
      cfg.gamma1 = cfg.gamma2 = cfg.mu1 = cfg.mu2 = off;
      cfg.alpha1 = cfg.alpha2 = cfg.beta1 = cfg.beta2 = off;
      break;
    case Preset::IPalm:
    case Preset::SiPalm:
      cfg.gamma1 = cfg.mu1 = on;
      cfg.gamma2 = cfg.mu2 = off;
      cfg.alpha1 = cfg.beta1 = on;
      cfg.alpha2 = cfg.beta2 = off;
      cfg.alpha_times_theta = true;
      break;
    case Preset::TiPalm:
    case Preset::StibPalm:
    case Preset::BTiPalm:
    case Preset::BStibPalm:
      cfg.gamma1 = cfg.gamma2 = cfg.mu1 = cfg.mu2 = on;
      cfg.alpha1 = cfg.alpha2 = cfg.beta1 = cfg.beta2 = on;
      break;
  }
  if (preset == Preset::BTiPalm || preset == Preset::BStibPalm)
    cfg.kernel_x.kind = KernelKind::Quartic;
  return cfg;
}

StepsizeCheck validateStepsize(double theta1, double theta2, double lipschitz, double alpha1,
                               double alpha2, double gamma1, double gamma2, const VRConstants& vr,
                               double epsilon) {
  if (theta1 < 0.0 || theta2 < 0.0 || lipschitz < 0.0 || alpha1 < 0.0 || alpha2 < 0.0 ||
      gamma1 < 0.0 || gamma2 < 0.0 || epsilon < 0.0)
    throw std::invalid_argument("validateStepsize: negative input");
  if (!(vr.rho > 0.0)) throw std::invalid_argument("validateStepsize: rho must be positive");
  const double variance = vr.v1 + vr.v_upsilon / vr.rho;
  const double root = std::sqrt(10.0 * variance +
                                4.0 * lipschitz * lipschitz * (gamma1 * gamma1 + gamma2 * gamma2));
  StepsizeCheck check;
  check.rhs = lipschitz + 2.0 * alpha1 + 2.0 * alpha2 + 2.0 * root + 6.0 * epsilon;
  check.margin = std::min(theta1, theta2) - check.rhs;
  check.satisfied = check.margin > 0.0;
  return check;
}

namespace {

Vec solveBlockSubproblem(const Vec& z_k, const Vec& z_km1, const Vec& z_km2, const Vec& d,
                         const BregmanKernel& kernel, double a1, double a2,
                         const std::function<void(const Vec&, double, Vec&)>& prox) {
  kernel.validate();
  if (d.size() != z_k.size()) throw std::invalid_argument("subproblem: dimension mismatch");
  Vec shift = d + a1 * (z_km1 - z_k) + a2 * (z_km2 - z_km1);
  Vec out(z_k.size());
  if (kernel.kind == KernelKind::Quadratic) {
    const Vec arg = z_k - shift / kernel.scale;
    prox(arg, kernel.scale, out);
  } else {
    // Stationarity of the unconstrained quartic model: grad phi(x) = v.
    Vec v(z_k.size());
    kernel.gradient(z_k, v);
    v -= shift;
    const double norm = v.norm();
    Vec unconstrained;
    if (norm == 0.0) {
      unconstrained = Vec::Zero(z_k.size());
    } else {
      const double radius = std::cbrt(norm / (kernel.scale * kernel.scale));
      unconstrained = (radius / norm) * v;
    }
    prox(unconstrained, kernel.scale, out);
  }
  if (!out.allFinite()) throw std::runtime_error("subproblem: projection returned non-finite");
  return out;
}

}  // namespace

Vec solveXSubproblem(const Problem& problem, const Vec& d, const IterateWindow& window,
                     const BregmanKernel& kernel, double a1, double a2) {
  return solveBlockSubproblem(
      window.at(0).x, window.at(1).x, window.at(2).x, d, kernel, a1, a2,
      [&](const Vec& v, double scale, Vec& out) { problem.proxX(v, scale, out); });
}

Vec solveYSubproblem(const Problem& problem, const Vec& d, const IterateWindow& window,
                     const BregmanKernel& kernel, double b1, double b2) {
  return solveBlockSubproblem(
      window.at(0).y, window.at(1).y, window.at(2).y, d, kernel, b1, b2,
      [&](const Vec& v, double scale, Vec& out) { problem.proxY(v, scale, out); });
}

Solver::Solver(const Problem& problem, SolverConfig config, BlockPoint z0)
    : problem_(problem),
      config_(std::move(config)),
      window_(std::move(z0)),
      estimator_(config_.estimator, problem, window_.at(0).x, window_.at(0).y, config_.seed),
      sampler_x_(problem.componentCount(),
                 config_.estimator.kind == EstimatorKind::Full
                     ? problem.componentCount()
                     : config_.estimator.batch_size,
                 deriveStream(config_.seed, 0xba7c41ULL)),
      sampler_y_(problem.componentCount(),
                 config_.estimator.kind == EstimatorKind::Full
                     ? problem.componentCount()
                     : config_.estimator.batch_size,
                 deriveStream(config_.seed, 0xba7c42ULL)),
      theta1_(config_.kernel_x.scale),
      theta2_(config_.kernel_y.scale) {
  config_.validate();
  if (!window_.at(0).x.allFinite() || !window_.at(0).y.allFinite())
    throw std::invalid_argument("Solver: non-finite initial point");
}

double Solver::objective() const {
  return problem_.smoothValue(window_.at(0).x, window_.at(0).y);
}

bool Solver::feasible() const {
  return problem_.feasibleX(window_.at(0).x) && problem_.feasibleY(window_.at(0).y);
}

void Solver::step() {
  try {
    stepImpl();
  } catch (const std::exception& e) {
    throw std::runtime_error("iteration " + std::to_string(iter_) + ": " + e.what());
  }
}

void Solver::stepImpl() {
  const long k = iter_;
  const BlockPoint& z0 = window_.at(0);
  const BlockPoint& z1 = window_.at(1);
  const BlockPoint& z2 = window_.at(2);

  trace_.iter = k;
  trace_.upsilon = estimator_.upsilon();
  trace_.gamma_tracker = estimator_.gammaTracker();
  // Squared displacements ||z_k - z_{k-1}||^2 .. ||z_{k-2} - z_{k-3}||^2; the
  // newest slot is filled after the update below.
  trace_.disp[1] = window_.squaredStep(0);
  trace_.disp[2] = window_.squaredStep(1);
  trace_.disp[3] = window_.squaredStep(2);

  const double g1 = config_.gamma1(k);
  const double g2 = config_.gamma2(k);
  const Vec u = extrapolate(z0.x, z1.x, z2.x, g1, g2);

  // The per-iteration curvature estimate can collapse when a block degenerates
  // (an all-zero factor gives zero curvature together with a zero partial
  // gradient). Flooring the scale by a fraction of its value at the start
  // keeps the subproblem well posed without damping the benign regime.
  constexpr double kThetaFloorFrac = 0.05;
  constexpr double kThetaFloorAbs = 1e-10;
  if (config_.adaptive_theta) {
    const double level = config_.theta_safety * problem_.partialLipschitzX(z0.y);
    if (theta1_init_ == 0.0) theta1_init_ = level;
    theta1_ = std::max({level, kThetaFloorFrac * theta1_init_, kThetaFloorAbs});
  }
  const BregmanKernel kernel_x = config_.kernel_x.withScale(theta1_);

  Vec dx(problem_.xDim());
  estimator_.estimateX(problem_, u, z0.y, sampler_x_.sample(), dx);

  const double a1 = config_.alpha1(k) * (config_.alpha_times_theta ? theta1_ : 1.0);
  const double a2 = config_.alpha2(k) * (config_.alpha_times_theta ? theta1_ : 1.0);
  Vec x_next = solveXSubproblem(problem_, dx, window_, kernel_x, a1, a2);

  const double m1 = config_.mu1(k);
  const double m2 = config_.mu2(k);
  const Vec v = extrapolate(z0.y, z1.y, z2.y, m1, m2);

  if (config_.adaptive_theta) {
    const double level = config_.theta_safety * problem_.partialLipschitzY(x_next);
    if (theta2_init_ == 0.0) theta2_init_ = level;
    theta2_ = std::max({level, kThetaFloorFrac * theta2_init_, kThetaFloorAbs});
  }
  const BregmanKernel kernel_y = config_.kernel_y.withScale(theta2_);

  Vec dy(problem_.yDim());
  estimator_.estimateY(problem_, x_next, v, sampler_y_.sample(), dy);

  const double b1 = config_.beta1(k) * (config_.alpha_times_theta ? theta2_ : 1.0);
  const double b2 = config_.beta2(k) * (config_.alpha_times_theta ? theta2_ : 1.0);
  Vec y_next = solveYSubproblem(problem_, dy, window_, kernel_y, b1, b2);

  if (config_.diagnostics) {
    const RealizedError err =
        estimator_.recordRealizedError(problem_, u, z0.y, x_next, v, dx, dy);
    trace_.realized_sq = err.squared;
    trace_.realized_norm = err.norm;
  }

  prev_dx_ = std::move(dx);
  prev_dy_ = std::move(dy);
  prev_a1_ = a1;
  prev_a2_ = a2;
  prev_b1_ = b1;
  prev_b2_ = b2;
  prev_kernel_x_ = kernel_x;
  prev_kernel_y_ = kernel_y;
  has_prev_ = true;

  window_.push({std::move(x_next), std::move(y_next)});
  ++iter_;
  trace_.disp[0] = window_.squaredStep(0);

  if (config_.diagnostics && estimator_.kind() == EstimatorKind::Saga) {
    // Upsilon_{k+1} evaluates the anchor tables against the next iteration's
    // extrapolated points, which are already determined.
    const BlockPoint& n0 = window_.at(0);
    const BlockPoint& n1 = window_.at(1);
    const BlockPoint& n2 = window_.at(2);
    const Vec u_next =
        extrapolate(n0.x, n1.x, n2.x, config_.gamma1(iter_), config_.gamma2(iter_));
    const Vec v_next = extrapolate(n0.y, n1.y, n2.y, config_.mu1(iter_), config_.mu2(iter_));
    estimator_.computeTrackers(problem_, u_next, n0.y, n0.x, v_next);
  }
}

StationarityRecord Solver::stationarityResidual() const {
  if (!has_prev_)
    throw std::logic_error("stationarityResidual: no completed step to assemble from");
  return stibpalm::stationarityResidual(problem_, window_, prev_dx_, prev_dy_, prev_kernel_x_,
                                        prev_kernel_y_, prev_a1_, prev_a2_, prev_b1_, prev_b2_);
}

}  // namespace stibpalm
