#include "stibpalm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stibpalm/rng.hpp"

namespace stibpalm {

namespace {

double varianceRoot(const VRConstants& vr, double lipschitz, double gamma1, double gamma2) {
  const double variance = vr.v1 + vr.v_upsilon / vr.rho;
  return std::sqrt(10.0 * variance +
                   4.0 * lipschitz * lipschitz * (gamma1 * gamma1 + gamma2 * gamma2));
}

}  // namespace

PsiConstants PsiConstants::make(const VRConstants& vr, double lipschitz, double gamma1,
                                double gamma2, double alpha1, double alpha2, double theta_min,
                                double epsilon) {
  if (!(vr.rho > 0.0)) throw std::invalid_argument("PsiConstants: rho must be positive");
  if (epsilon < 0.0) throw std::invalid_argument("PsiConstants: negative epsilon");
  const double variance = vr.v1 + vr.v_upsilon / vr.rho;
  const double root = varianceRoot(vr, lipschitz, gamma1, gamma2);
  PsiConstants c;
  c.lambda = lipschitz > 0.0 ? root / lipschitz : 0.0;
  c.z = (root > 0.0 ? variance / root : 0.0) + epsilon;
  c.kappa = -(lipschitz - theta_min) / 2.0 - alpha1 - alpha2 - root - 3.0 * epsilon;
  c.epsilon = epsilon;
  return c;
}

double computePsi(double phi_value, double upsilon, const IterateWindow& window,
                  const PsiConstants& consts, const VRConstants& vr, double lipschitz,
                  double alpha1, double alpha2, double gamma1, double gamma2) {
  if (!(vr.rho > 0.0)) throw std::invalid_argument("computePsi: rho must be positive");
  const double variance = vr.v1 + vr.v_upsilon / vr.rho;
  const double root = varianceRoot(vr, lipschitz, gamma1, gamma2);
  // L * lambda equals the root, so every lambda-denominator coefficient is
  // expressed through it; zero numerators over a zero root take the limit 0.
  double common = 0.0, drag1 = 0.0, drag2 = 0.0, upsilon_coef = 0.0;
  if (root > 0.0) {
    common = variance / root;
    drag1 = 2.0 * lipschitz * lipschitz * (gamma1 * gamma1 + gamma2 * gamma2) / root;
    drag2 = 2.0 * lipschitz * lipschitz * gamma2 * gamma2 / root;
    upsilon_coef = 1.0 / (root * vr.rho);
  } else if (upsilon != 0.0) {
    throw std::invalid_argument("computePsi: lambda is zero but upsilon is not");
  }
  const double c1 = common + 0.5 * (alpha1 + alpha2) + drag1 + 3.0 * consts.z;
  const double c2 = common + 0.5 * alpha2 + drag2 + 2.0 * consts.z;
  const double c3 = common + consts.z;
  return phi_value + upsilon_coef * upsilon + c1 * window.squaredStep(0) +
         c2 * window.squaredStep(1) + c3 * window.squaredStep(2);
}

StationarityRecord stationarityResidual(const Problem& problem, const IterateWindow& window,
                                        const Vec& prev_dx, const Vec& prev_dy,
                                        const BregmanKernel& kernel_x,
                                        const BregmanKernel& kernel_y, double a1, double a2,
                                        double b1, double b2) {
  if (prev_dx.size() != problem.xDim() || prev_dy.size() != problem.yDim())
    throw std::invalid_argument("stationarityResidual: retained estimates missing or mis-sized");
  const BlockPoint& z0 = window.at(0);
  const BlockPoint& z1 = window.at(1);
  const BlockPoint& z2 = window.at(2);
  const BlockPoint& z3 = window.at(3);

  Vec grad(problem.xDim());
  problem.gradX(z0.x, z0.y, grad);
  Vec kernel_prev(problem.xDim()), kernel_cur(problem.xDim());
  kernel_x.gradient(z1.x, kernel_prev);
  kernel_x.gradient(z0.x, kernel_cur);
  const Vec ax =
      grad - prev_dx + kernel_prev - kernel_cur + a1 * (z1.x - z2.x) + a2 * (z2.x - z3.x);

  Vec grad_y(problem.yDim());
  problem.gradY(z0.x, z0.y, grad_y);
  Vec kernel_prev_y(problem.yDim()), kernel_cur_y(problem.yDim());
  kernel_y.gradient(z1.y, kernel_prev_y);
  kernel_y.gradient(z0.y, kernel_cur_y);
  const Vec ay =
      grad_y - prev_dy + kernel_prev_y - kernel_cur_y + b1 * (z1.y - z2.y) + b2 * (z2.y - z3.y);

  StationarityRecord rec;
  rec.ax_norm = ax.norm();
  rec.ay_norm = ay.norm();
  rec.combined = std::sqrt(rec.ax_norm * rec.ax_norm + rec.ay_norm * rec.ay_norm);
  return rec;
}

MseReport checkMseBound(const std::vector<std::vector<StepTrace>>& per_seed,
                        const VRConstants& vr) {
  if (per_seed.size() < 5)
    throw std::invalid_argument("checkMseBound: need at least 5 seeds for expectation claims");
  std::size_t steps = per_seed.front().size();
  for (const auto& s : per_seed) steps = std::min(steps, s.size());
  const std::size_t n_seeds = per_seed.size();

  MseReport report;
  report.steps = static_cast<int>(steps);
  Rng boot(0x6007u);
  std::vector<double> gap(n_seeds);  // realized error minus bound, per seed
  int violations = 0;
  for (std::size_t k = 0; k < steps; ++k) {
    double mean_gap = 0.0;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const StepTrace& t = per_seed[s][k];
      const double bound =
          t.upsilon + vr.v1 * (t.disp[0] + t.disp[1] + t.disp[2] + t.disp[3]);
      gap[s] = t.realized_sq - bound;
      mean_gap += gap[s];
    }
    mean_gap /= static_cast<double>(n_seeds);
    // Bootstrap standard error of the mean gap over seeds.
    double se = 0.0;
    {
      const int resamples = 200;
      double sum = 0.0, sum_sq = 0.0;
      for (int r = 0; r < resamples; ++r) {
        double m = 0.0;
        for (std::size_t s = 0; s < n_seeds; ++s)
          m += gap[static_cast<std::size_t>(boot.uniformInt(static_cast<int>(n_seeds)))];
        m /= static_cast<double>(n_seeds);
        sum += m;
        sum_sq += m * m;
      }
      const double mean_boot = sum / resamples;
      se = std::sqrt(std::max(0.0, sum_sq / resamples - mean_boot * mean_boot));
    }
    const double slack = 3.0 * se + 1e-12;
    if (mean_gap > slack) {
      ++violations;
      report.max_excess = std::max(report.max_excess, mean_gap - slack);
    }
  }
  report.violation_rate = steps == 0 ? 0.0 : static_cast<double>(violations) / steps;
  return report;
}

double fitDecayRate(const std::vector<std::vector<double>>& upsilon_per_seed) {
  if (upsilon_per_seed.empty()) throw std::invalid_argument("fitDecayRate: no series");
  std::size_t steps = upsilon_per_seed.front().size();
  for (const auto& s : upsilon_per_seed) steps = std::min(steps, s.size());
  if (steps < 20)
    throw std::invalid_argument("fitDecayRate: need at least 20 frozen-iterate steps");

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int points = 0;
  for (std::size_t k = 0; k < steps; ++k) {
    double mean = 0.0;
    for (const auto& s : upsilon_per_seed) mean += s[k];
    mean /= static_cast<double>(upsilon_per_seed.size());
    if (!(mean > 0.0)) continue;
    const double x = static_cast<double>(k);
    const double y = std::log(mean);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++points;
  }
  if (points < 2) return 1.0;
  const double denom = points * sxx - sx * sx;
  if (denom == 0.0) return 1.0;
  const double slope = (points * sxy - sx * sy) / denom;
  return 1.0 - std::exp(slope);
}

FrozenDecayResult runFrozenDecayBattery(const Problem& problem, const EstimatorConfig& estimator,
                                        const BlockPoint& z0, const BlockPoint& z1, int n_seeds,
                                        int n_steps, double zero_threshold,
                                        std::uint64_t seed_base) {
  FrozenDecayResult result;
  result.upsilon_per_seed.resize(static_cast<std::size_t>(n_seeds));
  result.gamma_per_seed.resize(static_cast<std::size_t>(n_seeds));

  for (int s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = seed_base + static_cast<std::uint64_t>(s);
    GradientEstimator est(estimator, problem, z0.x, z0.y, seed);
    BatchSampler sampler_x(problem.componentCount(), estimator.batch_size,
                           deriveStream(seed, 0xf0f1ULL));
    BatchSampler sampler_y(problem.componentCount(), estimator.batch_size,
                           deriveStream(seed, 0xf0f2ULL));
    Vec dx(problem.xDim()), dy(problem.yDim());

    // Priming step at z0: SARAH takes its mandatory full refresh here, SAGA
    // anchors are already at z0.
    est.estimateX(problem, z0.x, z0.y, sampler_x.sample(), dx);
    est.estimateY(problem, z0.x, z0.y, sampler_y.sample(), dy);
    est.recordRealizedError(problem, z0.x, z0.y, z0.x, z0.y, dx, dy);

    auto& ups = result.upsilon_per_seed[static_cast<std::size_t>(s)];
    auto& gam = result.gamma_per_seed[static_cast<std::size_t>(s)];
    bool seen_refresh = false;
    for (int k = 0; k < n_steps; ++k) {
      if (est.kind() == EstimatorKind::Saga)
        est.computeTrackers(problem, z1.x, z1.y, z1.x, z1.y);
      ups.push_back(est.upsilon());
      gam.push_back(est.gammaTracker());
      est.estimateX(problem, z1.x, z1.y, sampler_x.sample(), dx);
      est.estimateY(problem, z1.x, z1.y, sampler_y.sample(), dy);
      const RealizedError err =
          est.recordRealizedError(problem, z1.x, z1.y, z1.x, z1.y, dx, dy);
      if (est.kind() == EstimatorKind::Sarah && !seen_refresh &&
          est.lastRefresh() == RefreshDecision::FullRefresh) {
        seen_refresh = true;
        if (err.squared != 0.0) result.refresh_zeroes_upsilon = false;
      }
    }
  }

  result.fitted_rate = fitDecayRate(result.upsilon_per_seed);
  // First step after which the seed mean stays below the threshold.
  const std::size_t steps = result.upsilon_per_seed.front().size();
  int last_above = -1;
  bool ever_below = false;
  for (std::size_t k = 0; k < steps; ++k) {
    double mean = 0.0;
    for (const auto& s : result.upsilon_per_seed) mean += s[k];
    mean /= static_cast<double>(n_seeds);
    if (mean >= zero_threshold)
      last_above = static_cast<int>(k);
    else
      ever_below = true;
  }
  if (ever_below && last_above + 1 < static_cast<int>(steps))
    result.steps_to_zero = last_above + 1;
  return result;
}

}  // namespace stibpalm
