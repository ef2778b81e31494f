#include "stibpalm/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace stibpalm {

void EstimatorConfig::validate(int n_components) const {
  if (kind == EstimatorKind::Full) return;
  if (batch_size <= 0 || batch_size > n_components)
    throw std::invalid_argument("EstimatorConfig: batch size must satisfy 1 <= b <= n, got b=" +
                                std::to_string(batch_size) + ", n=" +
                                std::to_string(n_components));
  if (kind == EstimatorKind::Sarah &&
      !(sarah_refresh_prob > 0.0 && sarah_refresh_prob < 1.0))
    throw std::invalid_argument(
        "EstimatorConfig: SARAH refresh probability must lie in (0,1), i.e. period p > 1");
}

VRConstants vrConstants(EstimatorKind kind, double n_bound, double gamma1, double gamma2,
                        int batch, int n_components, double p) {
  if (n_bound < 0.0 || gamma1 < 0.0 || gamma2 < 0.0)
    throw std::invalid_argument("vrConstants: negative input");
  switch (kind) {
    case EstimatorKind::Full:
      return {0.0, 0.0, 0.0, 1.0};
    case EstimatorKind::Sgd:
      throw std::invalid_argument("vrConstants: SGD is not variance-reduced");
    case EstimatorKind::Saga: {
      if (batch <= 0 || n_components <= 0)
        throw std::invalid_argument("vrConstants: SAGA needs b >= 1 and n >= 1");
      const double b = static_cast<double>(batch);
      const double n = static_cast<double>(n_components);
      const double gamma = std::max(gamma1, gamma2);
      VRConstants c;
      c.v1 = 16.0 * n_bound * n_bound * gamma * gamma / b;
      c.v2 = 4.0 * n_bound * gamma / std::sqrt(b);
      c.v_upsilon = 408.0 * n * n_bound * n_bound *
                    (1.0 + 2.0 * gamma1 * gamma1 + gamma2 * gamma2) / (b * b);
      c.rho = b / (2.0 * n);
      return c;
    }
    case EstimatorKind::Sarah: {
      if (!(p > 1.0)) throw std::invalid_argument("vrConstants: SARAH needs p > 1");
      const double factor = 1.0 + 2.0 * gamma1 * gamma1 + gamma2 * gamma2;
      const double drift = 1.0 - 1.0 / p;
      VRConstants c;
      c.v1 = 6.0 * drift * n_bound * n_bound * factor;
      c.v2 = n_bound * std::sqrt(6.0 * drift * factor);
      c.v_upsilon = c.v1;
      c.rho = 1.0 / p;
      return c;
    }
  }
  throw std::invalid_argument("vrConstants: unknown estimator kind");
}

BatchSampler::BatchSampler(int n, int b, std::uint64_t seed)
    : n_(n), b_(b), rng_(seed), mark_(static_cast<std::size_t>(n), 0) {
  if (b_ <= 0) throw std::invalid_argument("BatchSampler: batch size must be positive");
  if (b_ > n_) throw std::invalid_argument("BatchSampler: batch size exceeds component count");
  batch_.reserve(static_cast<std::size_t>(b_));
}

const std::vector<int>& BatchSampler::sample() {
  for (int i : batch_) mark_[static_cast<std::size_t>(i)] = 0;
  batch_.clear();
  // Floyd: exact uniform b-subset in b draws.
  for (int j = n_ - b_; j < n_; ++j) {
    const int t = rng_.uniformInt(j + 1);
    const int pick = mark_[static_cast<std::size_t>(t)] ? j : t;
    mark_[static_cast<std::size_t>(pick)] = 1;
    batch_.push_back(pick);
  }
  std::sort(batch_.begin(), batch_.end());
  return batch_;
}

GradientEstimator::GradientEstimator(EstimatorConfig cfg, const Problem& problem, const Vec& x0,
                                     const Vec& y0, std::uint64_t seed)
    : cfg_(cfg), n_(problem.componentCount()), coin_(deriveStream(seed, 0x5a5a1dULL)) {
  cfg_.validate(n_);
  const std::size_t n = static_cast<std::size_t>(n_);
  if (cfg_.kind == EstimatorKind::Saga) {
    if (cfg_.saga_mode == SagaMode::Literal) {
      anchors_x_.assign(n, x0);
      anchors_y_.assign(n, y0);
    } else {
      table_x_.resize(n);
      table_y_.resize(n);
      table_mean_x_.setZero(problem.xDim());
      table_mean_y_.setZero(problem.yDim());
      for (int i = 0; i < n_; ++i) {
        problem.gradXComponent(i, x0, y0, table_x_[static_cast<std::size_t>(i)]);
        problem.gradYComponent(i, x0, y0, table_y_[static_cast<std::size_t>(i)]);
        table_mean_x_ += table_x_[static_cast<std::size_t>(i)];
        table_mean_y_ += table_y_[static_cast<std::size_t>(i)];
      }
      table_mean_x_ /= static_cast<double>(n_);
      table_mean_y_ /= static_cast<double>(n_);
      comp_evals_ += 2 * n_;
    }
  }
}

RefreshDecision GradientEstimator::flipRestart() {
  return coin_.uniform01() < cfg_.sarah_refresh_prob ? RefreshDecision::FullRefresh
                                                     : RefreshDecision::Recursive;
}

void GradientEstimator::checkFinite(const Problem& problem, const Vec& out, const Vec& point_x,
                                    const Vec& point_y, std::span<const int> batch,
                                    bool x_block) const {
  if (out.allFinite()) return;
  Vec comp;
  for (int i : batch) {
    if (x_block)
      problem.gradXComponent(i, point_x, point_y, comp);
    else
      problem.gradYComponent(i, point_x, point_y, comp);
    if (!comp.allFinite())
      throw std::runtime_error("gradient estimate: non-finite value from component " +
                               std::to_string(i));
  }
  throw std::runtime_error("gradient estimate: non-finite value");
}

void GradientEstimator::estimateX(const Problem& problem, const Vec& u, const Vec& y,
                                  std::span<const int> batch, Vec& out) {
  if (expect_y_) throw std::logic_error("GradientEstimator: estimateY call missing");
  const double b = static_cast<double>(batch.size());
  switch (cfg_.kind) {
    case EstimatorKind::Full:
      problem.gradX(u, y, out);
      comp_evals_ += n_;
      break;
    case EstimatorKind::Sgd:
      problem.gradXBatchMean(batch, u, y, out);
      comp_evals_ += static_cast<long long>(batch.size());
      break;
    case EstimatorKind::Saga: {
      if (cfg_.saga_mode == SagaMode::Literal) {
        Vec comp(problem.xDim()), anchored(problem.xDim());
        out.setZero(problem.xDim());
        // Aggregate over all anchor points, re-evaluated at the current y.
        for (int j = 0; j < n_; ++j) {
          problem.gradXComponent(j, anchors_x_[static_cast<std::size_t>(j)], y, comp);
          out += comp;
        }
        out /= static_cast<double>(n_);
        // Correction accumulated as differences so synchronized anchors
        // cancel exactly.
        for (int i : batch) {
          problem.gradXComponent(i, u, y, comp);
          problem.gradXComponent(i, anchors_x_[static_cast<std::size_t>(i)], y, anchored);
          out += (comp - anchored) / b;
        }
        for (int i : batch) anchors_x_[static_cast<std::size_t>(i)] = u;
        comp_evals_ += n_ + static_cast<long long>(batch.size());
      } else {
        problem.gradXComponents(batch, u, y, scratch_);
        out = table_mean_x_;
        for (std::size_t j = 0; j < batch.size(); ++j)
          out += (scratch_[j] - table_x_[static_cast<std::size_t>(batch[j])]) / b;
        for (std::size_t j = 0; j < batch.size(); ++j) {
          Vec& slot = table_x_[static_cast<std::size_t>(batch[j])];
          table_mean_x_ += (scratch_[j] - slot) / static_cast<double>(n_);
          slot = scratch_[j];
        }
        comp_evals_ += static_cast<long long>(batch.size());
      }
      break;
    }
    case EstimatorKind::Sarah: {
      refresh_ = iter_ == 0 ? RefreshDecision::FullRefresh : flipRestart();
      if (refresh_ == RefreshDecision::FullRefresh) {
        problem.gradX(u, y, out);
        comp_evals_ += n_;
      } else {
        Vec comp(problem.xDim()), prev(problem.xDim());
        out = prev_est_x_;
        for (int i : batch) {
          problem.gradXComponent(i, u, y, comp);
          problem.gradXComponent(i, prev_ux_, prev_yx_, prev);
          out += (comp - prev) / b;
        }
        comp_evals_ += 2 * static_cast<long long>(batch.size());
      }
      prev_est_x_ = out;
      prev_ux_ = u;
      prev_yx_ = y;
      break;
    }
  }
  checkFinite(problem, out, u, y, batch, true);
  expect_y_ = true;
}

void GradientEstimator::estimateY(const Problem& problem, const Vec& x_next, const Vec& v,
                                  std::span<const int> batch, Vec& out) {
  if (!expect_y_) throw std::logic_error("GradientEstimator: estimateX call missing");
  const double b = static_cast<double>(batch.size());
  switch (cfg_.kind) {
    case EstimatorKind::Full:
      problem.gradY(x_next, v, out);
      comp_evals_ += n_;
      break;
    case EstimatorKind::Sgd:
      problem.gradYBatchMean(batch, x_next, v, out);
      comp_evals_ += static_cast<long long>(batch.size());
      break;
    case EstimatorKind::Saga: {
      if (cfg_.saga_mode == SagaMode::Literal) {
        Vec comp(problem.yDim()), anchored(problem.yDim());
        out.setZero(problem.yDim());
        for (int j = 0; j < n_; ++j) {
          problem.gradYComponent(j, x_next, anchors_y_[static_cast<std::size_t>(j)], comp);
          out += comp;
        }
        out /= static_cast<double>(n_);
        for (int i : batch) {
          problem.gradYComponent(i, x_next, v, comp);
          problem.gradYComponent(i, x_next, anchors_y_[static_cast<std::size_t>(i)], anchored);
          out += (comp - anchored) / b;
        }
        for (int i : batch) anchors_y_[static_cast<std::size_t>(i)] = v;
        comp_evals_ += n_ + static_cast<long long>(batch.size());
      } else {
        problem.gradYComponents(batch, x_next, v, scratch_);
        out = table_mean_y_;
        for (std::size_t j = 0; j < batch.size(); ++j)
          out += (scratch_[j] - table_y_[static_cast<std::size_t>(batch[j])]) / b;
        for (std::size_t j = 0; j < batch.size(); ++j) {
          Vec& slot = table_y_[static_cast<std::size_t>(batch[j])];
          table_mean_y_ += (scratch_[j] - slot) / static_cast<double>(n_);
          slot = scratch_[j];
        }
        comp_evals_ += static_cast<long long>(batch.size());
      }
      break;
    }
    case EstimatorKind::Sarah: {
      if (refresh_ == RefreshDecision::FullRefresh) {
        problem.gradY(x_next, v, out);
        comp_evals_ += n_;
      } else {
        Vec comp(problem.yDim()), prev(problem.yDim());
        out = prev_est_y_;
        for (int i : batch) {
          problem.gradYComponent(i, x_next, v, comp);
          problem.gradYComponent(i, prev_xy_, prev_vy_, prev);
          out += (comp - prev) / b;
        }
        comp_evals_ += 2 * static_cast<long long>(batch.size());
      }
      prev_est_y_ = out;
      prev_xy_ = x_next;
      prev_vy_ = v;
      break;
    }
  }
  checkFinite(problem, out, x_next, v, batch, false);
  expect_y_ = false;
  ++iter_;
}

void GradientEstimator::computeTrackers(const Problem& problem, const Vec& u, const Vec& y,
                                        const Vec& x, const Vec& v) {
  if (cfg_.kind != EstimatorKind::Saga) {
    if (cfg_.kind == EstimatorKind::Full) {
      upsilon_ = 0.0;
      gamma_ = 0.0;
    }
    return;
  }
  const double b = static_cast<double>(cfg_.batch_size);
  const double n = static_cast<double>(n_);
  double sum_sq = 0.0;
  double sum_norm = 0.0;
  Vec fresh, anchored;
  for (int j = 0; j < n_; ++j) {
    const std::size_t sj = static_cast<std::size_t>(j);
    problem.gradXComponent(j, u, y, fresh);
    if (cfg_.saga_mode == SagaMode::Literal)
      problem.gradXComponent(j, anchors_x_[sj], y, anchored);
    else
      anchored = table_x_[sj];
    const double dx = (fresh - anchored).norm();
    problem.gradYComponent(j, x, v, fresh);
    if (cfg_.saga_mode == SagaMode::Literal)
      problem.gradYComponent(j, x, anchors_y_[sj], anchored);
    else
      anchored = table_y_[sj];
    const double dy = (fresh - anchored).norm();
    sum_sq += dx * dx + 4.0 * dy * dy;
    sum_norm += dx + 2.0 * dy;
  }
  upsilon_ = sum_sq / (b * n);
  gamma_ = sum_norm / std::sqrt(b * n);
}

RealizedError GradientEstimator::recordRealizedError(const Problem& problem, const Vec& u,
                                                     const Vec& y, const Vec& x_next, const Vec& v,
                                                     const Vec& dx, const Vec& dy) {
  Vec exact(problem.xDim());
  problem.gradX(u, y, exact);
  const double ex = (dx - exact).norm();
  exact.resize(problem.yDim());
  problem.gradY(x_next, v, exact);
  const double ey = (dy - exact).norm();
  RealizedError err{ex * ex + ey * ey, ex + ey};
  if (cfg_.kind == EstimatorKind::Sarah || cfg_.kind == EstimatorKind::Sgd) {
    upsilon_ = err.squared;
    gamma_ = err.norm;
  }
  return err;
}

}  // namespace stibpalm
