#include "stibpalm/problems/snmf.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "stibpalm/linalg.hpp"

namespace stibpalm {

void SnmfConfig::validate() const {
  if (!A.allFinite()) throw std::invalid_argument("SnmfConfig: data matrix has non-finite entries");
  if (rank < 1 || rank > std::min(A.rows(), A.cols()))
    throw std::invalid_argument("SnmfConfig: rank must satisfy 1 <= r <= min(l, m)");
  if (sparsity < 1 || sparsity > A.rows())
    throw std::invalid_argument("SnmfConfig: sparsity must satisfy 1 <= s <= l");
  if (!(eta_fit > 0.0)) throw std::invalid_argument("SnmfConfig: eta must be positive");
}

void hardThresholdColumn(Vec& column, int sparsity) {
  if (sparsity > column.size())
    throw std::invalid_argument("hardThresholdColumn: sparsity exceeds column length");
  for (Index i = 0; i < column.size(); ++i)
    if (column[i] < 0.0) column[i] = 0.0;
  if (sparsity >= column.size()) return;
  std::vector<Index> order(static_cast<std::size_t>(column.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::nth_element(order.begin(), order.begin() + sparsity, order.end(),
                   [&](Index a, Index b) {
                     if (column[a] != column[b]) return column[a] > column[b];
                     return a < b;
                   });
  Vec kept = Vec::Zero(column.size());
  for (int j = 0; j < sparsity; ++j) kept[order[static_cast<std::size_t>(j)]] =
      column[order[static_cast<std::size_t>(j)]];
  column = kept;
}

SnmfProblem::SnmfProblem(SnmfConfig cfg)
    : cfg_(std::move(cfg)), rows_(cfg_.A.rows()), cols_(cfg_.A.cols()), rank_(cfg_.rank) {
  cfg_.validate();
}

void SnmfProblem::checkDims(const Vec& x, const Vec& y) const {
  if (x.size() != xDim() || y.size() != yDim())
    throw std::invalid_argument("snmf: block dimension mismatch");
}

double SnmfProblem::smoothValue(const Vec& x, const Vec& y) const {
  checkDims(x, y);
  return 0.5 * cfg_.eta_fit * (cfg_.A - mapX(x) * mapY(y)).squaredNorm();
}

bool SnmfProblem::feasibleX(const Vec& x) const {
  const auto X = mapX(x);
  if ((X.array() < 0.0).any()) return false;
  for (Index c = 0; c < rank_; ++c) {
    Index nonzeros = 0;
    for (Index i = 0; i < rows_; ++i)
      if (X(i, c) != 0.0) ++nonzeros;
    if (nonzeros > cfg_.sparsity) return false;
  }
  return true;
}

bool SnmfProblem::feasibleY(const Vec& y) const { return (mapY(y).array() >= 0.0).all(); }

void SnmfProblem::gradXComponent(int i, const Vec& x, const Vec& y, Vec& out) const {
  const auto X = mapX(x);
  const auto Y = mapY(y);
  out.setZero(xDim());
  Eigen::Map<Mat> grad(out.data(), rows_, rank_);
  const Eigen::RowVectorXd resid = X.row(i) * Y - cfg_.A.row(i);
  grad.row(i) = static_cast<double>(rows_) * cfg_.eta_fit * resid * Y.transpose();
}

void SnmfProblem::gradYComponent(int i, const Vec& x, const Vec& y, Vec& out) const {
  const auto X = mapX(x);
  const auto Y = mapY(y);
  out.resize(yDim());
  Eigen::Map<Mat> grad(out.data(), rank_, cols_);
  const Eigen::RowVectorXd resid = X.row(i) * Y - cfg_.A.row(i);
  grad.noalias() = static_cast<double>(rows_) * cfg_.eta_fit * X.row(i).transpose() * resid;
}

void SnmfProblem::gradXBatchMean(std::span<const int> batch, const Vec& x, const Vec& y,
                                 Vec& out) const {
  if (batch.empty()) throw std::invalid_argument("gradXBatchMean: empty batch");
  const auto X = mapX(x);
  const auto Y = mapY(y);
  out.setZero(xDim());
  Eigen::Map<Mat> grad(out.data(), rows_, rank_);
  const double w = static_cast<double>(rows_) * cfg_.eta_fit / static_cast<double>(batch.size());
  for (int i : batch) {
    const Eigen::RowVectorXd resid = X.row(i) * Y - cfg_.A.row(i);
    grad.row(i) += w * resid * Y.transpose();
  }
}

void SnmfProblem::gradYBatchMean(std::span<const int> batch, const Vec& x, const Vec& y,
                                 Vec& out) const {
  if (batch.empty()) throw std::invalid_argument("gradYBatchMean: empty batch");
  const auto X = mapX(x);
  const auto Y = mapY(y);
  out.setZero(yDim());
  Eigen::Map<Mat> grad(out.data(), rank_, cols_);
  const double w = static_cast<double>(rows_) * cfg_.eta_fit / static_cast<double>(batch.size());
  for (int i : batch) {
    const Eigen::RowVectorXd resid = X.row(i) * Y - cfg_.A.row(i);
    grad.noalias() += w * X.row(i).transpose() * resid;
  }
}

void SnmfProblem::gradX(const Vec& x, const Vec& y, Vec& out) const {
  checkDims(x, y);
  const auto X = mapX(x);
  const auto Y = mapY(y);
  out.resize(xDim());
  Eigen::Map<Mat> grad(out.data(), rows_, rank_);
  grad.noalias() = cfg_.eta_fit * (X * Y - cfg_.A) * Y.transpose();
}

void SnmfProblem::gradY(const Vec& x, const Vec& y, Vec& out) const {
  checkDims(x, y);
  const auto X = mapX(x);
  const auto Y = mapY(y);
  out.resize(yDim());
  Eigen::Map<Mat> grad(out.data(), rank_, cols_);
  grad.noalias() = cfg_.eta_fit * X.transpose() * (X * Y - cfg_.A);
}

void SnmfProblem::proxX(const Vec& v, double /*scale*/, Vec& out) const {
  out = v;
  Eigen::Map<Mat> X(out.data(), rows_, rank_);
  Vec column(rows_);
  for (Index c = 0; c < rank_; ++c) {
    column = X.col(c);
    hardThresholdColumn(column, cfg_.sparsity);
    X.col(c) = column;
  }
}

void SnmfProblem::proxY(const Vec& v, double /*scale*/, Vec& out) const {
  out = v.cwiseMax(0.0);
}

double SnmfProblem::partialLipschitzX(const Vec& y) const {
  const auto Y = mapY(y);
  auto apply = [&](const Vec& w, Vec& result) { result.noalias() = Y * (Y.transpose() * w); };
  return cfg_.eta_fit * powerIterationLargestEigen(apply, rank_);
}

double SnmfProblem::partialLipschitzY(const Vec& x) const {
  const auto X = mapX(x);
  auto apply = [&](const Vec& w, Vec& result) { result.noalias() = X.transpose() * (X * w); };
  return cfg_.eta_fit * powerIterationLargestEigen(apply, rank_);
}

}  // namespace stibpalm
