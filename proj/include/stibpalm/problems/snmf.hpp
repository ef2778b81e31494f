#pragma once

#include "stibpalm/problem.hpp"

namespace stibpalm {

/// Sparse nonnegative matrix factorization
///   min (eta/2) ||A - X Y||_F^2   s.t.  X, Y >= 0, every column of X has at
///   most `sparsity` nonzeros,
/// with X (l x rank) as the x block and Y (rank x m) as the y block. The
/// finite sum runs over the l rows of A, so H_i is the residual of row i
/// scaled by n = l.
struct SnmfConfig {
  Mat A;
  int rank = 1;
  int sparsity = 1;  // nonzeros kept per column of X
  double eta_fit = 3.0;

  void validate() const;
};

/// Projection onto {v >= 0, ||v||_0 <= s}: clip negatives, keep the s largest
/// entries (ties resolved toward the lowest index). Exact for the nonconvex
/// set.
void hardThresholdColumn(Vec& column, int sparsity);

class SnmfProblem final : public Problem {
 public:
  explicit SnmfProblem(SnmfConfig cfg);

  Index xDim() const override { return rows_ * rank_; }
  Index yDim() const override { return rank_ * cols_; }
  int componentCount() const override { return static_cast<int>(rows_); }

  double smoothValue(const Vec& x, const Vec& y) const override;
  bool feasibleX(const Vec& x) const override;
  bool feasibleY(const Vec& y) const override;

  void gradXComponent(int i, const Vec& x, const Vec& y, Vec& out) const override;
  void gradYComponent(int i, const Vec& x, const Vec& y, Vec& out) const override;
  void gradXBatchMean(std::span<const int> batch, const Vec& x, const Vec& y,
                      Vec& out) const override;
  void gradYBatchMean(std::span<const int> batch, const Vec& x, const Vec& y,
                      Vec& out) const override;
  void gradX(const Vec& x, const Vec& y, Vec& out) const override;
  void gradY(const Vec& x, const Vec& y, Vec& out) const override;

  void proxX(const Vec& v, double scale, Vec& out) const override;
  void proxY(const Vec& v, double scale, Vec& out) const override;

  /// eta * lambda_max(Y Y^T), resp. eta * lambda_max(X^T X), by power
  /// iteration (rel tol 1e-6, at most 500 iterations).
  double partialLipschitzX(const Vec& y) const override;
  double partialLipschitzY(const Vec& x) const override;

  const SnmfConfig& config() const { return cfg_; }
  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index rank() const { return rank_; }

  Eigen::Map<const Mat> mapX(const Vec& x) const {
    return Eigen::Map<const Mat>(x.data(), rows_, rank_);
  }
  Eigen::Map<const Mat> mapY(const Vec& y) const {
    return Eigen::Map<const Mat>(y.data(), rank_, cols_);
  }

 private:
  void checkDims(const Vec& x, const Vec& y) const;

  SnmfConfig cfg_;
  Index rows_, cols_, rank_;
};

}  // namespace stibpalm
