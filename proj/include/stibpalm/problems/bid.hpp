#pragma once

#include "stibpalm/problem.hpp"

namespace stibpalm {

/// Periodic-boundary 2-D convolution of an image with an odd-sized centered
/// kernel; output has the image size.
Mat conv2dCircular(const Mat& image, const Mat& kernel);

/// Adjoint of conv2dCircular in the image argument.
Mat correlate2dCircular(const Mat& image, const Mat& kernel);

/// Projection onto {0 <= v <= 1, sum(v) <= 1} (entries are nonnegative after
/// the box, so the l1 norm is the sum). Threshold found by bisection to 1e-12
/// on the sum when the budget is active.
void projectBoxSimplex(Vec& v);

/// Blind image deconvolution
///   min 1/2 ||A - X (*) Y||_F^2 + eta sum r([D X])   s.t. 0 <= X <= 1,
///   0 <= Y <= 1, ||Y||_1 <= 1,
/// with r(v) = log(1 + sigma v^2), D the periodic forward-difference operator
/// (horizontal and vertical), X the image block and Y the kernel block. The
/// finite sum splits the data-fit residual into contiguous row strips; every
/// component carries the full regularizer so the average reproduces H.
struct BidConfig {
  Mat A;
  int kernel_size = 9;
  double eta_reg = 5e-5;
  double sigma = 1e3;
  int n_strips = 64;

  void validate() const;
};

class BidProblem final : public Problem {
 public:
  explicit BidProblem(BidConfig cfg);

  Index xDim() const override { return d1_ * d2_; }
  Index yDim() const override {
    return static_cast<Index>(cfg_.kernel_size) * cfg_.kernel_size;
  }
  int componentCount() const override { return cfg_.n_strips; }

  double smoothValue(const Vec& x, const Vec& y) const override;
  bool feasibleX(const Vec& x) const override;
  bool feasibleY(const Vec& y) const override;

  void gradXComponent(int i, const Vec& x, const Vec& y, Vec& out) const override;
  void gradYComponent(int i, const Vec& x, const Vec& y, Vec& out) const override;
  void gradXComponents(std::span<const int> batch, const Vec& x, const Vec& y,
                       std::vector<Vec>& outs) const override;
  void gradYComponents(std::span<const int> batch, const Vec& x, const Vec& y,
                       std::vector<Vec>& outs) const override;
  void gradXBatchMean(std::span<const int> batch, const Vec& x, const Vec& y,
                      Vec& out) const override;
  void gradYBatchMean(std::span<const int> batch, const Vec& x, const Vec& y,
                      Vec& out) const override;
  void gradX(const Vec& x, const Vec& y, Vec& out) const override;
  void gradY(const Vec& x, const Vec& y, Vec& out) const override;

  void proxX(const Vec& v, double scale, Vec& out) const override;
  void proxY(const Vec& v, double scale, Vec& out) const override;

  /// Data-term modulus by the exact largest frequency response of the kernel
  /// (resp. the autocorrelation Gram of the image) plus the curvature bound of
  /// the regularizer on the x block.
  double partialLipschitzX(const Vec& y) const override;
  double partialLipschitzY(const Vec& x) const override;

  const BidConfig& config() const { return cfg_; }
  Index imageRows() const { return d1_; }
  Index imageCols() const { return d2_; }
  int stripBegin(int i) const { return strip_begin_[static_cast<std::size_t>(i)]; }
  int stripEnd(int i) const { return strip_begin_[static_cast<std::size_t>(i) + 1]; }

  Eigen::Map<const Mat> mapImage(const Vec& x) const {
    return Eigen::Map<const Mat>(x.data(), d1_, d2_);
  }
  Eigen::Map<const Mat> mapKernel(const Vec& y) const {
    return Eigen::Map<const Mat>(y.data(), cfg_.kernel_size, cfg_.kernel_size);
  }

  /// eta * sum of r over forward differences, and its gradient.
  double regularizerValue(const Eigen::Ref<const Mat>& image) const;
  void regularizerGradient(const Eigen::Ref<const Mat>& image, Mat& grad) const;

 private:
  Mat residual(const Vec& x, const Vec& y) const;
  // Adjoint contributions restricted to the rows [r0, r1) of the residual.
  void corrRows(const Mat& resid, const Eigen::Ref<const Mat>& kernel, int r0, int r1,
                double weight, Eigen::Ref<Mat> accum) const;
  void kernelAdjointRows(const Mat& resid, const Eigen::Ref<const Mat>& image, int r0, int r1,
                         double weight, Eigen::Ref<Mat> accum) const;

  BidConfig cfg_;
  Index d1_, d2_;
  std::vector<int> strip_begin_;
};

}  // namespace stibpalm
