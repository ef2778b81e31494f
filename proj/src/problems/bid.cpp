#include "stibpalm/problems/bid.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace stibpalm {

namespace {

inline int wrap(int i, int d) {
  i %= d;
  return i < 0 ? i + d : i;
}

void checkKernel(const Mat& kernel) {
  if (kernel.rows() != kernel.cols() || kernel.rows() % 2 == 0)
    throw std::invalid_argument("convolution kernel must be square and odd-sized");
}

}  // namespace

Mat conv2dCircular(const Mat& image, const Mat& kernel) {
  checkKernel(kernel);
  const int d1 = static_cast<int>(image.rows());
  const int d2 = static_cast<int>(image.cols());
  const int h = static_cast<int>(kernel.rows()) / 2;
  if (kernel.rows() > image.rows() || kernel.cols() > image.cols())
    throw std::invalid_argument("convolution kernel larger than image");
  Mat out = Mat::Zero(d1, d2);
  for (int p = -h; p <= h; ++p) {
    for (int q = -h; q <= h; ++q) {
      const double k = kernel(p + h, q + h);
      if (k == 0.0) continue;
      for (int j = 0; j < d2; ++j) {
        const int js = wrap(j - q, d2);
        for (int i = 0; i < d1; ++i) out(i, j) += k * image(wrap(i - p, d1), js);
      }
    }
  }
  return out;
}

Mat correlate2dCircular(const Mat& image, const Mat& kernel) {
  checkKernel(kernel);
  const int d1 = static_cast<int>(image.rows());
  const int d2 = static_cast<int>(image.cols());
  const int h = static_cast<int>(kernel.rows()) / 2;
  Mat out = Mat::Zero(d1, d2);
  for (int p = -h; p <= h; ++p) {
    for (int q = -h; q <= h; ++q) {
      const double k = kernel(p + h, q + h);
      if (k == 0.0) continue;
      for (int j = 0; j < d2; ++j) {
        const int js = wrap(j + q, d2);
        for (int i = 0; i < d1; ++i) out(i, j) += k * image(wrap(i + p, d1), js);
      }
    }
  }
  return out;
}

void projectBoxSimplex(Vec& v) {
  if (!v.allFinite()) throw std::invalid_argument("projectBoxSimplex: non-finite input");
  Vec clipped = v.cwiseMax(0.0).cwiseMin(1.0);
  if (clipped.sum() <= 1.0) {
    v = clipped;
    return;
  }
  // sum(clamp(v - tau, 0, 1)) is continuous and nonincreasing in tau; the
  // budget is active, so a root exists in (0, max v].
  double lo = 0.0;
  double hi = v.maxCoeff();
  auto boxSum = [&](double tau) {
    double s = 0.0;
    for (Index i = 0; i < v.size(); ++i) s += std::min(1.0, std::max(0.0, v[i] - tau));
    return s;
  };
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (boxSum(mid) > 1.0)
      lo = mid;
    else
      hi = mid;
    if (std::abs(boxSum(hi) - 1.0) <= 1e-12) break;
  }
  const double tau = hi;
  if (std::abs(boxSum(tau) - 1.0) > 1e-9)
    throw std::runtime_error("projectBoxSimplex: bisection failed to meet the budget");
  for (Index i = 0; i < v.size(); ++i) v[i] = std::min(1.0, std::max(0.0, v[i] - tau));
}

void BidConfig::validate() const {
  if (!A.allFinite()) throw std::invalid_argument("BidConfig: image has non-finite entries");
  if (A.minCoeff() < 0.0 || A.maxCoeff() > 1.0)
    throw std::invalid_argument("BidConfig: image must lie in [0,1]");
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw std::invalid_argument("BidConfig: kernel size must be odd and positive");
  if (kernel_size > A.rows() || kernel_size > A.cols())
    throw std::invalid_argument("BidConfig: kernel larger than image");
  if (!(eta_reg > 0.0) || !(sigma > 0.0))
    throw std::invalid_argument("BidConfig: eta and sigma must be positive");
  if (n_strips < 1 || n_strips > A.rows())
    throw std::invalid_argument("BidConfig: strip count must satisfy 1 <= n <= image rows");
}

BidProblem::BidProblem(BidConfig cfg) : cfg_(std::move(cfg)), d1_(cfg_.A.rows()), d2_(cfg_.A.cols()) {
  cfg_.validate();
  const int n = cfg_.n_strips;
  strip_begin_.resize(static_cast<std::size_t>(n) + 1);
  for (int t = 0; t <= n; ++t)
    strip_begin_[static_cast<std::size_t>(t)] =
        static_cast<int>((static_cast<long>(t) * d1_) / n);
}

Mat BidProblem::residual(const Vec& x, const Vec& y) const {
  if (x.size() != xDim() || y.size() != yDim())
    throw std::invalid_argument("bid: block dimension mismatch");
  return conv2dCircular(mapImage(x), mapKernel(y)) - cfg_.A;
}

double BidProblem::regularizerValue(const Eigen::Ref<const Mat>& image) const {
  const int d1 = static_cast<int>(image.rows());
  const int d2 = static_cast<int>(image.cols());
  double sum = 0.0;
  for (int j = 0; j < d2; ++j) {
    const int jn = wrap(j + 1, d2);
    for (int i = 0; i < d1; ++i) {
      const int in = wrap(i + 1, d1);
      const double dh = image(i, jn) - image(i, j);
      const double dv = image(in, j) - image(i, j);
      sum += std::log1p(cfg_.sigma * dh * dh) + std::log1p(cfg_.sigma * dv * dv);
    }
  }
  return cfg_.eta_reg * sum;
}

void BidProblem::regularizerGradient(const Eigen::Ref<const Mat>& image, Mat& grad) const {
  const int d1 = static_cast<int>(image.rows());
  const int d2 = static_cast<int>(image.cols());
  grad.setZero(d1, d2);
  auto slope = [this](double v) { return 2.0 * cfg_.sigma * v / (1.0 + cfg_.sigma * v * v); };
  for (int j = 0; j < d2; ++j) {
    const int jn = wrap(j + 1, d2);
    for (int i = 0; i < d1; ++i) {
      const int in = wrap(i + 1, d1);
      const double gh = slope(image(i, jn) - image(i, j));
      const double gv = slope(image(in, j) - image(i, j));
      grad(i, jn) += cfg_.eta_reg * gh;
      grad(i, j) -= cfg_.eta_reg * gh;
      grad(in, j) += cfg_.eta_reg * gv;
      grad(i, j) -= cfg_.eta_reg * gv;
    }
  }
}

double BidProblem::smoothValue(const Vec& x, const Vec& y) const {
  return 0.5 * residual(x, y).squaredNorm() + regularizerValue(mapImage(x));
}

bool BidProblem::feasibleX(const Vec& x) const {
  return (x.array() >= 0.0).all() && (x.array() <= 1.0).all();
}

bool BidProblem::feasibleY(const Vec& y) const {
  return (y.array() >= 0.0).all() && (y.array() <= 1.0).all() && y.sum() <= 1.0 + 1e-9;
}

void BidProblem::corrRows(const Mat& resid, const Eigen::Ref<const Mat>& kernel, int r0, int r1,
                          double weight, Eigen::Ref<Mat> accum) const {
  // accum += weight * correlate(resid restricted to rows [r0, r1), kernel);
  // only output rows within the kernel reach of the strip are touched.
  const int d1 = static_cast<int>(d1_);
  const int d2 = static_cast<int>(d2_);
  const int h = cfg_.kernel_size / 2;
  const int band = std::min(d1, (r1 - r0) + 2 * h);
  for (int bi = 0; bi < band; ++bi) {
    const int i = wrap(r0 - h + bi, d1);
    for (int p = -h; p <= h; ++p) {
      const int src = i + p;
      const int srcw = wrap(src, d1);
      if (srcw < r0 || srcw >= r1) continue;
      for (int q = -h; q <= h; ++q) {
        const double k = kernel(p + h, q + h);
        if (k == 0.0) continue;
        for (int j = 0; j < d2; ++j) accum(i, j) += weight * k * resid(srcw, wrap(j + q, d2));
      }
    }
  }
}

void BidProblem::kernelAdjointRows(const Mat& resid, const Eigen::Ref<const Mat>& image, int r0,
                                   int r1, double weight, Eigen::Ref<Mat> accum) const {
  const int d1 = static_cast<int>(d1_);
  const int d2 = static_cast<int>(d2_);
  const int h = cfg_.kernel_size / 2;
  for (int p = -h; p <= h; ++p) {
    for (int q = -h; q <= h; ++q) {
      double sum = 0.0;
      for (int i = r0; i < r1; ++i) {
        const int is = wrap(i - p, d1);
        for (int j = 0; j < d2; ++j) sum += resid(i, j) * image(is, wrap(j - q, d2));
      }
      accum(p + h, q + h) += weight * sum;
    }
  }
}

void BidProblem::gradXComponent(int i, const Vec& x, const Vec& y, Vec& out) const {
  const Mat resid = residual(x, y);
  out.resize(xDim());
  Eigen::Map<Mat> grad(out.data(), d1_, d2_);
  Mat reg;
  regularizerGradient(mapImage(x), reg);
  grad = reg;
  corrRows(resid, mapKernel(y), stripBegin(i), stripEnd(i), static_cast<double>(cfg_.n_strips),
           grad);
}

void BidProblem::gradYComponent(int i, const Vec& x, const Vec& y, Vec& out) const {
  const Mat resid = residual(x, y);
  out.setZero(yDim());
  Eigen::Map<Mat> grad(out.data(), cfg_.kernel_size, cfg_.kernel_size);
  kernelAdjointRows(resid, mapImage(x), stripBegin(i), stripEnd(i),
                    static_cast<double>(cfg_.n_strips), grad);
}

void BidProblem::gradXComponents(std::span<const int> batch, const Vec& x, const Vec& y,
                                 std::vector<Vec>& outs) const {
  const Mat resid = residual(x, y);
  Mat reg;
  regularizerGradient(mapImage(x), reg);
  outs.resize(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    outs[j].resize(xDim());
    Eigen::Map<Mat> grad(outs[j].data(), d1_, d2_);
    grad = reg;
    corrRows(resid, mapKernel(y), stripBegin(batch[j]), stripEnd(batch[j]),
             static_cast<double>(cfg_.n_strips), grad);
  }
}

void BidProblem::gradYComponents(std::span<const int> batch, const Vec& x, const Vec& y,
                                 std::vector<Vec>& outs) const {
  const Mat resid = residual(x, y);
  outs.resize(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    outs[j].setZero(yDim());
    Eigen::Map<Mat> grad(outs[j].data(), cfg_.kernel_size, cfg_.kernel_size);
    kernelAdjointRows(resid, mapImage(x), stripBegin(batch[j]), stripEnd(batch[j]),
                      static_cast<double>(cfg_.n_strips), grad);
  }
}

void BidProblem::gradXBatchMean(std::span<const int> batch, const Vec& x, const Vec& y,
                                Vec& out) const {
  if (batch.empty()) throw std::invalid_argument("gradXBatchMean: empty batch");
  const Mat resid = residual(x, y);
  out.resize(xDim());
  Eigen::Map<Mat> grad(out.data(), d1_, d2_);
  Mat reg;
  regularizerGradient(mapImage(x), reg);
  grad = reg;
  const double w = static_cast<double>(cfg_.n_strips) / static_cast<double>(batch.size());
  for (int i : batch) corrRows(resid, mapKernel(y), stripBegin(i), stripEnd(i), w, grad);
}

void BidProblem::gradYBatchMean(std::span<const int> batch, const Vec& x, const Vec& y,
                                Vec& out) const {
  if (batch.empty()) throw std::invalid_argument("gradYBatchMean: empty batch");
  const Mat resid = residual(x, y);
  out.setZero(yDim());
  Eigen::Map<Mat> grad(out.data(), cfg_.kernel_size, cfg_.kernel_size);
  const double w = static_cast<double>(cfg_.n_strips) / static_cast<double>(batch.size());
  for (int i : batch) kernelAdjointRows(resid, mapImage(x), stripBegin(i), stripEnd(i), w, grad);
}

void BidProblem::gradX(const Vec& x, const Vec& y, Vec& out) const {
  const Mat resid = residual(x, y);
  out.resize(xDim());
  Eigen::Map<Mat> grad(out.data(), d1_, d2_);
  Mat reg;
  regularizerGradient(mapImage(x), reg);
  grad = correlate2dCircular(resid, mapKernel(y)) + reg;
}

void BidProblem::gradY(const Vec& x, const Vec& y, Vec& out) const {
  const Mat resid = residual(x, y);
  out.setZero(yDim());
  Eigen::Map<Mat> grad(out.data(), cfg_.kernel_size, cfg_.kernel_size);
  kernelAdjointRows(resid, mapImage(x), 0, static_cast<int>(d1_), 1.0, grad);
}

void BidProblem::proxX(const Vec& v, double /*scale*/, Vec& out) const {
  out = v.cwiseMax(0.0).cwiseMin(1.0);
}

void BidProblem::proxY(const Vec& v, double /*scale*/, Vec& out) const {
  out = v;
  projectBoxSimplex(out);
}

double BidProblem::partialLipschitzX(const Vec& y) const {
  // Largest squared magnitude of the kernel frequency response, exact for the
  // circular operator, plus the regularizer curvature eta * 2 sigma * ||D||^2
  // with ||D||^2 <= 8.
  const auto K = mapKernel(y);
  const int h = cfg_.kernel_size / 2;
  const double d1 = static_cast<double>(d1_);
  const double d2 = static_cast<double>(d2_);
  double max_sq = 0.0;
  for (Index a = 0; a < d1_; ++a) {
    for (Index b = 0; b < d2_; ++b) {
      double re = 0.0, im = 0.0;
      for (int p = -h; p <= h; ++p) {
        for (int q = -h; q <= h; ++q) {
          const double phase = -6.283185307179586476925286766559 *
                               (static_cast<double>(a) * p / d1 + static_cast<double>(b) * q / d2);
          re += K(p + h, q + h) * std::cos(phase);
          im += K(p + h, q + h) * std::sin(phase);
        }
      }
      max_sq = std::max(max_sq, re * re + im * im);
    }
  }
  return max_sq + 16.0 * cfg_.eta_reg * cfg_.sigma;
}

double BidProblem::partialLipschitzY(const Vec& x) const {
  // Gram matrix of the kernel-to-image operator: entries are circular
  // autocorrelations of the image at offset differences.
  const auto X = mapImage(x);
  const int d1 = static_cast<int>(d1_);
  const int d2 = static_cast<int>(d2_);
  const int k = cfg_.kernel_size;
  const int h = k / 2;
  Mat autocorr(2 * k - 1, 2 * k - 1);
  for (int dp = -(k - 1); dp <= k - 1; ++dp) {
    for (int dq = -(k - 1); dq <= k - 1; ++dq) {
      double sum = 0.0;
      for (int j = 0; j < d2; ++j) {
        const int js = wrap(j + dq, d2);
        for (int i = 0; i < d1; ++i) sum += X(i, j) * X(wrap(i + dp, d1), js);
      }
      autocorr(dp + k - 1, dq + k - 1) = sum;
    }
  }
  Mat gram(k * k, k * k);
  for (int p = -h; p <= h; ++p)
    for (int q = -h; q <= h; ++q)
      for (int pp = -h; pp <= h; ++pp)
        for (int qq = -h; qq <= h; ++qq)
          gram((q + h) * k + (p + h), (qq + h) * k + (pp + h)) =
              autocorr(p - pp + k - 1, q - qq + k - 1);
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
  return std::max(0.0, eig.eigenvalues().maxCoeff());
}

}  // namespace stibpalm
