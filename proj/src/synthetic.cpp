#include "stibpalm/synthetic.hpp"

#include <cmath>
#include <stdexcept>

#include "stibpalm/rng.hpp"

namespace stibpalm {

int sparsityCountFromFraction(Index rows, double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("sparsity fraction must lie in (0, 1]");
  const int s = static_cast<int>(std::llround(fraction * static_cast<double>(rows)));
  return std::max(1, std::min(static_cast<int>(rows), s));
}

Mat makeSnmfData(const SnmfSynthSpec& spec) {
  if (spec.rows < 1 || spec.cols < 1 || spec.rank < 1)
    throw std::invalid_argument("makeSnmfData: bad dimensions");
  Rng rng(deriveStream(spec.seed, 0x57a7aULL));
  const int s = sparsityCountFromFraction(spec.rows, spec.nonzero_fraction);

  Mat X = Mat::Zero(spec.rows, spec.rank);
  for (int c = 0; c < spec.rank; ++c) {
    // Uniform support of size s per column (partial Fisher-Yates).
    std::vector<int> idx(static_cast<std::size_t>(spec.rows));
    for (Index i = 0; i < spec.rows; ++i) idx[static_cast<std::size_t>(i)] = static_cast<int>(i);
    for (int j = 0; j < s; ++j) {
      const int pick = j + rng.uniformInt(static_cast<int>(spec.rows) - j);
      std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(pick)]);
      X(idx[static_cast<std::size_t>(j)], c) = std::abs(rng.gaussian());
    }
  }
  Mat Y(spec.rank, spec.cols);
  for (Index j = 0; j < spec.cols; ++j)
    for (int i = 0; i < spec.rank; ++i) Y(i, j) = std::abs(rng.gaussian());

  Mat A = X * Y;
  if (spec.noise > 0.0)
    for (Index j = 0; j < A.cols(); ++j)
      for (Index i = 0; i < A.rows(); ++i) A(i, j) += spec.noise * rng.gaussian();
  return A;
}

Mat makeTestImage(Index size) {
  Mat img(size, size);
  const double n = static_cast<double>(size);
  for (Index i = 0; i < size; ++i) {
    for (Index j = 0; j < size; ++j) {
      const double x = static_cast<double>(j) / n;
      const double y = static_cast<double>(i) / n;
      double v = 0.25 + 0.25 * x + 0.15 * std::sin(6.0 * y);
      if (x > 0.15 && x < 0.45 && y > 0.2 && y < 0.5) v = 0.9;  // bright block
      const double dx = x - 0.7, dy = y - 0.65;
      if (dx * dx + dy * dy < 0.03) v = 0.05;  // dark disk
      if (j % (size / 8 == 0 ? 1 : size / 8) == 0) v = std::min(1.0, v + 0.3);  // stripes
      img(i, j) = std::min(1.0, std::max(0.0, v));
    }
  }
  return img;
}

Mat motionBlurKernel(int size) {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("kernel size must be odd");
  Mat k = Mat::Zero(size, size);
  const int h = size / 2;
  for (int j = 0; j < size; ++j) {
    // Shallow diagonal line through the center.
    const int i = h + (j - h) / 3;
    k(i, j) = 1.0;
  }
  return k / k.sum();
}

Mat diskBlurKernel(int size) {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("kernel size must be odd");
  Mat k = Mat::Zero(size, size);
  const double h = size / 2;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      if ((i - h) * (i - h) + (j - h) * (j - h) <= h * h + 0.5) k(i, j) = 1.0;
  return k / k.sum();
}

Mat blurImage(const Mat& sharp, const Mat& kernel, double noise, std::uint64_t seed) {
  Mat blurred = conv2dCircular(sharp, kernel);
  if (noise > 0.0) {
    Rng rng(deriveStream(seed, 0xb1e5ULL));
    for (Index j = 0; j < blurred.cols(); ++j)
      for (Index i = 0; i < blurred.rows(); ++i) blurred(i, j) += noise * rng.gaussian();
  }
  return blurred.cwiseMax(0.0).cwiseMin(1.0);
}

BlockPoint snmfInitialPoint(const SnmfProblem& problem, std::uint64_t seed) {
  Rng rng(deriveStream(seed, 0x171aULL));
  const double mean = std::max(1e-12, problem.config().A.cwiseAbs().mean());
  const double scale = std::sqrt(mean / static_cast<double>(problem.rank()));
  Vec x(problem.xDim()), y(problem.yDim());
  for (Index i = 0; i < x.size(); ++i) x[i] = scale * rng.uniform01();
  for (Index i = 0; i < y.size(); ++i) y[i] = scale * rng.uniform01();
  Vec x_feas(problem.xDim());
  problem.proxX(x, 1.0, x_feas);
  // Match the product magnitude to the data: the best uniform rescaling of
  // X0 Y0 against A, split evenly across the two factors.
  const Mat product = problem.mapX(x_feas) * problem.mapY(y);
  const double denom = product.squaredNorm();
  if (denom > 0.0) {
    const double c = std::max(1e-6, (problem.config().A.array() * product.array()).sum() / denom);
    x_feas *= std::sqrt(c);
    y *= std::sqrt(c);
  }
  return {std::move(x_feas), std::move(y)};
}

BlockPoint bidInitialPoint(const BidProblem& problem) {
  Vec x(problem.xDim());
  Eigen::Map<Mat>(x.data(), problem.imageRows(), problem.imageCols()) = problem.config().A;
  const int k = problem.config().kernel_size;
  Vec y = Vec::Constant(static_cast<Index>(k) * k, 1.0 / static_cast<double>(k * k));
  return {std::move(x), std::move(y)};
}

}  // namespace stibpalm
