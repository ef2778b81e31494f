#pragma once

#include <cstdint>

#include "stibpalm/core.hpp"
#include "stibpalm/problems/bid.hpp"
#include "stibpalm/problems/snmf.hpp"

namespace stibpalm {

/// Synthetic factorization target: plants nonnegative factors with the given
/// per-column nonzero fraction on the left factor, then adds Gaussian noise.
struct SnmfSynthSpec {
  Index rows = 100;
  Index cols = 80;
  int rank = 5;
  double nonzero_fraction = 0.25;
  double noise = 0.01;
  std::uint64_t seed = 7;
};

Mat makeSnmfData(const SnmfSynthSpec& spec);

/// Nonzero budget per column of X from a fraction of the column length.
int sparsityCountFromFraction(Index rows, double fraction);

/// Deterministic 8-bit-style test pattern in [0,1]: smooth ramps, blocks and
/// a disk, so both flat regions and edges are present.
Mat makeTestImage(Index size);

/// Normalized line kernel (sum 1) approximating linear motion blur.
Mat motionBlurKernel(int size);

/// Normalized disk kernel (out-of-focus blur).
Mat diskBlurKernel(int size);

/// Blur + clipped additive Gaussian noise, result stays in [0,1].
Mat blurImage(const Mat& sharp, const Mat& kernel, double noise, std::uint64_t seed);

/// Feasible starting points shared by every algorithm of a comparison.
BlockPoint snmfInitialPoint(const SnmfProblem& problem, std::uint64_t seed);
BlockPoint bidInitialPoint(const BidProblem& problem);

}  // namespace stibpalm
