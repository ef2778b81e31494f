#pragma once

#include <string>
#include <vector>

#include "stibpalm/types.hpp"

namespace stibpalm {

/// Numeric CSV grid (RFC-4180 style, comma separated, one row per line).
Mat loadMatrixCsv(const std::string& path);
void saveMatrixCsv(const Mat& m, const std::string& path);

/// Binary matrix format: magic "MTXB", u32 rows, u32 cols (little-endian),
/// row-major f64 payload. Round-trips bit-exactly.
Mat loadMatrixBin(const std::string& path);
void saveMatrixBin(const Mat& m, const std::string& path);

/// Dispatch on the file extension (.csv vs .bin/.mtxb).
Mat loadMatrixAuto(const std::string& path);

/// PGM image, P2 (ASCII) or P5 (binary), maxval <= 65535; pixels scaled to
/// [0, 1].
Mat loadPgm(const std::string& path);

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal self-contained line plot: axes, ticks, one polyline per series and
/// a legend. With `log_y`, nonpositive values are dropped from the polylines.
void writeSvgPlot(const std::string& path, const std::string& title,
                  const std::string& x_label, const std::string& y_label,
                  const std::vector<SvgSeries>& series, bool log_y);

}  // namespace stibpalm
