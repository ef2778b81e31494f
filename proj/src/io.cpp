#include "stibpalm/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stibpalm {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

bool hasSuffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Mat loadMatrixCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string field = line.substr(start, comma - start);
      try {
        std::size_t used = 0;
        row.push_back(std::stod(field, &used));
        while (used < field.size() && std::isspace(static_cast<unsigned char>(field[used]))) ++used;
        if (used != field.size()) throw std::invalid_argument("trailing junk");
      } catch (const std::exception&) {
        fail(path, "bad numeric field '" + field + "' at line " + std::to_string(line_no));
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(path, "ragged row at line " + std::to_string(line_no) + " (" +
                     std::to_string(row.size()) + " fields, expected " +
                     std::to_string(rows.front().size()) + ")");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(path, "empty matrix");
  Mat m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

void saveMatrixCsv(const Mat& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(path, "cannot open for writing");
  char buf[64];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << buf;
      if (j + 1 < m.cols()) out << ',';
    }
    out << '\n';
  }
}

Mat loadMatrixBin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "MTXB", 4) != 0)
    fail(path, "bad magic, expected MTXB");
  std::uint32_t dims[2];
  if (!in.read(reinterpret_cast<char*>(dims), 8)) fail(path, "truncated header");
  const Index rows = static_cast<Index>(dims[0]);
  const Index cols = static_cast<Index>(dims[1]);
  const std::uintmax_t expected = 12 + 8ull * dims[0] * dims[1];
  std::error_code ec;
  const std::uintmax_t actual = std::filesystem::file_size(path, ec);
  if (!ec && actual < expected)
    fail(path, "truncated payload (" + std::to_string(actual) + " bytes, header needs " +
                   std::to_string(expected) + ")");
  Mat m(rows, cols);
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (Index i = 0; i < rows; ++i) {
    if (!in.read(reinterpret_cast<char*>(row.data()),
                 static_cast<std::streamsize>(sizeof(double) * row.size())))
      fail(path, "truncated payload at row " + std::to_string(i) + " (offset " +
                     std::to_string(12 + 8 * i * cols) + ")");
    for (Index j = 0; j < cols; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
  }
  return m;
}

void saveMatrixBin(const Mat& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out.write("MTXB", 4);
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(m.rows()),
                                 static_cast<std::uint32_t>(m.cols())};
  out.write(reinterpret_cast<const char*>(dims), 8);
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(sizeof(double) * row.size()));
  }
}

Mat loadMatrixAuto(const std::string& path) {
  if (hasSuffix(path, ".csv")) return loadMatrixCsv(path);
  if (hasSuffix(path, ".bin") || hasSuffix(path, ".mtxb")) return loadMatrixBin(path);
  if (hasSuffix(path, ".pgm")) return loadPgm(path);
  fail(path, "unknown matrix format (expected .csv, .bin, .mtxb or .pgm)");
}

namespace {

// Reads the next whitespace-delimited token, skipping '#' comments.
std::string nextPgmToken(std::istream& in, const std::string& path) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  if (token.empty()) fail(path, "truncated header");
  return token;
}

}  // namespace

Mat loadPgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const std::string magic = nextPgmToken(in, path);
  if (magic != "P2" && magic != "P5") fail(path, "unsupported magic '" + magic + "'");
  long width = 0, height = 0, maxval = 0;
  try {
    width = std::stol(nextPgmToken(in, path));
    height = std::stol(nextPgmToken(in, path));
    maxval = std::stol(nextPgmToken(in, path));
  } catch (const std::exception&) {
    fail(path, "bad header");
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
    fail(path, "bad dimensions or maxval");
  Mat img(height, width);
  if (magic == "P2") {
    for (long i = 0; i < height; ++i)
      for (long j = 0; j < width; ++j) {
        long v = 0;
        try {
          v = std::stol(nextPgmToken(in, path));
        } catch (const std::exception&) {
          fail(path, "truncated pixel data");
        }
        img(i, j) = static_cast<double>(v) / static_cast<double>(maxval);
      }
  } else {
    // One whitespace byte separates the header from the payload.
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(static_cast<std::size_t>(width) * bytes);
    for (long i = 0; i < height; ++i) {
      if (!in.read(reinterpret_cast<char*>(buf.data()),
                   static_cast<std::streamsize>(buf.size())))
        fail(path, "truncated payload at row " + std::to_string(i));
      for (long j = 0; j < width; ++j) {
        const std::size_t o = static_cast<std::size_t>(j) * bytes;
        const long v = bytes == 1 ? buf[o] : (static_cast<long>(buf[o]) << 8) + buf[o + 1];
        img(i, j) = static_cast<double>(v) / static_cast<double>(maxval);
      }
    }
  }
  return img;
}

void writeSvgPlot(const std::string& path, const std::string& title,
                  const std::string& x_label, const std::string& y_label,
                  const std::vector<SvgSeries>& series, bool log_y) {
  std::ofstream out(path);
  if (!out) fail(path, "cannot open for writing");

  const double width = 720, height = 480;
  const double left = 70, right = 20, top = 40, bottom = 50;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool have = false;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double y = s.y[i];
      if (log_y && !(y > 0.0)) continue;
      const double yy = log_y ? std::log10(y) : y;
      if (!have) {
        xmin = xmax = s.x[i];
        ymin = ymax = yy;
        have = true;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, yy);
        ymax = std::max(ymax, yy);
      }
    }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;

  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (width - left - right); };
  auto py = [&](double yy) {
    return height - bottom - (yy - ymin) / (ymax - ymin) * (height - top - bottom);
  };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << title << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right
      << "\" y2=\"" << height - bottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << height - bottom << "\" stroke=\"black\"/>\n";

  char buf[64];
  for (int t = 0; t <= 5; ++t) {
    const double fx = xmin + (xmax - xmin) * t / 5.0;
    std::snprintf(buf, sizeof(buf), "%.3g", fx);
    out << "<line x1=\"" << px(fx) << "\" y1=\"" << height - bottom << "\" x2=\"" << px(fx)
        << "\" y2=\"" << height - bottom + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << px(fx) << "\" y=\"" << height - bottom + 20
        << "\" text-anchor=\"middle\" font-size=\"11\">" << buf << "</text>\n";
    const double fy = ymin + (ymax - ymin) * t / 5.0;
    std::snprintf(buf, sizeof(buf), "%.3g", log_y ? std::pow(10.0, fy) : fy);
    out << "<line x1=\"" << left - 5 << "\" y1=\"" << py(fy) << "\" x2=\"" << left << "\" y2=\""
        << py(fy) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << left - 8 << "\" y=\"" << py(fy) + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << buf << "</text>\n";
  }
  out << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label << "</text>\n";
  out << "<text x=\"16\" y=\"" << (top + height - bottom) / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
      << (top + height - bottom) / 2 << ")\">" << y_label << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    out << "<polyline fill=\"none\" stroke=\"" << colors[si % 8]
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double y = s.y[i];
      if (log_y && !(y > 0.0)) continue;
      out << px(s.x[i]) << ',' << py(log_y ? std::log10(y) : y) << ' ';
    }
    out << "\"/>\n";
    const double ly = top + 16.0 * static_cast<double>(si);
    out << "<line x1=\"" << width - right - 150 << "\" y1=\"" << ly << "\" x2=\""
        << width - right - 130 << "\" y2=\"" << ly << "\" stroke=\"" << colors[si % 8]
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << width - right - 125 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">"
        << s.label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace stibpalm
