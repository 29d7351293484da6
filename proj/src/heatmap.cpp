#include "laic/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <vector>

#include <png.h>

#include "laic/error.hpp"

namespace laic {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

void write_gray_png(const std::vector<unsigned char>& pixels, std::size_t width, std::size_t height,
                    const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorKind::IoFailure, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorKind::IoFailure, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::IoFailure, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < height; ++r)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + r * width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::size_t> class_order(const LabelVector& truth) {
  std::vector<std::size_t> order(truth.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return truth[a] < truth[b]; });
  return order;
}

}  // namespace

void export_heatmap(const Matrix& c, const LabelVector& truth, const std::filesystem::path& path) {
  if (static_cast<std::size_t>(c.rows()) != truth.size()) throw Error(ErrorKind::LengthMismatch, "C rows vs truth");
  if (c.size() == 0) throw Error(ErrorKind::DimensionZero, "empty C");
  const auto order = class_order(truth);
  const double lo = c.minCoeff();
  const double hi = c.maxCoeff();
  const auto width = static_cast<std::size_t>(c.cols());

  std::vector<unsigned char> pixels;
  std::size_t height = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (r > 0 && truth[order[r]] != truth[order[r - 1]]) {
      pixels.insert(pixels.end(), width, 0);
      ++height;
    }
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const double v = c(static_cast<Eigen::Index>(order[r]), j);
      const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      pixels.push_back(static_cast<unsigned char>(std::lround(16.0 + 239.0 * t)));
    }
    ++height;
  }
  write_gray_png(pixels, width, height, path);
}

CorrelationGap row_correlation_gap(const Matrix& c, const LabelVector& truth) {
  if (static_cast<std::size_t>(c.rows()) != truth.size()) throw Error(ErrorKind::LengthMismatch, "C rows vs truth");
  Matrix z = c;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    z.row(i).array() -= z.row(i).mean();
    const double n = z.row(i).norm();
    if (n > 0.0) z.row(i) /= n;
  }
  const Matrix corr = z * z.transpose();
  double within = 0.0, between = 0.0;
  std::size_t nw = 0, nb = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = i + 1; j < z.rows(); ++j) {
      if (truth[static_cast<std::size_t>(i)] == truth[static_cast<std::size_t>(j)]) {
        within += corr(i, j);
        ++nw;
      } else {
        between += corr(i, j);
        ++nb;
      }
    }
  return {nw ? within / static_cast<double>(nw) : 0.0, nb ? between / static_cast<double>(nb) : 0.0};
}

}  // namespace laic
