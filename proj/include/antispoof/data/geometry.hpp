#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "antispoof/data/image.hpp"
#include "antispoof/error.hpp"

namespace antispoof::data {

inline constexpr std::size_t kCropSize = 128;

struct Point {
  double x = 0, y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct RegionBox {
  double x = 0, y = 0, w = 0, h = 0;
  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  friend bool operator==(const RegionBox&, const RegionBox&) = default;
};

// Tight axis-aligned box over the points. Collinear clouds on an axis have a
// zero extent and are rejected as well.
inline RegionBox landmarks_bbox(const std::vector<Point>& pts) {
  if (pts.size() < 2) throw DegenerateLandmarksError("landmarks: need at least 2 points");
  double x0 = pts[0].x, x1 = pts[0].x, y0 = pts[0].y, y1 = pts[0].y;
  for (const Point& p : pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw DegenerateLandmarksError("landmarks: non-finite coordinate");
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  if (x1 <= x0 || y1 <= y0) {
    throw DegenerateLandmarksError("landmarks: zero-extent box (" + std::to_string(x1 - x0) +
                                   " x " + std::to_string(y1 - y0) + ")");
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

namespace detail {

// Places an interval of length len centred at c inside [0, extent].
inline std::pair<double, double> fit_interval(double c, double len, double extent) {
  if (len >= extent) return {0.0, extent};
  double lo = c - len / 2;
  if (lo < 0) lo = 0;
  if (lo + len > extent) lo = extent - len;
  return {lo, len};
}

}  // namespace detail

// Box scaled about its centre, then shifted inside the image; a request larger
// than the image collapses to the full extent in that dimension.
inline RegionBox expand_region(const RegionBox& box, double ratio, double image_w,
                               double image_h) {
  if (!(ratio >= 1.0)) throw ConfigError("expand_region: ratio must be >= 1");
  auto [x, w] = detail::fit_interval(box.x + box.w / 2, box.w * ratio, image_w);
  auto [y, h] = detail::fit_interval(box.y + box.h / 2, box.h * ratio, image_h);
  return {x, y, w, h};
}

// Bilinear resample of the boxed region onto a size x size grid. Pixel centres
// are at half-integer coordinates; samples outside the image clamp to the edge.
inline Image crop_resize(const Image& im, const RegionBox& box, std::size_t size = kCropSize) {
  if (im.rank() != 3 || im.dim(0) != 3) throw ShapeError("crop_resize: expected [3,H,W] image");
  const double iw = double(image_width(im)), ih = double(image_height(im));
  if (!(box.w > 0) || !(box.h > 0) || box.x >= iw || box.y >= ih || box.right() <= 0 ||
      box.bottom() <= 0) {
    throw RegionError("crop_resize: box does not intersect the image");
  }
  const long wmax = long(image_width(im)) - 1, hmax = long(image_height(im)) - 1;
  std::vector<long> x0(size), x1(size);
  std::vector<float> fx(size);
  for (std::size_t j = 0; j < size; ++j) {
    const double sx = box.x + (double(j) + 0.5) * box.w / double(size) - 0.5;
    const double fl = std::floor(sx);
    fx[j] = float(sx - fl);
    x0[j] = std::clamp(long(fl), 0L, wmax);
    x1[j] = std::clamp(long(fl) + 1, 0L, wmax);
  }
  Image out({3, size, size});
  for (std::size_t i = 0; i < size; ++i) {
    const double sy = box.y + (double(i) + 0.5) * box.h / double(size) - 0.5;
    const double fl = std::floor(sy);
    const float fy = float(sy - fl);
    const long y0 = std::clamp(long(fl), 0L, hmax), y1 = std::clamp(long(fl) + 1, 0L, hmax);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t j = 0; j < size; ++j) {
        const float a = im.at(c, y0, x0[j]), b = im.at(c, y0, x1[j]);
        const float d = im.at(c, y1, x0[j]), e = im.at(c, y1, x1[j]);
        const float top = a + fx[j] * (b - a);
        const float bot = d + fx[j] * (e - d);
        out.at(c, i, j) = top + fy * (bot - top);
      }
    }
  }
  return out;
}

}  // namespace antispoof::data
