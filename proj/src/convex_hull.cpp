#include <algorithm>
#include <cmath>

#include "foveate/gaze.hpp"

namespace foveate::gaze {
namespace {

double cross(PixelPoint o, PixelPoint a, PixelPoint b) {
  return (a.row - o.row) * (b.col - o.col) - (a.col - o.col) * (b.row - o.row);
}

}  // namespace

std::vector<PixelPoint> convex_hull(std::vector<PixelPoint> points) {
  std::sort(points.begin(), points.end(), [](const PixelPoint& a, const PixelPoint& b) {
    return a.row < b.row || (a.row == b.row && a.col < b.col);
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() <= 2) return points;

  std::vector<PixelPoint> hull(2 * points.size());
  std::size_t k = 0;
  for (const PixelPoint& p : points) {  // lower chain
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {  // upper chain
    while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0.0) --k;
    hull[k++] = points[i];
  }
  hull.resize(k - 1);
  return hull;
}

double edge_signed_distance(PixelPoint a, PixelPoint b, PixelPoint p) {
  const double len = std::hypot(b.row - a.row, b.col - a.col);
  if (len == 0.0) return -std::hypot(p.row - a.row, p.col - a.col);
  return cross(a, b, p) / len;
}

}  // namespace foveate::gaze
