#include <algorithm>
#include <cmath>

#include "foveate/error.hpp"
#include "foveate/gaze.hpp"

namespace foveate::gaze {
namespace {

int place_axis(double centre, int extent, int crop, bool allow_padding) {
  const int start = static_cast<int>(std::llround(centre)) - crop / 2;
  if (crop <= extent) return std::clamp(start, 0, extent - crop);
  if (!allow_padding) throw InvalidArgument("crop is larger than the image and padding is disabled");
  return start;
}

}  // namespace

Placement place_retina(const FixationCluster& cluster, ImageDims image_dims, int crop_size, bool allow_padding) {
  if (crop_size <= 0) throw InvalidArgument("crop_size must be positive");
  if (image_dims.rows <= 0 || image_dims.cols <= 0) throw InvalidArgument("empty image dimensions");

  Placement out;
  out.rect.rows = crop_size;
  out.rect.cols = crop_size;
  out.rect.row0 = place_axis(cluster.centroid_px.row, image_dims.rows, crop_size, allow_padding);
  out.rect.col0 = place_axis(cluster.centroid_px.col, image_dims.cols, crop_size, allow_padding);
  out.fixation_px = {static_cast<double>(out.rect.row0 + crop_size / 2),
                     static_cast<double>(out.rect.col0 + crop_size / 2)};

  const double radius = crop_size / 2.0;
  for (const PixelPoint& v : cluster.hull_px) {
    if (std::hypot(v.row - out.fixation_px.row, v.col - out.fixation_px.col) > radius) {
      out.hull_outside_retina = true;
      break;
    }
  }
  return out;
}

Image extract_crop(const Image& image, const CropRect& rect, bool allow_padding) {
  if (rect.rows <= 0 || rect.cols <= 0) throw InvalidArgument("empty crop rectangle");
  if (image.empty()) throw InvalidArgument("cannot crop an empty image");
  const bool inside = rect.row0 >= 0 && rect.col0 >= 0 && rect.row0 + rect.rows <= image.rows() &&
                      rect.col0 + rect.cols <= image.cols();
  if (!inside && !allow_padding) throw InvalidArgument("crop rectangle extends outside the image");

  Image out(rect.rows, rect.cols, image.channels());
  for (int r = 0; r < rect.rows; ++r) {
    const int sr = std::clamp(rect.row0 + r, 0, image.rows() - 1);
    for (int c = 0; c < rect.cols; ++c) {
      const int sc = std::clamp(rect.col0 + c, 0, image.cols() - 1);
      for (int ch = 0; ch < image.channels(); ++ch) out.at(r, c, ch) = image.at(sr, sc, ch);
    }
  }
  return out;
}

}  // namespace foveate::gaze
