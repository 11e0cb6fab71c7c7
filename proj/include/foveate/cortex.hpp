#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "foveate/image.hpp"
#include "foveate/retina.hpp"

namespace foveate::cortex {

enum class Hemifield : std::uint8_t { left, right };

// Log-polar coordinates of one retinal position. u grows with eccentricity;
// v is the polar angle folded so that each hemifield spans (-pi/2, pi/2]
// with v increasing upward in the visual field.
struct CorticalCoord {
  double u = 0.0;
  double v = 0.0;
  Hemifield hemifield = Hemifield::right;
};

CorticalCoord complex_log(retina::Vec2 p, double alpha);

// Continuous grid position (row, col), cell centres at integers.
struct GridPoint {
  double row = 0.0;
  double col = 0.0;
};

// Affine fit of one hemifield's (u, v) box onto its half of the grid:
// row = v_offset + v_scale * v, col = u_offset + u_scale * u.
// v_scale is negative (v up, rows down); u_scale is negative on the left
// hemifield so that both foveae meet at the vertical midline.
struct HemifieldTransform {
  double u_scale = 0.0;
  double u_offset = 0.0;
  double v_scale = 0.0;
  double v_offset = 0.0;

  GridPoint apply(double u, double v) const { return {v_offset + v_scale * v, u_offset + u_scale * u}; }
};

struct CorticalMap {
  std::vector<CorticalCoord> node_cortical;
  std::vector<GridPoint> node_grid;
  double alpha = 0.05;
  HemifieldTransform left;
  HemifieldTransform right;
  ImageDims grid_dims{399, 752};

  std::size_t node_count() const { return node_cortical.size(); }
  const HemifieldTransform& transform(Hemifield h) const { return h == Hemifield::left ? left : right; }
  GridPoint to_grid(const CorticalCoord& c) const { return transform(c.hemifield).apply(c.u, c.v); }
};

CorticalMap cortical_coordinates(const retina::RetinaTessellation& tess, double alpha = 0.05,
                                 ImageDims grid_dims = {399, 752});

struct CorticalImage {
  ImageDims dims{399, 752};
  int channels = 3;
  std::vector<double> pixels;   // (row, col, channel)
  std::vector<double> weights;  // (row, col) accumulated kernel weight

  CorticalImage() = default;
  CorticalImage(ImageDims d, int ch);

  double& pixel(int row, int col, int ch) {
    return pixels[(static_cast<std::size_t>(row) * dims.cols + col) * channels + ch];
  }
  double pixel(int row, int col, int ch) const {
    return pixels[(static_cast<std::size_t>(row) * dims.cols + col) * channels + ch];
  }
  double weight(int row, int col) const { return weights[static_cast<std::size_t>(row) * dims.cols + col]; }
  std::size_t covered_count() const;
};

// Node-centric Gaussian splatting (truncated at 3 sigma) on the map's grid.
CorticalImage splat_cortical_image(const retina::ImageVector& iv, const CorticalMap& map,
                                   double sigma_grid = 1.0);

// Cell-centric convolutional gridding onto target_dims. Nodes are binned by
// cell so each output cell only visits nodes within its kernel reach.
CorticalImage grid_cortical_image(const retina::ImageVector& iv, const CorticalMap& map,
                                  double sigma_grid, ImageDims target_dims);

// factor x factor mean over covered cells; trailing partial windows dropped.
CorticalImage subsample_cortical(const CorticalImage& img, int factor);

Image to_image(const CorticalImage& img);

// 8-bit PNG of the cortical image plus optional "CWT1" coverage weights.
void write_cortical_png(const std::filesystem::path& path, const CorticalImage& img);
void write_weight_file(const std::filesystem::path& path, const CorticalImage& img);
std::vector<float> read_weight_file(const std::filesystem::path& path);

}  // namespace foveate::cortex
