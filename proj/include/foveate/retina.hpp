#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "foveate/image.hpp"

namespace foveate::retina {

// Position in normalised retina coordinates: unit-radius field of view,
// origin at the fixation, x to the right and y upward.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct RetinaTessellation {
  std::vector<Vec2> nodes;  // ordered by non-decreasing eccentricity
  double fovea_radius = 0.1;
  std::vector<double> nearest_neighbor_dist;

  std::size_t node_count() const { return nodes.size(); }
};

// Golden-angle spiral layout. The first round(node_count * fovea_radius)
// nodes (at least one) fill the foveal disc uniformly; the rest sit at
// radii growing geometrically out to the unit circle, so peripheral spacing
// is proportional to eccentricity.
RetinaTessellation generate_tessellation(std::size_t node_count, double fovea_radius = 0.1);

// Distance from each node to its nearest other node. Single-node layouts get
// the full field radius (1.0).
std::vector<double> nearest_neighbor_distances(const std::vector<Vec2>& nodes);

struct FieldOptions {
  double width_factor = 0.75;  // sigma = width_factor * nearest-neighbour distance
  double truncation = 3.0;     // support radius in sigmas
  double min_sigma_px = 0.25;  // keeps at least the nearest pixel inside 3 sigma
};

// Gaussian receptive field over the clipped bounding box of its support.
// Weights are stored densely over the box (zero outside the truncation disc)
// and sum to one. An empty field has no pixels of its support in the image.
struct ReceptiveField {
  std::size_t node_index = 0;
  PixelPoint center_px;
  double sigma_px = 0.0;
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> weights;

  bool empty() const { return weights.empty(); }
  double weight(int row, int col) const {
    return weights[static_cast<std::size_t>(row - row0) * cols + (col - col0)];
  }
};

struct ReceptiveFieldSet {
  ImageDims image_dims;
  PixelPoint fixation_px;
  double retina_radius_px = 463.0;
  std::vector<ReceptiveField> fields;

  std::size_t empty_count() const;
};

// Node centre = fixation + radius * (x, -y) in (col, row) terms.
PixelPoint node_center_px(const Vec2& node, PixelPoint fixation_px, double retina_radius_px);

ReceptiveFieldSet compute_receptive_fields(const RetinaTessellation& tess,
                                           double retina_radius_px, ImageDims image_dims,
                                           PixelPoint fixation_px,
                                           const FieldOptions& options = {});

struct ImageVector {
  std::size_t node_count = 0;
  std::size_t channels = 0;
  std::vector<double> values;       // node-major, channel-minor
  std::vector<std::uint8_t> valid;  // one flag per node; 0 for empty fields
  PixelPoint fixation_px;
  double retina_radius_px = 463.0;

  double at(std::size_t node, std::size_t ch) const { return values[node * channels + ch]; }
  double& at(std::size_t node, std::size_t ch) { return values[node * channels + ch]; }
};

ImageVector sample(const Image& image, const ReceptiveFieldSet& fields);

struct Backprojection {
  Image image;
  std::vector<std::uint8_t> covered;  // 0 where no kernel reaches the pixel
};

// Normalised splat of node values back into image space.
Backprojection backproject(const ImageVector& iv, const ReceptiveFieldSet& fields,
                           ImageDims canvas_dims);

struct CropShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t channels = 0;
};

// (rows * cols * channels) / (node_count * channels).
double reduction_ratio(CropShape crop, std::size_t node_count, std::size_t channels);

// Text format: header "RETINA v1 <node_count> <fovea_radius>", then "x y".
void write_tessellation(const std::filesystem::path& path, const RetinaTessellation& tess);
RetinaTessellation read_tessellation(const std::filesystem::path& path);

// Binary little-endian "RIV1" imagevector file.
void write_image_vector(const std::filesystem::path& path, const ImageVector& iv);
ImageVector read_image_vector(const std::filesystem::path& path);

}  // namespace foveate::retina
