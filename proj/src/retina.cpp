#include "foveate/retina.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "foveate/error.hpp"
#include "foveate/parallel.hpp"

namespace foveate::retina {

RetinaTessellation generate_tessellation(std::size_t node_count, double fovea_radius) {
  if (node_count == 0) throw InvalidArgument("node_count must be positive");
  if (!(fovea_radius > 0.0 && fovea_radius < 1.0)) {
    throw InvalidArgument("fovea_radius must lie in (0, 1)");
  }

  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const auto foveal = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(static_cast<double>(node_count) * fovea_radius)), 1,
      node_count);
  const std::size_t peripheral = node_count - foveal;
  // Radius reaches exactly 1 one step past the last node.
  const double growth =
      peripheral > 0 ? std::log(1.0 / fovea_radius) / static_cast<double>(peripheral) : 0.0;

  RetinaTessellation tess;
  tess.fovea_radius = fovea_radius;
  tess.nodes.reserve(node_count);
  for (std::size_t i = 0; i < node_count; ++i) {
    double r;
    if (i < foveal) {
      r = fovea_radius * std::sqrt(static_cast<double>(i) / static_cast<double>(foveal));
    } else {
      r = fovea_radius * std::exp(growth * static_cast<double>(i - foveal));
    }
    const double theta = std::fmod(static_cast<double>(i) * golden_angle, 2.0 * std::numbers::pi);
    tess.nodes.push_back({r * std::cos(theta), r * std::sin(theta)});
  }
  tess.nearest_neighbor_dist = nearest_neighbor_distances(tess.nodes);
  return tess;
}

std::vector<double> nearest_neighbor_distances(const std::vector<Vec2>& nodes) {
  const std::size_t n = nodes.size();
  if (n == 0) return {};
  if (n == 1) return {1.0};

  // Bucket grid over [-1, 1]^2; search expands ring by ring until no
  // unvisited cell can hold a closer node.
  const int grid = std::clamp(static_cast<int>(std::sqrt(static_cast<double>(n)) / 2.0), 1, 2048);
  const double cell = 2.0 / grid;
  auto cell_of = [&](double v) {
    return std::clamp(static_cast<int>(std::floor((v + 1.0) / cell)), 0, grid - 1);
  };

  std::vector<std::size_t> start(static_cast<std::size_t>(grid) * grid + 1, 0);
  std::vector<std::size_t> cell_index(n);
  for (std::size_t i = 0; i < n; ++i) {
    cell_index[i] = static_cast<std::size_t>(cell_of(nodes[i].y)) * grid + cell_of(nodes[i].x);
    ++start[cell_index[i] + 1];
  }
  for (std::size_t c = 1; c < start.size(); ++c) start[c] += start[c - 1];
  std::vector<std::size_t> members(n);
  {
    std::vector<std::size_t> cursor(start.begin(), start.end() - 1);
    for (std::size_t i = 0; i < n; ++i) members[cursor[cell_index[i]]++] = i;
  }

  std::vector<double> result(n);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int cx = cell_of(nodes[i].x);
      const int cy = cell_of(nodes[i].y);
      double best_sq = std::numeric_limits<double>::infinity();
      for (int ring = 0; ring < grid; ++ring) {
        for (int gy = cy - ring; gy <= cy + ring; ++gy) {
          if (gy < 0 || gy >= grid) continue;
          const bool edge_row = gy == cy - ring || gy == cy + ring;
          for (int gx = cx - ring; gx <= cx + ring; gx += (edge_row || ring == 0) ? 1 : 2 * ring) {
            if (gx < 0 || gx >= grid) continue;
            const std::size_t c = static_cast<std::size_t>(gy) * grid + gx;
            for (std::size_t k = start[c]; k < start[c + 1]; ++k) {
              const std::size_t j = members[k];
              if (j == i) continue;
              const double dx = nodes[j].x - nodes[i].x;
              const double dy = nodes[j].y - nodes[i].y;
              best_sq = std::min(best_sq, dx * dx + dy * dy);
            }
          }
        }
        const double reach = ring * cell;
        if (best_sq <= reach * reach) break;
      }
      result[i] = std::sqrt(best_sq);
    }
  });
  return result;
}

std::size_t ReceptiveFieldSet::empty_count() const {
  return static_cast<std::size_t>(
      std::count_if(fields.begin(), fields.end(), [](const auto& f) { return f.empty(); }));
}

PixelPoint node_center_px(const Vec2& node, PixelPoint fixation_px, double retina_radius_px) {
  return {fixation_px.row - retina_radius_px * node.y, fixation_px.col + retina_radius_px * node.x};
}

ReceptiveFieldSet compute_receptive_fields(const RetinaTessellation& tess,
                                           double retina_radius_px, ImageDims image_dims,
                                           PixelPoint fixation_px, const FieldOptions& options) {
  if (!(retina_radius_px > 0.0)) throw InvalidArgument("retina_radius_px must be positive");
  if (image_dims.rows <= 0 || image_dims.cols <= 0) throw InvalidArgument("empty image dimensions");
  if (!(fixation_px.row >= 0.0 && fixation_px.row <= image_dims.rows - 1 &&
        fixation_px.col >= 0.0 && fixation_px.col <= image_dims.cols - 1)) {
    throw InvalidArgument("fixation lies outside the image");
  }
  if (tess.nearest_neighbor_dist.size() != tess.nodes.size()) {
    throw InvalidArgument("tessellation is missing nearest-neighbour distances");
  }

  ReceptiveFieldSet set;
  set.image_dims = image_dims;
  set.fixation_px = fixation_px;
  set.retina_radius_px = retina_radius_px;
  set.fields.resize(tess.node_count());

  parallel_for(tess.node_count(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      ReceptiveField& f = set.fields[i];
      f.node_index = i;
      f.center_px = node_center_px(tess.nodes[i], fixation_px, retina_radius_px);
      f.sigma_px = std::max(options.width_factor * tess.nearest_neighbor_dist[i] * retina_radius_px,
                            options.min_sigma_px);
      const double reach = options.truncation * f.sigma_px;
      const int r0 = std::max(0, static_cast<int>(std::ceil(f.center_px.row - reach)));
      const int r1 = std::min(image_dims.rows - 1, static_cast<int>(std::floor(f.center_px.row + reach)));
      const int c0 = std::max(0, static_cast<int>(std::ceil(f.center_px.col - reach)));
      const int c1 = std::min(image_dims.cols - 1, static_cast<int>(std::floor(f.center_px.col + reach)));
      if (r0 > r1 || c0 > c1) continue;

      std::vector<double> weights(static_cast<std::size_t>(r1 - r0 + 1) * (c1 - c0 + 1), 0.0);
      const double reach_sq = reach * reach;
      const double inv_two_var = 1.0 / (2.0 * f.sigma_px * f.sigma_px);
      double total = 0.0;
      std::size_t k = 0;
      for (int r = r0; r <= r1; ++r) {
        const double dr = r - f.center_px.row;
        for (int c = c0; c <= c1; ++c, ++k) {
          const double dc = c - f.center_px.col;
          const double d_sq = dr * dr + dc * dc;
          if (d_sq > reach_sq) continue;
          weights[k] = std::exp(-d_sq * inv_two_var);
          total += weights[k];
        }
      }
      if (!(total > 0.0)) continue;
      for (double& w : weights) w /= total;
      f.row0 = r0;
      f.col0 = c0;
      f.rows = r1 - r0 + 1;
      f.cols = c1 - c0 + 1;
      f.weights = std::move(weights);
    }
  });
  return set;
}

ImageVector sample(const Image& image, const ReceptiveFieldSet& fields) {
  if (image.dims() != fields.image_dims) {
    throw InvalidArgument("receptive fields were built for different image dimensions");
  }
  const std::size_t channels = static_cast<std::size_t>(image.channels());
  ImageVector iv;
  iv.node_count = fields.fields.size();
  iv.channels = channels;
  iv.values.assign(iv.node_count * channels, 0.0);
  iv.valid.assign(iv.node_count, 0);
  iv.fixation_px = fields.fixation_px;
  iv.retina_radius_px = fields.retina_radius_px;

  parallel_for(iv.node_count, [&](std::size_t begin, std::size_t end) {
    std::vector<double> acc(channels);
    for (std::size_t i = begin; i < end; ++i) {
      const ReceptiveField& f = fields.fields[i];
      if (f.empty()) continue;
      std::fill(acc.begin(), acc.end(), 0.0);
      std::size_t k = 0;
      for (int r = f.row0; r < f.row0 + f.rows; ++r) {
        for (int c = f.col0; c < f.col0 + f.cols; ++c, ++k) {
          const double w = f.weights[k];
          if (w == 0.0) continue;
          for (std::size_t ch = 0; ch < channels; ++ch) acc[ch] += w * image.at(r, c, static_cast<int>(ch));
        }
      }
      for (std::size_t ch = 0; ch < channels; ++ch) iv.at(i, ch) = acc[ch];
      iv.valid[i] = 1;
    }
  });
  return iv;
}

Backprojection backproject(const ImageVector& iv, const ReceptiveFieldSet& fields,
                           ImageDims canvas_dims) {
  if (iv.node_count != fields.fields.size()) {
    throw InvalidArgument("imagevector and receptive fields disagree on node count");
  }
  if (canvas_dims.rows <= 0 || canvas_dims.cols <= 0) throw InvalidArgument("empty canvas");
  const int channels = static_cast<int>(iv.channels);
  const std::size_t pixels = static_cast<std::size_t>(canvas_dims.rows) * canvas_dims.cols;
  std::vector<double> num(pixels * channels, 0.0);
  std::vector<double> den(pixels, 0.0);

  // Row bands own disjoint output rows; every band visits nodes in index
  // order, so per-pixel accumulation order is fixed.
  parallel_for(static_cast<std::size_t>(canvas_dims.rows), [&](std::size_t band_begin, std::size_t band_end) {
    const int lo = static_cast<int>(band_begin);
    const int hi = static_cast<int>(band_end);
    for (std::size_t i = 0; i < fields.fields.size(); ++i) {
      const ReceptiveField& f = fields.fields[i];
      if (f.empty() || !iv.valid[i]) continue;
      const int r_begin = std::max(lo, f.row0);
      const int r_end = std::min(hi, f.row0 + f.rows);
      for (int r = r_begin; r < r_end; ++r) {
        for (int c = std::max(0, f.col0); c < std::min(canvas_dims.cols, f.col0 + f.cols); ++c) {
          const double w = f.weight(r, c);
          if (w == 0.0) continue;
          const std::size_t p = static_cast<std::size_t>(r) * canvas_dims.cols + c;
          den[p] += w;
          for (int ch = 0; ch < channels; ++ch) num[p * channels + ch] += w * iv.at(i, ch);
        }
      }
    }
  });

  Backprojection out{Image(canvas_dims.rows, canvas_dims.cols, channels), std::vector<std::uint8_t>(pixels, 0)};
  auto& data = out.image.data();
  for (std::size_t p = 0; p < pixels; ++p) {
    if (!(den[p] > 0.0)) continue;
    out.covered[p] = 1;
    for (int ch = 0; ch < channels; ++ch) {
      data[p * channels + ch] = static_cast<float>(num[p * channels + ch] / den[p]);
    }
  }
  return out;
}

double reduction_ratio(CropShape crop, std::size_t node_count, std::size_t channels) {
  if (node_count == 0) throw InvalidArgument("node_count must be positive");
  if (crop.rows == 0 || crop.cols == 0 || crop.channels == 0 || channels == 0) {
    throw InvalidArgument("dimensions must be positive");
  }
  return static_cast<double>(crop.rows * crop.cols * crop.channels) /
         static_cast<double>(node_count * channels);
}

}  // namespace foveate::retina
