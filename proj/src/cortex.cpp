#include "foveate/cortex.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "binary_io.hpp"
#include "foveate/error.hpp"
#include "foveate/parallel.hpp"

namespace foveate::cortex {

using retina::ImageVector;

CorticalCoord complex_log(retina::Vec2 p, double alpha) {
  constexpr double pi = std::numbers::pi;
  const double r = std::hypot(p.x, p.y);
  double theta = std::atan2(p.y, p.x);
  if (theta <= -pi) theta = pi;

  CorticalCoord c;
  c.u = std::log((r + alpha) / alpha);
  if (std::abs(theta) <= pi / 2) {
    c.hemifield = Hemifield::right;
    c.v = theta;
  } else {
    c.hemifield = Hemifield::left;
    c.v = pi - theta;
    if (c.v > pi) c.v -= 2 * pi;
  }
  return c;
}

namespace {

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double x) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  bool empty() const { return lo > hi; }
};

// Maps [range.lo, range.hi] onto [first, last]. A zero-width range lands on
// the midpoint.
void fit_axis(const Range& range, double first, double last, double& scale, double& offset) {
  if (range.empty()) {
    scale = 0.0;
    offset = 0.5 * (first + last);
    return;
  }
  const double width = range.hi - range.lo;
  if (width <= 0.0) {
    scale = 0.0;
    offset = 0.5 * (first + last);
    return;
  }
  scale = (last - first) / width;
  offset = first - range.lo * scale;
}

// Gaussian footprint of one node on rows [row_lo, row_hi) of a grid.
template <typename Fn>
void for_each_cell_in_reach(GridPoint pos, double reach, int row_lo, int row_hi, int cols, Fn&& fn) {
  const int r0 = std::max(row_lo, static_cast<int>(std::ceil(pos.row - reach)));
  const int r1 = std::min(row_hi - 1, static_cast<int>(std::floor(pos.row + reach)));
  const int c0 = std::max(0, static_cast<int>(std::ceil(pos.col - reach)));
  const int c1 = std::min(cols - 1, static_cast<int>(std::floor(pos.col + reach)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) fn(r, c);
  }
}

void finalize(CorticalImage& img) {
  const std::size_t cells = img.weights.size();
  for (std::size_t p = 0; p < cells; ++p) {
    for (int ch = 0; ch < img.channels; ++ch) {
      double& v = img.pixels[p * img.channels + ch];
      v = img.weights[p] > 0.0 ? v / img.weights[p] : 0.0;
    }
  }
}

void check_inputs(const ImageVector& iv, const CorticalMap& map, double sigma_grid) {
  if (iv.node_count != map.node_count()) {
    throw InvalidArgument("imagevector node count does not match the cortical map");
  }
  if (!(sigma_grid > 0.0)) throw InvalidArgument("sigma_grid must be positive");
}

bool node_valid(const ImageVector& iv, std::size_t i) { return iv.valid.empty() || iv.valid[i] != 0; }

}  // namespace

CorticalMap cortical_coordinates(const retina::RetinaTessellation& tess, double alpha,
                                 ImageDims grid_dims) {
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  if (grid_dims.rows < 3 || grid_dims.cols < 6) {
    throw InvalidArgument("cortical grid must be at least 3 x 6 cells");
  }

  CorticalMap map;
  map.alpha = alpha;
  map.grid_dims = grid_dims;
  map.node_cortical.reserve(tess.node_count());

  Range u_range[2], v_range[2];
  for (const retina::Vec2& node : tess.nodes) {
    const CorticalCoord c = complex_log(node, alpha);
    const int h = static_cast<int>(c.hemifield);
    u_range[h].add(c.u);
    v_range[h].add(c.v);
    map.node_cortical.push_back(c);
  }

  const int half = grid_dims.cols / 2;
  const double row_first = 1.0;
  const double row_last = grid_dims.rows - 2.0;
  for (Hemifield h : {Hemifield::left, Hemifield::right}) {
    const int idx = static_cast<int>(h);
    HemifieldTransform& t = h == Hemifield::left ? map.left : map.right;
    // Rows run top-down while v runs bottom-up, so fit v onto reversed rows.
    fit_axis(v_range[idx], row_last, row_first, t.v_scale, t.v_offset);
    if (h == Hemifield::right) {
      fit_axis(u_range[idx], half + 1.0, grid_dims.cols - 2.0, t.u_scale, t.u_offset);
    } else {
      fit_axis(u_range[idx], half - 2.0, 1.0, t.u_scale, t.u_offset);
    }
  }

  map.node_grid.reserve(tess.node_count());
  for (const CorticalCoord& c : map.node_cortical) map.node_grid.push_back(map.to_grid(c));
  return map;
}

CorticalImage::CorticalImage(ImageDims d, int ch) : dims(d), channels(ch) {
  if (d.rows <= 0 || d.cols <= 0 || ch <= 0) throw InvalidArgument("empty cortical image dimensions");
  const std::size_t cells = static_cast<std::size_t>(d.rows) * d.cols;
  pixels.assign(cells * ch, 0.0);
  weights.assign(cells, 0.0);
}

std::size_t CorticalImage::covered_count() const {
  return static_cast<std::size_t>(std::count_if(weights.begin(), weights.end(), [](double w) { return w > 0.0; }));
}

CorticalImage splat_cortical_image(const ImageVector& iv, const CorticalMap& map, double sigma_grid) {
  check_inputs(iv, map, sigma_grid);
  CorticalImage img(map.grid_dims, static_cast<int>(iv.channels));
  const double reach = 3.0 * sigma_grid;
  const double reach_sq = reach * reach;
  const double inv_two_var = 1.0 / (2.0 * sigma_grid * sigma_grid);
  const int channels = img.channels;
  const int cols = img.dims.cols;

  // Row bands own disjoint cells and visit nodes in index order.
  parallel_for(static_cast<std::size_t>(img.dims.rows), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = 0; i < iv.node_count; ++i) {
      if (!node_valid(iv, i)) continue;
      const GridPoint pos = map.node_grid[i];
      for_each_cell_in_reach(pos, reach, static_cast<int>(begin), static_cast<int>(end), cols, [&](int r, int c) {
        const double dr = r - pos.row;
        const double dc = c - pos.col;
        const double d_sq = dr * dr + dc * dc;
        if (d_sq > reach_sq) return;
        const double w = std::exp(-d_sq * inv_two_var);
        const std::size_t p = static_cast<std::size_t>(r) * cols + c;
        img.weights[p] += w;
        for (int ch = 0; ch < channels; ++ch) img.pixels[p * channels + ch] += w * iv.at(i, ch);
      });
    }
  });
  finalize(img);
  return img;
}

CorticalImage grid_cortical_image(const ImageVector& iv, const CorticalMap& map, double sigma_grid,
                                  ImageDims target_dims) {
  if (target_dims.rows <= 0 || target_dims.cols <= 0) throw InvalidArgument("empty target dimensions");
  check_inputs(iv, map, sigma_grid);

  const int rows = target_dims.rows;
  const int cols = target_dims.cols;
  const bool same_dims = target_dims == map.grid_dims;
  const double row_scale = static_cast<double>(rows) / map.grid_dims.rows;
  const double col_scale = static_cast<double>(cols) / map.grid_dims.cols;

  // Node positions on the target grid, preserving the pixel-extent mapping.
  std::vector<GridPoint> pos(iv.node_count);
  for (std::size_t i = 0; i < iv.node_count; ++i) {
    const GridPoint g = map.node_grid[i];
    pos[i] = same_dims ? g : GridPoint{(g.row + 0.5) * row_scale - 0.5, (g.col + 0.5) * col_scale - 0.5};
  }

  // CSR bins: nodes grouped by nearest cell (clamped), in node order.
  const std::size_t cells = static_cast<std::size_t>(rows) * cols;
  std::vector<std::size_t> bin_start(cells + 1, 0);
  std::vector<std::size_t> bin_of(iv.node_count, cells);
  for (std::size_t i = 0; i < iv.node_count; ++i) {
    if (!node_valid(iv, i)) continue;
    const int br = std::clamp(static_cast<int>(std::lround(pos[i].row)), 0, rows - 1);
    const int bc = std::clamp(static_cast<int>(std::lround(pos[i].col)), 0, cols - 1);
    bin_of[i] = static_cast<std::size_t>(br) * cols + bc;
    ++bin_start[bin_of[i] + 1];
  }
  for (std::size_t c = 1; c <= cells; ++c) bin_start[c] += bin_start[c - 1];
  std::vector<std::size_t> bin_nodes(bin_start.back());
  {
    std::vector<std::size_t> cursor(bin_start.begin(), bin_start.end() - 1);
    for (std::size_t i = 0; i < iv.node_count; ++i) {
      if (bin_of[i] < cells) bin_nodes[cursor[bin_of[i]]++] = i;
    }
  }

  CorticalImage img(target_dims, static_cast<int>(iv.channels));
  const double reach = 3.0 * sigma_grid;
  const double reach_sq = reach * reach;
  const double inv_two_var = 1.0 / (2.0 * sigma_grid * sigma_grid);
  // A binned node is within half a cell of its bin centre (or further out if
  // clamped), so bins beyond reach + 0.5 cannot contribute.
  const int window = static_cast<int>(std::ceil(reach + 0.5));
  const int channels = img.channels;

  parallel_for(cells, [&](std::size_t begin, std::size_t end) {
    std::vector<double> acc(channels);
    for (std::size_t cell = begin; cell < end; ++cell) {
      const int r = static_cast<int>(cell / cols);
      const int c = static_cast<int>(cell % cols);
      double weight = 0.0;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int br = std::max(0, r - window); br <= std::min(rows - 1, r + window); ++br) {
        for (int bc = std::max(0, c - window); bc <= std::min(cols - 1, c + window); ++bc) {
          const std::size_t b = static_cast<std::size_t>(br) * cols + bc;
          for (std::size_t k = bin_start[b]; k < bin_start[b + 1]; ++k) {
            const std::size_t i = bin_nodes[k];
            const double dr = r - pos[i].row;
            const double dc = c - pos[i].col;
            const double d_sq = dr * dr + dc * dc;
            if (d_sq > reach_sq) continue;
            const double w = std::exp(-d_sq * inv_two_var);
            weight += w;
            for (int ch = 0; ch < channels; ++ch) acc[ch] += w * iv.at(i, ch);
          }
        }
      }
      img.weights[cell] = weight;
      for (int ch = 0; ch < channels; ++ch) img.pixels[cell * channels + ch] = acc[ch];
    }
  });
  finalize(img);
  return img;
}

CorticalImage subsample_cortical(const CorticalImage& img, int factor) {
  if (factor <= 0) throw InvalidArgument("subsample factor must be at least 1");
  const ImageDims out_dims{img.dims.rows / factor, img.dims.cols / factor};
  if (out_dims.rows == 0 || out_dims.cols == 0) throw InvalidArgument("subsample factor exceeds image size");

  CorticalImage out(out_dims, img.channels);
  for (int r = 0; r < out_dims.rows; ++r) {
    for (int c = 0; c < out_dims.cols; ++c) {
      std::size_t covered = 0;
      double weight = 0.0;
      std::vector<double> sum(img.channels, 0.0);
      for (int dr = 0; dr < factor; ++dr) {
        for (int dc = 0; dc < factor; ++dc) {
          const int sr = r * factor + dr;
          const int sc = c * factor + dc;
          const double w = img.weight(sr, sc);
          if (!(w > 0.0)) continue;
          ++covered;
          weight += w;
          for (int ch = 0; ch < img.channels; ++ch) sum[ch] += img.pixel(sr, sc, ch);
        }
      }
      if (covered == 0) continue;
      out.weights[static_cast<std::size_t>(r) * out_dims.cols + c] = weight;
      for (int ch = 0; ch < img.channels; ++ch) out.pixel(r, c, ch) = sum[ch] / static_cast<double>(covered);
    }
  }
  return out;
}

Image to_image(const CorticalImage& img) {
  Image out(img.dims.rows, img.dims.cols, img.channels);
  auto& data = out.data();
  for (std::size_t k = 0; k < img.pixels.size(); ++k) data[k] = static_cast<float>(img.pixels[k]);
  return out;
}

void write_cortical_png(const std::filesystem::path& path, const CorticalImage& img) {
  write_png(path, to_image(img));
}

void write_weight_file(const std::filesystem::path& path, const CorticalImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const auto cells = static_cast<std::uint32_t>(img.weights.size());
  detail::write_magic(out, "CWT1");
  detail::write_u32(out, cells);
  detail::write_u32(out, 1);
  detail::write_u32(out, cells);
  for (double w : img.weights) out.put(w > 0.0 ? 1 : 0);
  for (double w : img.weights) detail::write_f32(out, static_cast<float>(w));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<float> read_weight_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  detail::expect_magic(in, "CWT1");
  const std::uint32_t cells = detail::read_u32(in);
  if (detail::read_u32(in) != 1) throw IoError("weight file must have one channel");
  const std::uint32_t mask_len = detail::read_u32(in);
  std::vector<char> mask(mask_len);
  detail::read_exact(in, mask.data(), mask_len, "coverage mask");
  std::vector<float> weights(cells);
  for (float& w : weights) w = detail::read_f32(in);
  return weights;
}

}  // namespace foveate::cortex
