#include <algorithm>
#include <cmath>

#include "foveate/error.hpp"
#include "foveate/pipeline.hpp"

namespace foveate::pipeline {

TessellationRender render_tessellation(const retina::RetinaTessellation& tess, int canvas_size, double width_factor) {
  if (canvas_size < 2) throw InvalidArgument("canvas must be at least 2 pixels");
  TessellationRender out{Image(canvas_size, canvas_size, 3, 1.0f), 0};
  const double centre = (canvas_size - 1) / 2.0;
  const double scale = centre;
  for (std::size_t i = 0; i < tess.nodes.size(); ++i) {
    const auto& n = tess.nodes[i];
    const double cr = centre - scale * n.y;
    const double cc = centre + scale * n.x;
    // Half a sigma keeps neighbouring dots apart.
    const double radius = 0.5 * width_factor * tess.nearest_neighbor_dist[i] * scale;
    const int r0 = std::max(0, static_cast<int>(std::floor(cr - radius)));
    const int r1 = std::min(canvas_size - 1, static_cast<int>(std::ceil(cr + radius)));
    const int c0 = std::max(0, static_cast<int>(std::floor(cc - radius)));
    const int c1 = std::min(canvas_size - 1, static_cast<int>(std::ceil(cc + radius)));
    bool painted = false;
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const double dr = r - cr;
        const double dc = c - cc;
        if (dr * dr + dc * dc > radius * radius) continue;
        for (int ch = 0; ch < 3; ++ch) out.image.at(r, c, ch) = 0.0f;
        painted = true;
      }
    }
    if (!painted) {
      const int r = std::clamp(static_cast<int>(std::lround(cr)), 0, canvas_size - 1);
      const int c = std::clamp(static_cast<int>(std::lround(cc)), 0, canvas_size - 1);
      for (int ch = 0; ch < 3; ++ch) out.image.at(r, c, ch) = 0.0f;
    }
    ++out.dots;
  }
  return out;
}

}  // namespace foveate::pipeline
