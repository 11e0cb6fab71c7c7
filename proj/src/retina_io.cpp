#include <fstream>
#include <sstream>
#include <string>

#include "binary_io.hpp"
#include "foveate/error.hpp"
#include "foveate/retina.hpp"

namespace foveate::retina {

void write_tessellation(const std::filesystem::path& path, const RetinaTessellation& tess) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "RETINA v1 " << tess.node_count() << ' ' << tess.fovea_radius << '\n';
  for (const Vec2& n : tess.nodes) out << n.x << ' ' << n.y << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

RetinaTessellation read_tessellation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing RETINA header");

  std::istringstream header(line);
  std::string tag, version;
  std::size_t count = 0;
  RetinaTessellation tess;
  if (!(header >> tag >> version >> count >> tess.fovea_radius) || tag != "RETINA" || version != "v1") {
    throw ParseError(1, "expected 'RETINA v1 <node_count> <fovea_radius>'");
  }

  tess.nodes.reserve(count);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    Vec2 node;
    std::string extra;
    if (!(row >> node.x >> node.y) || (row >> extra)) throw ParseError(line_no, "expected 'x y'");
    if (node.x * node.x + node.y * node.y > 1.0 + 1e-12) {
      throw ParseError(line_no, "node lies outside the unit field of view");
    }
    tess.nodes.push_back(node);
  }
  if (tess.nodes.size() != count) {
    throw ParseError(line_no, "header declares " + std::to_string(count) + " nodes, found " +
                                  std::to_string(tess.nodes.size()));
  }
  tess.nearest_neighbor_dist = nearest_neighbor_distances(tess.nodes);
  return tess;
}

void write_image_vector(const std::filesystem::path& path, const ImageVector& iv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  detail::write_magic(out, "RIV1");
  detail::write_u32(out, static_cast<std::uint32_t>(iv.node_count));
  detail::write_u32(out, static_cast<std::uint32_t>(iv.channels));
  detail::write_u32(out, static_cast<std::uint32_t>(iv.valid.size()));
  out.write(reinterpret_cast<const char*>(iv.valid.data()), static_cast<std::streamsize>(iv.valid.size()));
  for (double v : iv.values) detail::write_f32(out, static_cast<float>(v));
  if (!out) throw IoError("failed writing " + path.string());
}

ImageVector read_image_vector(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  detail::expect_magic(in, "RIV1");
  ImageVector iv;
  iv.node_count = detail::read_u32(in);
  iv.channels = detail::read_u32(in);
  const std::uint32_t mask_len = detail::read_u32(in);
  if (mask_len != 0 && mask_len != iv.node_count) throw IoError("validity mask length mismatch");
  iv.valid.resize(mask_len);
  detail::read_exact(in, iv.valid.data(), mask_len, "validity mask");
  if (mask_len == 0) iv.valid.assign(iv.node_count, 1);
  iv.values.resize(iv.node_count * iv.channels);
  for (double& v : iv.values) v = detail::read_f32(in);
  return iv;
}

}  // namespace foveate::retina
