#include <fstream>

#include "../binary_io.hpp"
#include "foveate/dcnn.hpp"
#include "foveate/error.hpp"

namespace foveate::dcnn {
namespace {

void write_list(std::ostream& out, const std::vector<int>& values) {
  detail::write_u32(out, static_cast<std::uint32_t>(values.size()));
  for (int v : values) detail::write_u32(out, static_cast<std::uint32_t>(v));
}

std::vector<int> read_list(std::istream& in) {
  const std::uint32_t n = detail::read_u32(in);
  if (n > 4096) throw IoError("implausible layer count in checkpoint");
  std::vector<int> values(n);
  for (int& v : values) v = static_cast<int>(detail::read_u32(in));
  return values;
}

}  // namespace

// Layout: "FNET1", input rows/cols/channels, conv filter list, kernel and
// pool sizes, FC width list, class count, dropout rate, padding mode, seed,
// parameter count, then every parameter as f32 in layer order.
void save_checkpoint(const std::filesystem::path& path, const Network<float>& net) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const NetworkSpec& spec = net.spec();
  const Shape3 in = net.input_shape();
  detail::write_magic(out, "FNET1");
  detail::write_u32(out, static_cast<std::uint32_t>(in.rows));
  detail::write_u32(out, static_cast<std::uint32_t>(in.cols));
  detail::write_u32(out, static_cast<std::uint32_t>(in.channels));
  write_list(out, spec.conv_filters);
  detail::write_u32(out, static_cast<std::uint32_t>(spec.kernel_rows));
  detail::write_u32(out, static_cast<std::uint32_t>(spec.kernel_cols));
  detail::write_u32(out, static_cast<std::uint32_t>(spec.pool_rows));
  detail::write_u32(out, static_cast<std::uint32_t>(spec.pool_cols));
  write_list(out, spec.fc_widths);
  detail::write_u32(out, static_cast<std::uint32_t>(spec.num_classes));
  detail::write_f32(out, static_cast<float>(spec.dropout_rate));
  detail::write_u32(out, spec.padding == Padding::same ? 0u : 1u);
  detail::write_u64(out, net.seed());
  detail::write_u64(out, net.parameter_count());
  for (const auto& p : net.parameters()) {
    for (float v : p.data) detail::write_f32(out, v);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Network<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  detail::expect_magic(in, "FNET1");
  Shape3 input;
  input.rows = static_cast<int>(detail::read_u32(in));
  input.cols = static_cast<int>(detail::read_u32(in));
  input.channels = static_cast<int>(detail::read_u32(in));
  NetworkSpec spec;
  spec.conv_filters = read_list(in);
  spec.kernel_rows = static_cast<int>(detail::read_u32(in));
  spec.kernel_cols = static_cast<int>(detail::read_u32(in));
  spec.pool_rows = static_cast<int>(detail::read_u32(in));
  spec.pool_cols = static_cast<int>(detail::read_u32(in));
  spec.fc_widths = read_list(in);
  spec.num_classes = static_cast<int>(detail::read_u32(in));
  spec.dropout_rate = detail::read_f32(in);
  const std::uint32_t padding = detail::read_u32(in);
  if (padding > 1) throw IoError("unknown padding mode in checkpoint");
  spec.padding = padding == 0 ? Padding::same : Padding::valid;
  const std::uint64_t seed = detail::read_u64(in);
  const std::uint64_t count = detail::read_u64(in);

  Network<float> net(spec, input, seed);
  if (count != net.parameter_count()) throw IoError("checkpoint parameter count does not match its spec");
  for (auto& p : net.parameters()) {
    for (float& v : p.data) v = detail::read_f32(in);
  }
  return net;
}

}  // namespace foveate::dcnn
