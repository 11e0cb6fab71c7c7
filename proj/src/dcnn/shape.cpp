#include <string>

#include "foveate/dcnn.hpp"
#include "foveate/error.hpp"

namespace foveate::dcnn {

NetworkSpec reference_spec() { return NetworkSpec{}; }

Shape3 ConvGeometry::output() const {
  if (padding == Padding::same) return {input.rows, input.cols, filters};
  return {input.rows - kernel_rows + 1, input.cols - kernel_cols + 1, filters};
}

std::vector<LayerShape> infer_shapes(const NetworkSpec& spec, Shape3 input) {
  if (input.rows <= 0 || input.cols <= 0 || input.channels <= 0) {
    throw InvalidArgument("input shape must be positive");
  }
  if (spec.kernel_rows <= 0 || spec.kernel_cols <= 0 || spec.pool_rows <= 0 || spec.pool_cols <= 0) {
    throw InvalidArgument("kernel and pool sizes must be positive");
  }
  if (spec.num_classes <= 0) throw InvalidArgument("num_classes must be positive");
  if (!(spec.dropout_rate >= 0.0 && spec.dropout_rate < 1.0)) {
    throw InvalidArgument("dropout_rate must lie in [0, 1)");
  }

  std::vector<LayerShape> trace;
  Shape3 cur = input;
  for (std::size_t i = 0; i < spec.conv_filters.size(); ++i) {
    const std::string idx = std::to_string(i + 1);
    const int filters = spec.conv_filters[i];
    if (filters <= 0) throw InvalidArgument("conv" + idx + ": filter count must be positive");
    ConvGeometry g{cur, filters, spec.kernel_rows, spec.kernel_cols, spec.padding};
    const Shape3 conv_out = g.output();
    if (conv_out.rows <= 0 || conv_out.cols <= 0) {
      throw InvalidArgument("conv" + idx + ": output collapses to zero (input " + std::to_string(cur.rows) + "x" +
                            std::to_string(cur.cols) + ")");
    }
    trace.push_back({"conv" + idx, cur, conv_out, g.patch_size() * filters + filters});
    const Shape3 pool_out{conv_out.rows / spec.pool_rows, conv_out.cols / spec.pool_cols, filters};
    if (pool_out.rows <= 0 || pool_out.cols <= 0) {
      throw InvalidArgument("pool" + idx + ": output collapses to zero (input " + std::to_string(conv_out.rows) +
                            "x" + std::to_string(conv_out.cols) + ")");
    }
    trace.push_back({"pool" + idx, conv_out, pool_out, 0});
    cur = pool_out;
  }

  const Shape3 flat{1, 1, static_cast<int>(cur.size())};
  trace.push_back({"flatten", cur, flat, 0});
  int width = flat.channels;
  for (std::size_t j = 0; j < spec.fc_widths.size(); ++j) {
    const int out = spec.fc_widths[j];
    if (out <= 0) throw InvalidArgument("fc" + std::to_string(j + 1) + ": width must be positive");
    trace.push_back({"fc" + std::to_string(j + 1), {1, 1, width}, {1, 1, out},
                     static_cast<std::size_t>(width) * out + out});
    width = out;
  }
  trace.push_back({"output", {1, 1, width}, {1, 1, spec.num_classes},
                   static_cast<std::size_t>(width) * spec.num_classes + spec.num_classes});
  return trace;
}

std::size_t total_parameters(const std::vector<LayerShape>& trace) {
  std::size_t total = 0;
  for (const auto& layer : trace) total += layer.parameters;
  return total;
}

}  // namespace foveate::dcnn
