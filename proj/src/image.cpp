#include "foveate/image.hpp"

#include "foveate/error.hpp"

namespace foveate {

Image::Image(int rows, int cols, int channels, float fill)
    : rows_(rows), cols_(cols), channels_(channels) {
  if (rows < 0 || cols < 0 || channels <= 0) {
    throw InvalidArgument("image dimensions must be non-negative with at least one channel");
  }
  data_.assign(static_cast<std::size_t>(rows) * cols * channels, fill);
}

}  // namespace foveate
