#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace foveate {

// Image-space position. Rows grow downward, columns to the right, and pixel
// centres sit at integer coordinates.
struct PixelPoint {
  double row = 0.0;
  double col = 0.0;

  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

struct ImageDims {
  int rows = 0;
  int cols = 0;

  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

// Interleaved (row, col, channel) image with real values, nominally in [0,1].
class Image {
 public:
  Image() = default;
  Image(int rows, int cols, int channels, float fill = 0.0f);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return channels_; }
  ImageDims dims() const { return {rows_, cols_}; }
  bool empty() const { return data_.empty(); }

  float& at(int row, int col, int ch) {
    return data_[(static_cast<std::size_t>(row) * cols_ + col) * channels_ + ch];
  }
  float at(int row, int col, int ch) const {
    return data_[(static_cast<std::size_t>(row) * cols_ + col) * channels_ + ch];
  }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// 8-bit PNG input/output. Any PNG colour type is expanded to 8-bit RGB on
// read; values are mapped to [0,1] as value/255. On write, values are
// clamped to [0,1] and rounded to the nearest 8-bit level.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace foveate
