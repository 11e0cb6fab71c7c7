#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "foveate/gaze.hpp"
#include "foveate/image.hpp"
#include "foveate/retina.hpp"

namespace testing {

namespace fs = std::filesystem;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline foveate::Image random_image(int rows, int cols, int channels, std::mt19937_64& rng) {
  foveate::Image img(rows, cols, channels);
  for (float& v : img.data()) v = static_cast<float>(uniform(rng, 0.0, 1.0));
  return img;
}

// Fresh scratch directory under the build tree's temp area.
inline fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("foveate_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Sets FOVEATE_THREADS for the lifetime of the object.
class ThreadOverride {
 public:
  explicit ThreadOverride(int n) {
    if (const char* old = std::getenv("FOVEATE_THREADS")) old_ = old;
    setenv("FOVEATE_THREADS", std::to_string(n).c_str(), 1);
  }
  ~ThreadOverride() {
    if (old_.empty()) unsetenv("FOVEATE_THREADS");
    else setenv("FOVEATE_THREADS", old_.c_str(), 1);
  }

 private:
  std::string old_;
};

// O(N^2) nearest-neighbour distances, independent of the library's grid search.
inline std::vector<double> brute_nearest(const std::vector<foveate::retina::Vec2>& nodes) {
  std::vector<double> out(nodes.size(), 1.0);
  if (nodes.size() < 2) return out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    double best = INFINITY;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      if (i == j) continue;
      best = std::min(best, std::hypot(nodes[i].x - nodes[j].x, nodes[i].y - nodes[j].y));
    }
    out[i] = best;
  }
  return out;
}

// Dense double loop over every image pixel for every node: the Gaussian is
// evaluated directly, truncated at 3 sigma, and renormalised over the pixels
// that fall inside the image. Returns node-major values; -1 marks empty nodes.
inline std::vector<double> brute_force_sample(const foveate::Image& image, const std::vector<foveate::retina::Vec2>& nodes,
                                              double radius_px, foveate::PixelPoint fixation, double width = 0.75) {
  const auto nn = brute_nearest(nodes);
  const int ch = image.channels();
  std::vector<double> out(nodes.size() * ch, 0.0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double cr = fixation.row - radius_px * nodes[i].y;
    const double cc = fixation.col + radius_px * nodes[i].x;
    const double sigma = std::max(width * nn[i] * radius_px, 0.25);
    double wsum = 0.0;
    std::vector<double> acc(ch, 0.0);
    for (int r = 0; r < image.rows(); ++r) {
      for (int c = 0; c < image.cols(); ++c) {
        const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
        if (d2 > 9.0 * sigma * sigma) continue;
        const double w = std::exp(-d2 / (2.0 * sigma * sigma));
        wsum += w;
        for (int k = 0; k < ch; ++k) acc[k] += w * image.at(r, c, k);
      }
    }
    for (int k = 0; k < ch; ++k) out[i * ch + k] = wsum > 0.0 ? acc[k] / wsum : -1.0;
  }
  return out;
}

// Smooth colour pattern in [0,1] that is a function of position relative to
// `centre`, rotated by `angle` radians (counter-clockwise on screen).
inline foveate::Image smooth_pattern(int rows, int cols, foveate::PixelPoint centre, double angle, double scale) {
  foveate::Image img(rows, cols, 3);
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      // Screen coordinates with y up, then rotate back into the pattern frame.
      const double x = (c - centre.col) / scale;
      const double y = (centre.row - r) / scale;
      const double px = ca * x + sa * y;
      const double py = -sa * x + ca * y;
      img.at(r, c, 0) = static_cast<float>(0.5 + 0.4 * std::sin(2.0 * px + 0.5));
      img.at(r, c, 1) = static_cast<float>(0.5 + 0.4 * std::cos(1.5 * py - 0.3));
      img.at(r, c, 2) = static_cast<float>(0.5 + 0.3 * std::sin(1.2 * (px + py)));
    }
  }
  return img;
}

// Nine visually distinct class images plus fixation logs: two observations
// per class, the second recorded in a frame shifted by (d_row, d_col), so a
// translation homography maps it back to the reference image.
struct SyntheticScene {
  std::vector<std::string> classes;
  std::vector<fs::path> logs;
  fs::path image_dir;
  std::map<std::string, foveate::gaze::Homography> homographies;
  std::map<std::string, std::size_t> fixations_per_class;
};

inline foveate::Image class_image(int index, int rows, int cols) {
  foveate::Image img(rows, cols, 3);
  const double f = 0.01 + 0.004 * index;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      img.at(r, c, 0) = static_cast<float>(0.5 + 0.45 * std::sin(f * c + index));
      img.at(r, c, 1) = static_cast<float>(0.5 + 0.45 * std::cos(f * r * (1 + index % 3)));
      img.at(r, c, 2) = static_cast<float>(((r / (40 + 8 * index) + c / (40 + 8 * index)) % 2) * 0.8 + 0.1);
    }
  }
  return img;
}

inline SyntheticScene make_scene(const fs::path& root, int image_size, std::uint64_t seed,
                                 const std::vector<std::size_t>& fixation_counts) {
  SyntheticScene scene;
  scene.classes = foveate::gaze::kDefaultClasses;
  scene.image_dir = root / "images";
  fs::create_directories(scene.image_dir);
  std::mt19937_64 rng(seed);
  const double d_row = 12.0;
  const double d_col = -20.0;
  for (std::size_t k = 0; k < scene.classes.size(); ++k) {
    const std::string& label = scene.classes[k];
    const std::string image_name = label + ".png";
    foveate::write_png(scene.image_dir / image_name, class_image(static_cast<int>(k), image_size, image_size));

    std::vector<foveate::gaze::FixationRecord> records;
    const std::size_t m = fixation_counts[k % fixation_counts.size()];
    // Two gaze blobs per class image.
    const foveate::PixelPoint blobs[2] = {{image_size * 0.35, image_size * 0.40}, {image_size * 0.62, image_size * 0.58}};
    std::normal_distribution<double> noise(0.0, image_size * 0.03);
    for (std::size_t i = 0; i < m; ++i) {
      const bool second_obs = i % 2 == 1;
      const auto& b = blobs[(i / 2) % 2];
      foveate::gaze::FixationRecord rec;
      rec.observation_id = label + (second_obs ? "_obs2" : "_obs1");
      rec.frame_index = static_cast<long long>(i);
      rec.timestamp_ms = static_cast<long long>(i) * 33;
      rec.gaze_px = {b.row + noise(rng), b.col + noise(rng)};
      // The second observation's frame is offset; its homography undoes it.
      if (second_obs) rec.gaze_px = {rec.gaze_px.row - d_row, rec.gaze_px.col - d_col};
      rec.class_label = label;
      rec.image_path = image_name;
      records.push_back(rec);
    }
    scene.fixations_per_class[label] = m;
    scene.homographies[label + "_obs1"] = foveate::gaze::Homography::identity();
    scene.homographies[label + "_obs2"] = foveate::gaze::Homography::translation(d_row, d_col);
    const fs::path log = root / ("fixations_" + label + ".csv");
    foveate::gaze::write_fixation_log(log, records);
    scene.logs.push_back(log);
  }
  return scene;
}

}  // namespace testing
