#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "foveate/cortex.hpp"
#include "foveate/dcnn.hpp"
#include "foveate/gaze.hpp"
#include "foveate/retina.hpp"

namespace foveate::pipeline {

struct PipelineConfig {
  std::size_t node_count = 50'000;
  double fovea_radius = 0.1;
  double retina_radius_px = 463.0;
  int crop_size = 926;
  ImageDims cortical_dims{399, 752};
  double alpha = 0.05;
  double k_fraction = 0.01;
  std::array<double, 3> split_fractions{0.80, 0.18, 0.02};
  std::uint64_t seed = 0;
  std::optional<int> subsample_factor;
  std::optional<ImageDims> grid_dims;
  double sigma_grid = 1.0;
  double receptive_width = 0.75;
  bool allow_padding = false;
  bool strict_homographies = false;
  bool write_crops = true;
  dcnn::NetworkSpec network = dcnn::reference_spec();
  dcnn::TrainConfig train{64, 0.01, 18, 0};

  // Applies one `key = value` setting; throws InvalidArgument on unknown
  // keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  static const std::vector<std::string>& keys();
};

// Flat "key = value" file; '#' starts a comment.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);
PipelineConfig load_config(const std::filesystem::path& path);

struct StageError {
  std::string stage;
  std::string class_label;
  int cluster = -1;
  std::string message;

  std::string describe() const;
};

struct ClassSummary {
  std::string class_label;
  std::size_t fixations = 0;
  std::size_t clusters = 0;
  std::size_t cortical_images = 0;
};

struct PipelineResult {
  gaze::DatasetManifest manifest;
  std::vector<ClassSummary> classes;
  std::vector<StageError> errors;

  bool ok() const { return errors.empty(); }
};

// Per class: composite -> cluster -> place retina -> crop -> sample ->
// cortical image, then a seeded split over everything produced. Writes
// out_dir/manifest.csv and out_dir/clusters.csv; manifest paths are
// relative to out_dir. Stage failures are recorded and the run continues
// with the next class.
PipelineResult run_pipeline(const PipelineConfig& config, const std::vector<std::filesystem::path>& fixation_logs,
                            const std::filesystem::path& image_dir, const std::filesystem::path& out_dir,
                            const std::map<std::string, gaze::Homography>& homographies = {});

// Renders one imagevector into the configured cortical representation:
// splat on cortical_dims, optionally gridded to grid_dims and/or subsampled.
cortex::CorticalImage render_cortical(const PipelineConfig& config, const retina::ImageVector& iv,
                                      const cortex::CorticalMap& map);

struct BenchReport {
  std::size_t crop_values = 0;  // crop rows * cols * 3
  std::size_t cortical_values = 0;
  std::size_t node_values = 0;
  double inscribed_circle_pixels = 0.0;  // pi * (crop/2)^2
  int subsample_factor = 2;
  ImageDims subsampled_dims;
  ImageDims gridded_dims;
  double crop_to_cortical = 0.0;
  double crop_to_nodes = 0.0;
  double inscribed_to_nodes = 0.0;
  double crop_to_subsampled = 0.0;
  double crop_to_gridded = 0.0;
};

// Pure arithmetic over the configured geometry. Unset subsample factor and
// grid dims fall back to 2 and (230, 345).
BenchReport bench_reduction(const PipelineConfig& config);
std::string format_bench(const BenchReport& report);

// ---------------------------------------------------------------------------
// Visualisation
// ---------------------------------------------------------------------------

struct TessellationRender {
  Image image;
  std::size_t dots = 0;
};

// White canvas, one filled dot per node with radius proportional to its
// receptive-field sigma.
TessellationRender render_tessellation(const retina::RetinaTessellation& tess, int canvas_size = 1024,
                                       double width_factor = 0.75);

}  // namespace foveate::pipeline
