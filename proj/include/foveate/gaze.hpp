#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "foveate/image.hpp"

namespace foveate::gaze {

inline const std::vector<std::string> kDefaultClasses = {
    "Eggs", "Gnocchi", "Juice", "Ling", "Milk", "Rice", "Strep", "VitC", "Yogurt"};

// ---------------------------------------------------------------------------
// Fixation logs
// ---------------------------------------------------------------------------

struct FixationRecord {
  std::string observation_id;
  long long frame_index = 0;
  long long timestamp_ms = 0;
  PixelPoint gaze_px;
  std::string class_label;
  std::string image_path;
};

inline constexpr const char* kFixationLogHeader =
    "observation_id,frame_index,timestamp_ms,gaze_row,gaze_col,class_label,image_path";

// Reads a fixation CSV. When `classes` is given, labels outside it raise
// ValidationError.
std::vector<FixationRecord> parse_fixation_log(const std::filesystem::path& path,
                                               const std::vector<std::string>* classes = nullptr);
void write_fixation_log(const std::filesystem::path& path, const std::vector<FixationRecord>& records);

// ---------------------------------------------------------------------------
// Homographies
// ---------------------------------------------------------------------------

// 3x3 projective transform acting on homogeneous (col, row, 1) vectors,
// normalised so h(2,2) == 1.
struct Homography {
  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();

  static Homography identity() { return {}; }
  static Homography translation(double d_row, double d_col);
};

struct PointPair {
  PixelPoint src;
  PixelPoint dst;
};

struct RansacConfig {
  double threshold_px = 3.0;
  int iterations = 1000;
  std::uint64_t seed = 0;
};

struct RansacResult {
  Homography model;
  std::vector<std::uint8_t> inliers;
  std::size_t inlier_count = 0;
};

// Normalised DLT over all pairs.
Homography estimate_homography(const std::vector<PointPair>& pairs);
RansacResult estimate_homography_ransac(const std::vector<PointPair>& pairs, const RansacConfig& config);

PixelPoint apply_homography(const Homography& h, PixelPoint p);

// Text: "<observation_id> h00 h01 h02 h10 h11 h12 h20 h21 h22" per line.
std::map<std::string, Homography> read_homographies(const std::filesystem::path& path);
void write_homographies(const std::filesystem::path& path, const std::map<std::string, Homography>& hs);

// Maps every gaze point into the reference frame, preserving order.
// Observations without a homography use the identity unless `strict`.
std::vector<PixelPoint> composite_fixations(const std::vector<FixationRecord>& records,
                                            const std::map<std::string, Homography>& homographies,
                                            bool strict = false);

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

// Counter-clockwise (in the row/col plane) monotone-chain hull with collinear
// boundary points removed. Collinear input yields its two extremes.
std::vector<PixelPoint> convex_hull(std::vector<PixelPoint> points);

// Signed distance of p from the directed edge a->b; positive on the hull's
// interior side.
double edge_signed_distance(PixelPoint a, PixelPoint b, PixelPoint p);

struct FixationCluster {
  std::vector<std::size_t> member_indices;
  PixelPoint centroid_px;
  std::vector<PixelPoint> hull_px;
};

struct KMeansOptions {
  double k_fraction = 0.01;
  std::uint64_t seed = 0;
  int max_iterations = 100;
  double tolerance_px = 1e-4;
  std::optional<std::size_t> k_override;  // bypasses the fraction rule
};

struct ClusteringResult {
  std::vector<FixationCluster> clusters;
  std::vector<std::size_t> assignment;  // cluster index per point
  std::vector<double> objective_history;
  int iterations = 0;
};

// max(1, round-half-up(k_fraction * m)), capped at m.
std::size_t cluster_count(std::size_t m, double k_fraction);

ClusteringResult kmeans(const std::vector<PixelPoint>& points, const KMeansOptions& options);
std::vector<FixationCluster> cluster_fixations(const std::vector<PixelPoint>& points,
                                               double k_fraction = 0.01, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Retina placement and crops
// ---------------------------------------------------------------------------

struct CropRect {
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;

  friend bool operator==(const CropRect&, const CropRect&) = default;
};

struct Placement {
  CropRect rect;
  PixelPoint fixation_px;           // retina centre in image coordinates
  bool hull_outside_retina = false;  // some hull vertex escapes the inscribed circle
};

Placement place_retina(const FixationCluster& cluster, ImageDims image_dims, int crop_size = 926,
                       bool allow_padding = false);

Image extract_crop(const Image& image, const CropRect& rect, bool allow_padding = false);

// ---------------------------------------------------------------------------
// Dataset splits
// ---------------------------------------------------------------------------

enum class Split : std::uint8_t { train, val, test };
const char* split_name(Split s);
Split parse_split(const std::string& s);

struct LabeledItem {
  std::string path;
  std::string class_label;
};

struct ManifestEntry {
  std::string path;
  std::string class_label;
  Split split = Split::train;
};

struct DatasetManifest {
  std::vector<std::string> classes = kDefaultClasses;
  std::vector<ManifestEntry> entries;
  std::array<double, 3> split_fractions{0.80, 0.18, 0.02};
  std::uint64_t seed = 0;
};

// Largest-remainder apportionment of n items; ties go to the earlier split.
std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& fractions);

// Per-class seeded shuffle then largest-remainder split. Classes are taken
// in `classes` order (default: order of first appearance).
DatasetManifest split_dataset(const std::vector<LabeledItem>& items,
                              const std::array<double, 3>& fractions = {0.80, 0.18, 0.02},
                              std::uint64_t seed = 0,
                              const std::vector<std::string>* classes = nullptr);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace foveate::gaze
