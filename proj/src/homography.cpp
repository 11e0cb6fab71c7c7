#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "foveate/error.hpp"
#include "foveate/gaze.hpp"

namespace foveate::gaze {
namespace {

// Hartley normalisation: centroid to the origin, mean distance sqrt(2).
Eigen::Matrix3d normalizing_transform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - mean).norm();
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > 0.0)) throw DegenerateInput("all points coincide");
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return t;
}

bool all_collinear(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvalues();
  return ev(1) <= 0.0 || ev(0) <= 1e-12 * ev(1);
}

Eigen::Vector2d to_xy(PixelPoint p) { return {p.col, p.row}; }

double reprojection_error(const Homography& h, const PointPair& pair) {
  try {
    const PixelPoint q = apply_homography(h, pair.src);
    return std::hypot(q.row - pair.dst.row, q.col - pair.dst.col);
  } catch (const PointAtInfinity&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

Homography Homography::translation(double d_row, double d_col) {
  Homography t;
  t.h(0, 2) = d_col;
  t.h(1, 2) = d_row;
  return t;
}

Homography estimate_homography(const std::vector<PointPair>& pairs) {
  if (pairs.size() < 4) throw InvalidArgument("homography estimation needs at least 4 point pairs");

  std::vector<Eigen::Vector2d> src, dst;
  src.reserve(pairs.size());
  dst.reserve(pairs.size());
  for (const auto& p : pairs) {
    src.push_back(to_xy(p.src));
    dst.push_back(to_xy(p.dst));
  }
  if (all_collinear(src) || all_collinear(dst)) throw DegenerateInput("points are collinear");

  const Eigen::Matrix3d t_src = normalizing_transform(src);
  const Eigen::Matrix3d t_dst = normalizing_transform(dst);

  const Eigen::Index n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d s = t_src * src[i].homogeneous();
    const Eigen::Vector3d d = t_dst * dst[i].homogeneous();
    const double x = s.x() / s.z(), y = s.y() / s.z();
    const double u = d.x() / d.z(), v = d.y() / d.z();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  // A unique solution needs an exactly one-dimensional null space: the
  // eighth singular value must stay clear of zero.
  if (sv.size() < 8 || sv(7) <= 1e-10 * sv(0)) {
    throw DegenerateInput("rank-deficient correspondence system");
  }
  const Eigen::VectorXd hv = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);

  Homography out;
  out.h = t_dst.inverse() * hn * t_src;
  if (std::abs(out.h(2, 2)) < 1e-15 * out.h.norm()) {
    throw DegenerateInput("homography cannot be normalised (h22 == 0)");
  }
  out.h /= out.h(2, 2);
  if (std::abs(out.h.determinant()) < 1e-12) throw DegenerateInput("singular homography");
  return out;
}

RansacResult estimate_homography_ransac(const std::vector<PointPair>& pairs, const RansacConfig& config) {
  if (pairs.size() < 4) throw InvalidArgument("homography estimation needs at least 4 point pairs");
  if (!(config.threshold_px > 0.0) || config.iterations <= 0) {
    throw InvalidArgument("RANSAC needs a positive threshold and iteration count");
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> indices(pairs.size());
  std::iota(indices.begin(), indices.end(), 0);

  auto score = [&](const Homography& h, std::vector<std::uint8_t>& mask) {
    std::size_t count = 0;
    mask.assign(pairs.size(), 0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (reprojection_error(h, pairs[i]) <= config.threshold_px) {
        mask[i] = 1;
        ++count;
      }
    }
    return count;
  };

  RansacResult best;
  std::vector<std::uint8_t> mask;
  std::vector<PointPair> minimal(4);
  for (int it = 0; it < config.iterations; ++it) {
    // Partial Fisher-Yates draw of 4 distinct indices.
    for (std::size_t k = 0; k < 4; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, indices.size() - 1);
      std::swap(indices[k], indices[pick(rng)]);
      minimal[k] = pairs[indices[k]];
    }
    Homography candidate;
    try {
      candidate = estimate_homography(minimal);
    } catch (const DegenerateInput&) {
      continue;
    }
    const std::size_t count = score(candidate, mask);
    if (count > best.inlier_count) {
      best.inlier_count = count;
      best.model = candidate;
      best.inliers = mask;
    }
  }
  if (best.inlier_count < 4) throw DegenerateInput("RANSAC found no consensus set of 4 or more pairs");

  std::vector<PointPair> consensus;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (best.inliers[i]) consensus.push_back(pairs[i]);
  }
  best.model = estimate_homography(consensus);
  best.inlier_count = score(best.model, best.inliers);
  return best;
}

PixelPoint apply_homography(const Homography& h, PixelPoint p) {
  const Eigen::Vector3d q = h.h * Eigen::Vector3d(p.col, p.row, 1.0);
  if (std::abs(q.z()) < 1e-12) throw PointAtInfinity("point maps to infinity under the homography");
  return {q.y() / q.z(), q.x() / q.z()};
}

std::map<std::string, Homography> read_homographies(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open homography file " + path.string());
  std::map<std::string, Homography> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    std::string id;
    Homography hom;
    row >> id;
    for (int k = 0; k < 9; ++k) {
      if (!(row >> hom.h(k / 3, k % 3))) throw ParseError(line_no, "expected observation id and 9 numbers");
    }
    std::string extra;
    if (row >> extra) throw ParseError(line_no, "trailing data after 9 numbers");
    if (std::abs(hom.h(2, 2)) < 1e-15) throw ParseError(line_no, "h22 must be non-zero");
    hom.h /= hom.h(2, 2);
    out[id] = hom;
  }
  return out;
}

void write_homographies(const std::filesystem::path& path, const std::map<std::string, Homography>& hs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  for (const auto& [id, hom] : hs) {
    out << id;
    for (int k = 0; k < 9; ++k) out << ' ' << hom.h(k / 3, k % 3);
    out << '\n';
  }
}

std::vector<PixelPoint> composite_fixations(const std::vector<FixationRecord>& records,
                                            const std::map<std::string, Homography>& homographies,
                                            bool strict) {
  std::vector<PixelPoint> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    const auto it = homographies.find(rec.observation_id);
    if (it == homographies.end()) {
      if (strict) throw ValidationError("no homography for observation '" + rec.observation_id + "'");
      out.push_back(rec.gaze_px);
    } else {
      out.push_back(apply_homography(it->second, rec.gaze_px));
    }
  }
  return out;
}

}  // namespace foveate::gaze
